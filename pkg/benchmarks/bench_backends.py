"""Timing comparison of the numba and numpy kernel backends.

Measures a full training step (forward + backward + clip + Adam) at two
batch shapes, and single-image greedy decoding, which is where the
compiled per-step cell pays off. Also cross-checks that both backends
agree on losses and gradients to floating-point tolerance.

Run:  python benchmarks/bench_backends.py
"""

import time

import numpy as np

from njm import backend, model, nn
from njm.funny_score import FunnyScorePolicy
from njm.trainer import TrainingConfig


def train_step(params, batch, policy, adam, clip_norm):
    value, _, grads = model.forward_backward(params, batch, policy)
    nn.clip_global_norm(grads, clip_norm)
    nn.adam_step(params, grads, adam)
    return value


def time_fn(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def setup(n, feat_dim, d, h, v, seed=0):
    rng = np.random.default_rng(seed)
    params = model.init_params(feat_dim, d, h, v, rng)
    batch = model.random_batch(feat_dim, v, n, rng, min_words=4, max_words=9)
    adam = nn.AdamState.init(params)
    return params, batch, adam


def agreement_check(shape):
    n, feat_dim, d, h, v = shape
    policy = FunnyScorePolicy(mode="weighted")
    results = {}
    for name in ("numpy", "numba"):
        backend.use(name)
        backend.warmup()
        rng = np.random.default_rng(7)
        params = model.init_params(feat_dim, d, h, v, rng)
        batch = model.random_batch(feat_dim, v, n, rng)
        value, _, grads = model.forward_backward(params, batch, policy)
        results[name] = (value, grads)
    v_np, g_np = results["numpy"]
    v_nb, g_nb = results["numba"]
    assert abs(v_np - v_nb) < 1e-10, (v_np, v_nb)
    for name in g_np:
        assert np.allclose(g_np[name], g_nb[name], rtol=1e-9, atol=1e-12), name
    print(f"backend agreement OK at {shape} (loss diff {abs(v_np - v_nb):.2e})")


def main():
    if not backend.HAS_NUMBA:
        print("numba unavailable; nothing to compare")
        return
    shapes = [
        ("small batch", (8, 16, 32, 32, 120)),
        ("large batch", (64, 64, 128, 128, 400)),
    ]
    policy = FunnyScorePolicy(mode="weighted")
    clip = TrainingConfig(feat_dim=16).clip_norm
    agreement_check(shapes[0][1])

    print(f"\n{'case':<28} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for label, (n, feat_dim, d, h, v) in shapes:
        times = {}
        for name in ("numpy", "numba"):
            backend.use(name)
            backend.warmup()
            params, batch, adam = setup(n, feat_dim, d, h, v)
            fn = lambda: train_step(params, batch, policy, adam, clip)
            fn()      # one shakeout step outside the timer
            times[name] = time_fn(fn, repeat=20)
        print(f"{'train step, ' + label:<28} {times['numpy'] * 1e3:>10.2f}ms "
              f"{times['numba'] * 1e3:>10.2f}ms {times['numpy'] / times['numba']:>8.2f}x")

    n, feat_dim, d, h, v = 1, 64, 128, 128, 400
    times = {}
    for name in ("numpy", "numba"):
        backend.use(name)
        backend.warmup()
        rng = np.random.default_rng(3)
        params = model.init_params(feat_dim, d, h, v, rng)
        feats = rng.standard_normal(feat_dim)
        fn = lambda: model.decode_greedy(params, feats, max_len=20)
        fn()
        times[name] = time_fn(fn, repeat=20)
    print(f"{'greedy decode, 1 image':<28} {times['numpy'] * 1e3:>10.2f}ms "
          f"{times['numba'] * 1e3:>10.2f}ms {times['numpy'] / times['numba']:>8.2f}x")


if __name__ == "__main__":
    main()
