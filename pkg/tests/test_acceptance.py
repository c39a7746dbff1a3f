"""Acceptance suite: nine go/no-go checks with fixed tolerances.

Each test prints one PASS/FAIL line so the verdicts survive in plain
pytest output. Timed checks run after the session-level backend warmup
in conftest, so JIT compilation never counts against a budget.
"""
import math
import time

import numpy as np

import oracles
from njm import corpus as corpus_mod
from njm import evaluate, funny_score, model, trainer


def _verdict(capsys, ok, label, detail):
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


def _toy_corpus(seed=11, n_images=4, captions_per=2, dim=8):
    corpus, _ = corpus_mod.generate_synthetic_corpus(
        seed=seed, n_images=n_images, captions_per_image=captions_per, dim=dim)
    return corpus


def test_acceptance_1_gradient_correctness(capsys):
    t0 = time.perf_counter()
    err = model.gradient_check(dims=(4, 4, 4, 8), epsilon=1e-4, n_records=2)
    elapsed = time.perf_counter() - t0
    ok = err < 1e-4 and elapsed < 10.0
    _verdict(capsys, ok, "criterion 1 gradient correctness",
             f"max rel error {err:.3e} (< 1e-4), {elapsed:.2f}s (< 10s)")


def test_acceptance_2_funny_score_inertness(capsys):
    literal = funny_score.FunnyScorePolicy(mode="literal")
    uniform = funny_score.FunnyScorePolicy(mode="uniform")
    rng = np.random.default_rng(7)
    params = model.init_params(6, 16, 16, 30, rng)
    grads_identical = True
    worst_gap = 0.0
    t0 = time.perf_counter()
    for _ in range(20):
        batch = model.random_batch(6, 30, 8, rng)
        loss_l, rep, g_l = model.forward_backward(params, batch, literal)
        loss_u, _, g_u = model.forward_backward(params, batch, uniform)
        grads_identical &= all(g_l[k].tobytes() == g_u[k].tobytes()
                               for k in model.PARAM_NAMES)
        expected = literal.offset * rep.n_high / len(batch.steps)
        worst_gap = max(worst_gap, abs((loss_u - loss_l) - expected))
    elapsed = time.perf_counter() - t0
    ok = grads_identical and worst_gap <= 1e-12 and elapsed < 10.0
    _verdict(capsys, ok, "criterion 2 funny score inertness",
             f"20 batches, grads bitwise identical={grads_identical}, "
             f"max |loss gap - offset*n_high/n| {worst_gap:.2e} (<= 1e-12), "
             f"{elapsed:.2f}s (< 10s)")


def test_acceptance_3_literal_rule_semantics(capsys):
    policy = funny_score.FunnyScorePolicy(mode="literal")
    vals = (funny_score.example_transform(2.5, 99, policy),
            funny_score.example_transform(2.5, 150, policy),
            funny_score.example_transform(2.5, 100, policy))
    ok = vals == (2.5, 1.5, 1.5)
    _verdict(capsys, ok, "criterion 3 literal rule",
             f"stars 99/150/100 -> {vals} (want (2.5, 1.5, 1.5), exact)")


def test_acceptance_4_uniform_model_analytic(capsys):
    corpus = _toy_corpus(seed=4, n_images=6, captions_per=3)
    v = corpus.vocab.size
    params = {k: np.zeros(s) for k, s in
              model.param_shapes(corpus.dim, 12, 12, v).items()}
    batch = model.make_batch(corpus, range(len(corpus.records)))
    losses, _ = model.forward_batch(params, batch)
    loss_err = float(np.max(np.abs(losses - math.log(v))))

    config = trainer.TrainingConfig(feat_dim=corpus.dim, embed_dim=12,
                                    hidden_dim=12, epochs=0)
    ckpt, _ = trainer.train(config, corpus)
    ckpt.params = params
    report = evaluate.eval_buckets(ckpt, corpus)
    ppl_err = max(abs(report.ppl_overall - v), abs(report.ppl_high - v),
                  abs(report.ppl_low - v))
    ok = loss_err <= 1e-10 and ppl_err <= 1e-10
    _verdict(capsys, ok, "criterion 4 uniform-model analytic",
             f"V={v}, max |loss - ln V| {loss_err:.2e}, "
             f"max |ppl - V| {ppl_err:.2e} (both <= 1e-10)")


def test_acceptance_5_overfit_capability(capsys):
    # 8 distinct images, one caption each: fully memorizable (two captions
    # sharing one feature vector would leave an irreducible branch point)
    corpus = _toy_corpus(seed=11, n_images=8, captions_per=1)
    assert len(corpus.records) == 8
    config = trainer.TrainingConfig(feat_dim=corpus.dim, embed_dim=32,
                                    hidden_dim=32, seed=11, epochs=500,
                                    batch_size=8, lr=0.01)
    t0 = time.perf_counter()
    ckpt, metrics = trainer.train(config, corpus)
    elapsed = time.perf_counter() - t0
    batch = model.make_batch(corpus, range(8))
    losses, _ = model.forward_batch(ckpt.params, batch)
    final = float(np.mean(losses))
    ok = len(metrics) <= 500 and final < 0.05 and elapsed < 60.0
    _verdict(capsys, ok, "criterion 5 overfit capability",
             f"8 records, {len(metrics)} steps (<= 500), final mean token "
             f"loss {final:.4f} (< 0.05), {elapsed:.1f}s (< 60s)")


def test_acceptance_6_weighted_policy_efficacy(capsys):
    t0 = time.perf_counter()
    result = evaluate.run_experiment({"seeds": list(range(10))})
    elapsed = time.perf_counter() - t0
    grid = result.grid
    assert grid["images"] * grid["captions_per"] == 2000
    assert grid["frac_high"] == 0.3
    assert grid["w_high"] == 2.0 and grid["w_low"] == 1.0
    by_cell = {(r["policy"], r["seed"]): r["ppl_high"] for r in result.rows}
    wins = sum(1 for s in range(10)
               if by_cell[("weighted", s)] < by_cell[("uniform", s)])
    ok = wins >= 9 and elapsed < 600.0
    _verdict(capsys, ok, "criterion 6 weighted policy efficacy",
             f"n=2000 frac_high=0.3, weighted lower held-out high-bucket "
             f"ppl in {wins}/10 paired seeds (>= 9), {elapsed:.0f}s (< 600s)")


def test_acceptance_7_decoding_oracle(capsys):
    v, max_len, width = 5, 3, 200
    assert width >= v ** max_len
    rng = np.random.default_rng(21)
    params = model.init_params(4, 6, 6, v, rng)
    ok = True
    for trial in range(6):
        feats = rng.standard_normal(4)
        brute = oracles.all_decode_sequences(params, feats, max_len)
        beam = model.decode_beam(params, feats, width=width, max_len=max_len)
        ok &= tuple(beam[0].tokens) == brute[0][1]
        ok &= [tuple(r.tokens) for r in beam] == [t for _, t in brute]
        ok &= all(abs(r.log_prob - s) <= 1e-10
                  for r, (s, _) in zip(beam, brute))
        greedy = model.decode_greedy(params, feats, max_len=max_len)
        one = model.decode_beam(params, feats, width=1, max_len=max_len)[0]
        ok &= one.tokens == greedy.tokens and one.log_prob == greedy.log_prob
    _verdict(capsys, ok, "criterion 7 decoding oracle",
             f"beam({width}) == brute force over V={v}, max_len={max_len} "
             f"and beam(1) == greedy, 6 feature draws, exact")


def test_acceptance_8_determinism_and_persistence(capsys, tmp_path):
    corpus = _toy_corpus(seed=8, n_images=10, captions_per=2)
    config = trainer.TrainingConfig(feat_dim=corpus.dim, embed_dim=12,
                                    hidden_dim=12, seed=3, epochs=2,
                                    batch_size=4)
    same_seed = True
    ckpt_a, _ = trainer.train(config, corpus)
    ckpt_b, _ = trainer.train(config, corpus)
    for k in model.PARAM_NAMES:
        same_seed &= ckpt_a.params[k].tobytes() == ckpt_b.params[k].tobytes()

    path = tmp_path / "a.njmc"
    trainer.save_checkpoint(ckpt_a, path)
    loaded = trainer.load_checkpoint(path)
    roundtrip = all(ckpt_a.params[k].tobytes() == loaded.params[k].tobytes()
                    for k in model.PARAM_NAMES)
    roundtrip &= all(
        getattr(ckpt_a.adam, mom)[k].tobytes() ==
        getattr(loaded.adam, mom)[k].tobytes()
        for mom in ("m", "v") for k in model.PARAM_NAMES)
    roundtrip &= ckpt_a.adam.t == loaded.adam.t

    part, _ = trainer.train(config, corpus, max_steps=7)
    part_path = tmp_path / "part.njmc"
    trainer.save_checkpoint(part, part_path)
    resumed, _ = trainer.train(config, corpus,
                               resume_from=trainer.load_checkpoint(part_path))
    resume_ok = all(ckpt_a.params[k].tobytes() == resumed.params[k].tobytes()
                    for k in model.PARAM_NAMES)

    man, feats = tmp_path / "m.jsonl", tmp_path / "f.bin"
    corpus_mod.save_corpus(corpus, man, feats)
    back = corpus_mod.load_corpus(man, feats)
    corpus_ok = all(back.features[k].tobytes() == corpus.features[k].tobytes()
                    for k in corpus.features)
    corpus_ok &= ([(r.image_id, r.stars, r.caption) for r in back.records] ==
                  [(r.image_id, r.stars, r.caption) for r in corpus.records])
    ok = same_seed and roundtrip and resume_ok and corpus_ok
    _verdict(capsys, ok, "criterion 8 determinism and persistence",
             f"same-seed bitwise={same_seed}, checkpoint roundtrip={roundtrip}, "
             f"resume == straight-through={resume_ok}, corpus "
             f"roundtrip={corpus_ok}")


def test_acceptance_9_corpus_scale_fidelity(capsys):
    import inspect
    sig = inspect.signature(corpus_mod.generate_synthetic_corpus)
    default = sig.parameters["captions_per_image"].default
    corpus, _ = corpus_mod.generate_synthetic_corpus(seed=0, n_images=5)
    per_image = len(corpus.records) / 5
    ok = default == 14 and per_image == 14
    _verdict(capsys, ok, "criterion 9 corpus-scale fidelity",
             f"captions_per_image default {default}, generated ratio "
             f"{per_image:.0f} (want exactly 14)")
