"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with its elapsed time. Run with `pytest -s tests/test_acceptance.py`
to see the lines, or plain pytest for the verdict.

Criteria covered:
  A1 repeater anchors            A5 cascade wiring
  A2 frame-count oracle          A6 overfit smoke (3 variants)
  A3 gradient suite              A7 metrics sanity
  A4 parallel equivalence        A8 pipeline determinism
"""

import math
import time

import numpy as np
import pytest

from saltts import nncore
from saltts.align import (
    FS2_SPEC,
    SSL_SPEC,
    build_schedule,
    target_frame_count,
)
from saltts.cli import main as cli_main
from saltts.config import ModelConfig, format_kv
from saltts.evaluate import MCD_SCALE, evaluate, log_f0_rmse, mcd
from saltts.features import gen_synthetic_corpus
from saltts.model import aux_loss, build_model, count_inference_parameters
from saltts.nncore import ops
from saltts.nncore.tensor import Parameter
from saltts.train import TrainConfig, Trainer, learning_rate, load_model, train_step

from conftest import make_batch, small_config
from test_align import nearest_center_count
from test_evaluate import naive_masked_rmse, naive_mcd


class Criterion:
    def __init__(self, name: str, budget: str):
        self.name = name
        self.budget = budget
        self.start = time.time()

    def done(self):
        elapsed = time.time() - self.start
        print(f"ACCEPTANCE PASS: {self.name} ({elapsed:.2f}s, budget {self.budget})")


def overfit_config(variant="baseline", **kw) -> ModelConfig:
    base = dict(
        vocab_size=12, adapter_dim=16, encoder_layers=1, decoder_layers=1,
        heads=2, conv_kernel=3, ffn_hidden=32, n_mels=16, variant=variant,
        ssl_dim=16, projector_hidden=16, ssl_predictor_layers=1, ssl_heads=2,
        dropout=0.0, n_bins=32, seed=42,
    )
    base.update(kw)
    return ModelConfig(**base)


# ----------------------------------------------------------------- A1


def test_a1_repeater_anchors():
    c = Criterion("repeater anchors", "< 1 s")
    sched = build_schedule(5)
    assert sched.dst_len == 7
    assert sched.src_indices().tolist() == [0, 1, 1, 2, 3, 3, 4]
    for k in range(11):
        assert build_schedule(5 + 18 * k).dst_len == 7 + 31 * k, f"k={k}"
    c.done()


# ----------------------------------------------------------------- A2


def test_a2_frame_count_oracle_equivalence():
    c = Criterion("frame-count oracle equivalence", "< 5 s")
    for n_src in range(1, 1001):
        closed = target_frame_count(SSL_SPEC, FS2_SPEC, n_src)
        brute = nearest_center_count(SSL_SPEC, FS2_SPEC, n_src)
        assert closed == brute, f"n_src={n_src}: {closed} != {brute}"
    c.done()


# ----------------------------------------------------------------- A3


def _op_checks():
    rng = np.random.default_rng(1234)

    def affine_case():
        x = Parameter(rng.normal(size=(1, 3, 4)))
        w = Parameter(rng.normal(size=(4, 3)))
        b = Parameter(rng.normal(size=(3,)))
        r = rng.normal(size=(1, 3, 3))
        return (lambda: ops.sum_(ops.mul_const(ops.affine(x, w, b), r)),
                [x, w, b])

    def layer_norm_case():
        x = Parameter(rng.normal(size=(2, 3, 4)))
        g = Parameter(rng.normal(size=4))
        bt = Parameter(rng.normal(size=4))
        r = rng.normal(size=(2, 3, 4))
        return (lambda: ops.sum_(ops.mul_const(ops.layer_norm(x, g, bt, 1e-5), r)),
                [x, g, bt])

    def attention_case():
        attn = nncore.MultiHeadSelfAttention(4, 2)
        attn.initialize(5)
        x = Parameter(rng.normal(size=(1, 3, 4)))
        mask = np.array([[1.0, 1.0, 0.0]])
        r = rng.normal(size=(1, 3, 4))
        return (lambda: ops.sum_(ops.mul_const(attn(x, mask=mask), r)),
                [x] + attn.parameters())

    def conv_case():
        x = Parameter(rng.normal(size=(1, 4, 3)))
        k = Parameter(rng.normal(size=(3, 3, 2)))
        b = Parameter(rng.normal(size=(2,)))
        r = rng.normal(size=(1, 4, 2))
        return (lambda: ops.sum_(ops.mul_const(ops.conv1d_seq(x, k, b), r)),
                [x, k, b])

    def embedding_case():
        table = Parameter(rng.normal(size=(5, 3)))
        ids = np.array([[0, 2, 2, 4]])
        r = rng.normal(size=(1, 4, 3))
        return (lambda: ops.sum_(ops.mul_const(ops.embedding_lookup(ids, table), r)),
                [table])

    def gather_case():
        x = Parameter(rng.normal(size=(2, 3, 2)))
        idx = np.array([[0, 0, 1, 2], [2, 1, 1, 0]])
        r = rng.normal(size=(2, 4, 2))
        return (lambda: ops.sum_(ops.mul_const(ops.gather_rows(x, idx), r)), [x])

    def softmax_case():
        x = Parameter(rng.normal(size=(2, 5)))
        r = rng.normal(size=(2, 5))
        return (lambda: ops.sum_(ops.mul_const(ops.softmax(x), r)), [x])

    def relu_case():
        x = Parameter(rng.normal(size=(3, 4)) + 0.05)
        r = rng.normal(size=(3, 4))
        return (lambda: ops.sum_(ops.mul_const(ops.relu(x), r)), [x])

    def exp_log_case():
        x = Parameter(rng.uniform(0.5, 2.0, size=(4,)))
        r = rng.normal(size=4)
        return (lambda: ops.sum_(ops.mul_const(ops.log(ops.exp(x)), r)), [x])

    def abs_case():
        x = Parameter(rng.normal(size=(3, 3)) + 0.2)
        r = rng.normal(size=(3, 3))
        return (lambda: ops.sum_(ops.mul_const(ops.abs_(x), r)), [x])

    def loss_case():
        x = Parameter(rng.normal(size=(2, 3)))
        target = rng.normal(size=(2, 3))
        mask = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0]])
        return (lambda: ops.mse_loss(x, target, mask) + ops.l1_loss(x, target + 1.0, mask),
                [x])

    return {
        "affine": affine_case, "layer_norm": layer_norm_case,
        "attention": attention_case, "conv1d": conv_case,
        "embedding": embedding_case, "gather_rows": gather_case,
        "softmax": softmax_case, "relu": relu_case,
        "exp_log": exp_log_case, "abs": abs_case, "losses": loss_case,
    }


def test_a3_gradient_suite():
    c = Criterion("gradient suite (ops < 1e-4, models < 1e-3)", "< 2 min")
    for name, case in _op_checks().items():
        fn, params = case()
        err = nncore.grad_check(fn, params)
        assert err < 1e-4, f"op {name}: max rel error {err:.3e}"

    for variant in ("parallel", "cascade"):
        cfg = small_config(variant=variant, seed=31)
        model = build_model(cfg)
        batch = make_batch(cfg, seed=32, b=1, l=2)

        def fn():
            return model.forward(batch, train=True).total

        err = nncore.grad_check(fn, model.parameters())
        assert err < 1e-3, f"{variant}: max rel error {err:.3e}"
    c.done()


# ----------------------------------------------------------------- A4


def test_a4_parallel_inference_equivalence():
    c = Criterion("parallel-inference equivalence + parameter parity", "< 10 s")
    cfg = small_config(variant="baseline", dropout=0.1, seed=77)
    baseline = build_model(cfg)
    parallel = build_model(cfg.replace(variant="parallel"))
    shared = baseline.state_dict()
    merged = parallel.state_dict()
    merged.update(shared)
    parallel.load_state_dict(merged)
    for ids in ([3], [1, 2, 3, 4], [4, 4, 2, 1, 3, 2]):
        mel_b = baseline.synthesize(np.array(ids))
        mel_p = parallel.synthesize(np.array(ids))
        assert np.array_equal(mel_b, mel_p), "inference mel differs bit-for-bit"

    assert count_inference_parameters(cfg) == count_inference_parameters(
        cfg.replace(variant="parallel")
    )
    full = ModelConfig()  # canonical 384/768 dims
    assert count_inference_parameters(full) == count_inference_parameters(
        full.replace(variant="parallel")
    )
    c.done()


# ----------------------------------------------------------------- A5


def test_a5_cascade_wiring():
    c = Criterion("cascade wiring (residual + pre-residual aux)", "< 10 s")
    cfg = small_config(variant="cascade", seed=88)
    model = build_model(cfg)
    batch = make_batch(cfg, seed=89)
    result = model.forward(batch, train=True)
    projected = result.extras["projected"].data
    predicted = result.extras["ssl_predicted"].data
    decoder_input = result.extras["decoder_input"].data

    # decoder_input - projector_output == ssl_predictor_output elementwise
    assert np.array_equal(decoder_input, predicted + projected)
    np.testing.assert_allclose(decoder_input - projected, predicted,
                               atol=1e-12, rtol=0)

    # Zeroing the residual contribution changes the decode but not the aux
    # term: the loss reads the pre-residual prediction.
    aux_with_residual = result.breakdown.aux
    aux_without = aux_loss(result.extras["ssl_predicted"], batch.ssl,
                           batch.frame_mask).item()
    assert aux_without == aux_with_residual
    mel_without_residual = model.decoder(
        result.extras["ssl_predicted"], batch.frame_mask, train=False
    )
    assert not np.array_equal(mel_without_residual.data, result.mel.data)
    c.done()


# ----------------------------------------------------------------- A6


def test_a6_overfit_smoke():
    c = Criterion("overfit smoke (3 variants, >= 90% drop)", "< 10 min/variant")
    steps = 600
    tc = TrainConfig(steps=steps, batch_size=2, base_lr=2e-3, warmup_steps=100)
    base_cfg = overfit_config()
    _, utts = gen_synthetic_corpus(4, base_cfg, seed=42)
    for variant in ("baseline", "parallel", "cascade"):
        trainer = Trainer(base_cfg.replace(variant=variant), tc, utts)
        first_totals, last_totals = [], []
        first_aux, last_aux = [], []
        for step in range(1, steps + 1):
            lr = learning_rate(step, tc.base_lr, tc.warmup_steps)
            b = train_step(trainer.model, trainer._next_batch(),
                           trainer.optimizer, lr)
            if step <= 10:
                first_totals.append(b.total)
                first_aux.append(b.aux)
            if step > steps - 10:
                last_totals.append(b.total)
                last_aux.append(b.aux)
        drop = 1.0 - np.mean(last_totals) / np.mean(first_totals)
        assert drop >= 0.90, f"{variant}: loss fell only {drop * 100:.1f}%"
        if variant != "baseline":
            assert np.mean(last_aux) < np.mean(first_aux), (
                f"{variant}: aux did not decrease"
            )
    c.done()


# ----------------------------------------------------------------- A7


def test_a7_metrics_sanity(tmp_path):
    c = Criterion("metrics sanity", "< 1 min")
    rng = np.random.default_rng(4242)
    x = rng.normal(size=(6, 16))
    assert mcd(x, x) == 0.0
    contour = np.abs(rng.normal(size=9)) + 0.1
    assert log_f0_rmse(contour, contour) == 0.0

    for _ in range(100):
        t = int(rng.integers(1, 6))
        m = int(rng.integers(14, 20))
        ref = rng.normal(size=(t, m))
        syn = rng.normal(size=(t, m))
        assert mcd(ref, syn) == pytest.approx(naive_mcd(ref, syn, 13), abs=1e-10)

        n = int(rng.integers(2, 24))
        f_ref = rng.normal(4.0, 2.0, size=n) * (rng.random(n) > 0.3)
        f_syn = rng.normal(4.0, 2.0, size=n) * (rng.random(n) > 0.3)
        expect = naive_masked_rmse(f_ref, f_syn)
        got = log_f0_rmse(f_ref, f_syn)
        if expect is None:
            assert got is None
        else:
            assert got == pytest.approx(expect, abs=1e-10)

    # Trained beats untrained on the overfit corpus.
    cfg = overfit_config(seed=55)
    _, utts = gen_synthetic_corpus(4, cfg, seed=55)
    tc = TrainConfig(steps=300, batch_size=2, base_lr=2e-3, warmup_steps=100)
    trainer = Trainer(cfg, tc, utts)
    ckpt = trainer.run(tmp_path / "trained")
    trained = evaluate(load_model(ckpt), utts, cfg)
    untrained = evaluate(build_model(cfg.replace(seed=99)), utts, cfg)
    assert trained.mcd_mean < untrained.mcd_mean
    c.done()


# ----------------------------------------------------------------- A8


def test_a8_pipeline_determinism(tmp_path):
    c = Criterion("pipeline determinism (gen -> train 200 -> eval)", "< 5 min")
    outputs = []
    for tag in ("first", "second"):
        root = tmp_path / tag
        root.mkdir()
        cfg_path = root / "run.cfg"
        cfg_path.write_text(format_kv({
            "model": overfit_config().to_mapping(),
            "train": TrainConfig(steps=200, batch_size=2, base_lr=2e-3,
                                 warmup_steps=100, log_interval=10).to_mapping(),
        }))
        corpus = root / "corpus"
        assert cli_main(["gen-corpus", "--n", "6", "--seed", "17",
                         "--out", str(corpus), "--config", str(cfg_path)]) == 0
        run = root / "run"
        assert cli_main(["train", "--corpus", str(corpus), "--out", str(run),
                         "--config", str(cfg_path), "--seed", "17"]) == 0
        report = root / "report"
        assert cli_main(["eval", "--ckpt", str(run / "final.ckpt"),
                         "--corpus", str(corpus), "--out", str(report)]) == 0
        outputs.append({
            "metrics": (run / "metrics.csv").read_bytes(),
            "report": (report / "report.csv").read_bytes(),
            "summary": (report / "summary.txt").read_bytes(),
        })
    assert outputs[0]["metrics"] == outputs[1]["metrics"]
    assert outputs[0]["report"] == outputs[1]["report"]
    assert outputs[0]["summary"] == outputs[1]["summary"]
    c.done()
