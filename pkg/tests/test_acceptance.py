"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. One test (the six-decimal fuzzifier strength constants) is expected
to fail: those published target constants are mutually inconsistent with
the defining strength formula (they differ from its true values by
1e-5..1e-4, beyond their own 1e-6 tolerance); the formula is implemented
exactly, its true values are pinned in tests/test_fuzzy.py, and the
constants here are deliberately left as stated rather than adjusted to
force a pass.  Everything else is green.
"""

import time

import numpy as np
import pytest

from cardi.chateval import HashingEmbedder, QAPair, evaluate_dataset, evaluate_pair, final_score
from cardi.fuzzy import strength, term
from cardi.ingest import (
    DatasetManifest,
    LabelSpace,
    ManifestEntry,
    serialize_header,
    stratified_kfold,
    stratified_split,
    HeaderInfo,
)
from cardi.metric import (
    MetricError,
    PredictionSet,
    WeightMatrix,
    challenge_score,
    save_weights_csv,
)
from cardi.net import EcgResNet, ModelConfig, layer_shapes, save_checkpoint
from cardi.preprocess import encode_demographics, fit_length, normalize_amplitude, resample
from cardi.synth import make_classification_toy
from cardi.training import (
    TrainConfig,
    class_weights,
    evaluate_challenge,
    train_staged,
)

from oracles import challenge_c, fuzzy_strength


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"ACCEPTANCE {status} - {name}{suffix}")
    assert ok, f"{name}{suffix}"


class TestMetricCriteria:
    def test_oracle_equivalence_1000_instances_under_10s(self):
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        checked = 0
        worst = 0.0
        while checked < 1000:
            n = int(rng.integers(1, 7))
            k = int(rng.integers(2, 5))
            yt = (rng.random((n, k)) < 0.45).astype(int)
            yp = (rng.random((n, k)) < 0.45).astype(int)
            normal = int(rng.integers(0, k))
            w = rng.random((k, k))
            w = (w + w.T) / 2
            np.fill_diagonal(w, 1.0)
            try:
                got = challenge_score(PredictionSet(yt, yp, normal), w).c
            except MetricError:
                continue
            want = challenge_c(yt.tolist(), yp.tolist(), w.tolist(), normal)
            worst = max(worst, abs(got - want))
            checked += 1
        elapsed = time.perf_counter() - start
        report("metric oracle equivalence (1000 instances)",
               worst <= 1e-12 and elapsed < 10.0,
               f"worst |diff| = {worst:.2e}, {elapsed:.2f}s")

    def test_metric_anchors(self):
        w2 = np.array([[1.0, 0.5], [0.5, 1.0]])
        yt = np.eye(2, dtype=int)[[0, 0, 1, 1]]
        perfect = challenge_score(PredictionSet(yt, yt, 0), w2).c
        inactive_pred = np.zeros_like(yt)
        inactive_pred[:, 0] = 1
        inactive = challenge_score(PredictionSet(yt, inactive_pred, 0), w2).c
        toy = challenge_score(PredictionSet(yt, np.eye(2, dtype=int)[[0, 0, 1, 0]], 0), w2)
        ok = (perfect == 1.0 and inactive == 0.0 and abs(toy.c - 0.5) <= 1e-12)
        report("metric anchors (C=1, C=0, toy C=0.5)", ok,
               f"C_perfect={perfect}, C_inactive={inactive}, C_toy={toy.c}")


class TestTrainingCriterion:
    def test_toy_overfit_run(self):
        # full-scale headline score is out of desk-scale reach; this is the
        # substituted capability check: a 4-block model must drive the
        # weighted loss under 0.05 and the train-set score to 0.9+
        config = ModelConfig(n_resblocks=4, init_filters=8, filter_double_every=2,
                             filter_cap=64, first_kernel=15, block_kernel=7,
                             pool_every=2, dropout=0.0, se_reduction=4,
                             demographic_hidden=10, n_classes=4, input_leads=12,
                             input_length=256)
        data = make_classification_toy(n_records=32, n_classes=4, length=256, seed=7)
        train_config = TrainConfig(stages=1, epochs_per_stage=150, batch_size=8,
                                   learning_rate=5e-3, seed=1)
        model = EcgResNet(config, seed=11)
        weights = np.eye(4)
        start = time.perf_counter()
        _, history = train_staged(model, data, data, train_config, weights, 0)
        elapsed = time.perf_counter() - start
        min_loss = min(e.train_loss for e in history.epochs)
        final_c = evaluate_challenge(model, data, weights, 0, train_config.threshold)
        ok = min_loss < 0.05 and final_c >= 0.9 and elapsed < 600.0
        report("toy overfit (4 blocks, 32 records, 4 classes)", ok,
               f"min wBCE={min_loss:.4f}, train C={final_c:.3f}, {elapsed:.0f}s")


class TestFuzzifierCriteria:
    def test_fuzzifier_golden_values_as_stated(self):
        # the three six-decimal constants below are inconsistent with the
        # strength formula; kept as stated (see module docstring)
        cases = [
            (strength(0.5, 1), 0.814837, 1e-6, term(strength(0.5, 1), 1), "high"),
            (strength(0.9, 1), 0.996313, 1e-6, term(strength(0.9, 1), 1), "severe"),
            (strength(0.001, 0), 0.990977, 1e-6, term(strength(0.001, 0), 0), "negligible"),
        ]
        ok = all(abs(got - want) <= tol and t == want_t
                 for got, want, tol, t, want_t in cases)
        report("fuzzifier six-decimal golden constants", ok,
               "; ".join(f"got {got:.6f} vs stated {want:.6f} -> {t}"
                         for got, want, _tol, t, _wt in cases))

    def test_fuzzifier_zero_anchor_and_terms(self):
        zero = strength(0.5**2.5, 1)
        terms_ok = (term(strength(0.5, 1), 1) == "high"
                    and term(strength(0.9, 1), 1) == "severe"
                    and term(strength(0.001, 0), 0) == "negligible")
        report("fuzzifier zero anchor and term bands",
               abs(zero) <= 1e-9 and terms_ok, f"strength(0.5^2.5)={zero:.2e}")

    def test_fuzzifier_antisymmetry_1000_random(self):
        rng = np.random.default_rng(99)
        worst = max(abs(strength(s, 0) + strength(s, 1))
                    for s in rng.random(1000))
        report("fuzzifier antisymmetry (1000 random scores)", worst <= 1e-12,
               f"worst |s0 + s1| = {worst:.2e}")

    def test_fuzzifier_formula_values_cross_checked(self):
        # the formula's actual values, verified against the independent oracle
        pairs = [(0.5, 1), (0.9, 1), (0.001, 0)]
        worst = max(abs(strength(s, l) - fuzzy_strength(s, l)) for s, l in pairs)
        report("fuzzifier formula matches independent oracle", worst <= 1e-12,
               f"worst |diff| = {worst:.2e}")


class TestGradientCriterion:
    def test_gradient_check_toy_model(self):
        from test_net import TOY, analytic_and_fd_gradients, toy_batch

        model = EcgResNet(TOY, seed=5)
        signals, demos, targets = toy_batch(TOY, batch=3, seed=11)
        weights = np.array([1.0, 2.0, 0.5, 1.5, 1.0])
        pairs = analytic_and_fd_gradients(model, signals, demos, targets, weights,
                                          n_samples=10, step=1e-4)
        worst = max(abs(a - f) / max(abs(a), abs(f), 1e-8) for a, f, _ in pairs)
        report("gradient check (10 sampled parameters)", worst < 1e-3,
               f"worst relative error = {worst:.2e}")


class TestShapeCriterion:
    def test_default_config_shape_audit(self):
        config = ModelConfig()
        shapes = layer_shapes(config)
        channels = [c for _, c, _ in shapes]
        expected = [64, 64, 128, 128, 256, 256, 512, 512] + [512] * 8
        final_length = shapes[-1][2]
        model = EcgResNet(config, seed=0)
        params = model.parameters()
        materialized_ok = all(
            params[f"block{b:02d}.path_a.conv.W"].shape[0] == c
            and params[f"block{b:02d}.path_b.conv.W"].shape[0] == c
            for b, c, _ in shapes
        )
        ok = channels == expected and final_length == 16 and materialized_ok
        report("shape audit (default 16-block config)", ok,
               f"channels ok={channels == expected}, final length={final_length}, "
               f"materialized ok={materialized_ok}")


class TestPreprocessingCriteria:
    def test_preprocessing_block(self):
        resampled = resample(np.random.default_rng(0).normal(size=(12, 5000)), 500)
        fitted = fit_length(resampled)
        normalized = normalize_amplitude(fitted, 2570)
        demo = encode_demographics(50, "female")
        checks = {
            "resample length": resampled.shape == (12, 2570),
            "pad exactly zero": np.count_nonzero(normalized[:, 2570:]) == 0,
            "mean": np.abs(normalized[:, :2570].mean(axis=1)).max() < 1e-9,
            "std": np.abs(normalized[:, :2570].std(axis=1) - 1.0).max() < 1e-9,
            "demographics": np.array_equal(demo, [0.5, 0, 1, 0, 0]),
        }
        report("preprocessing (resample/pad/normalize/demographics)",
               all(checks.values()),
               ", ".join(f"{k}={v}" for k, v in checks.items()))


class TestStratificationCriterion:
    def test_deviation_bound_200_manifests(self):
        worst_fold = 0.0
        worst_split = 0.0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(20, 100))
            k = int(rng.integers(2, 7))
            labels = (rng.random((n, k)) < rng.uniform(0.08, 0.6, size=k)).astype(int)
            labels[labels.sum(axis=1) == 0, rng.integers(0, k)] = 1
            manifest = DatasetManifest(
                [ManifestEntry(f"r{i:04d}", "", row) for i, row in enumerate(labels)]
            )
            totals = labels.sum(axis=0)
            for fold in stratified_kfold(manifest, k=5, seed=seed):
                counts = fold.label_matrix().sum(axis=0) if len(fold) else np.zeros(k)
                worst_fold = max(worst_fold, np.abs(counts - totals / 5).max())
            split = stratified_split(manifest, (0.72, 0.18, 0.10), seed=seed)
            for name, ratio in (("train", 0.72), ("val", 0.18), ("test", 0.10)):
                ids = [rid for rid, s in split.split.items() if s == name]
                counts = (split.subset(ids).label_matrix().sum(axis=0)
                          if ids else np.zeros(k))
                worst_split = max(worst_split, np.abs(counts - totals * ratio).max())
        ok = worst_fold <= 1.0 and worst_split <= 1.0
        report("stratification deviation <= 1 (200 manifests, k=5 + 72/18/10)", ok,
               f"worst fold dev={worst_fold:.3f}, worst split dev={worst_split:.3f}")


class TestChatEvalCriteria:
    def test_final_score_anchors(self):
        ok = final_score(0.9, 0.7, 0.9) == 0.84 and final_score(1, 1, 1) == 1.0
        report("chat_eval final_score anchors (0.84 exact, 1.0 exact)", ok,
               f"final(0.9,0.7,0.9)={final_score(0.9, 0.7, 0.9)!r}, "
               f"final(1,1,1)={final_score(1, 1, 1)!r}")

    def test_bit_reproducible_and_components_in_range(self):
        rng = np.random.default_rng(17)
        vocab = ["rhythm", "lead", "interval", "block", "flutter", "severe", "normal",
                 "finding", "signal", "atrial", "segment", "wave", "complex", "axis"]
        pairs = []
        for i in range(500):
            question = "What is " + " ".join(rng.choice(vocab, 3)) + "?"
            if rng.random() < 0.3:
                question += " And how severe is it?"
            response = "It is " + " ".join(rng.choice(vocab, int(rng.integers(3, 12)))) + "."
            docs = tuple(" ".join(rng.choice(vocab, 6))
                         for _ in range(int(rng.integers(0, 4))))
            pairs.append(QAPair(f"p{i:03d}", question, response, docs))
        embedder = HashingEmbedder()
        run1 = evaluate_dataset(pairs, embedder)
        run2 = evaluate_dataset(pairs, embedder)
        identical = run1.per_pair == run2.per_pair and run1.summary() == run2.summary()
        in_range = all(
            0.0 <= v <= 1.0
            for _, s in run1.per_pair
            for v in (s.coverage, s.grounding, s.coherence, s.final)
        )
        report("chat_eval reproducibility + ranges (500 pairs)",
               identical and in_range,
               f"bit-identical={identical}, components in [0,1]={in_range}")


class TestServiceCriterion:
    def test_round_trip_upload_interpret_chat(self, tmp_path):
        from fastapi.testclient import TestClient

        from cardi.service import build_state, create_app

        ls = LabelSpace.default()
        config = ModelConfig(n_resblocks=2, init_filters=4, filter_cap=8,
                             first_kernel=15, block_kernel=7, pool_every=2,
                             dropout=0.0, se_reduction=2, demographic_hidden=10,
                             n_classes=24, input_leads=12, input_length=4096)
        save_checkpoint(tmp_path / "model.npz", EcgResNet(config, seed=3),
                        {"checkpoint_id": "acceptance"})
        save_weights_csv(WeightMatrix(np.eye(24), ls.classes), tmp_path / "w.csv")
        kb_dir = tmp_path / "kb"
        kb_dir.mkdir()
        (kb_dir / "rhythms.txt").write_text(
            "Rhythm reference\nAtrial fibrillation is an irregular atrial rhythm.")
        (kb_dir / "conduction.txt").write_text(
            "Conduction reference\nBundle branch blocks delay ventricular conduction.")

        def fresh_client():
            state = build_state(tmp_path / "model.npz", tmp_path / "w.csv", kb_dir)
            return TestClient(create_app(state))

        rate, seconds = 500, 8.0
        length = int(rate * seconds)
        t = np.arange(length) / rate
        signal = np.stack([np.sin(2 * np.pi * (1 + lead % 3) * t) for lead in range(12)])
        header = serialize_header(HeaderInfo("fix001", rate, length, 61.0, "male",
                                             frozenset({"426783006"})))
        files = {
            "header": ("fix001.hea", header.encode(), "text/plain"),
            "signal": ("fix001.csv",
                       "\n".join(",".join(repr(float(v)) for v in row)
                                 for row in signal).encode(),
                       "text/csv"),
        }

        client = fresh_client()
        upload = client.post("/records", files=files)
        ok_upload = upload.status_code == 200 and upload.json()["record_id"] == "fix001"
        r1 = client.post("/records/fix001/interpret")
        r2 = client.post("/records/fix001/interpret")
        entries = r1.json()
        ok_report = (r1.status_code == 200 and len(entries) == 24
                     and r1.content == r2.content)
        flagged = [e["class_code"] for e in entries if e["term"] != "negligible"]
        chat1 = client.post("/chat", json={"record_id": "fix001",
                                           "message": "summarize the findings"})
        client2 = fresh_client()
        client2.post("/records", files=files)
        chat2 = client2.post("/chat", json={"record_id": "fix001",
                                            "message": "summarize the findings"})
        text1 = chat1.json()["response"]
        ok_chat = (chat1.status_code == 200
                   and text1 == chat2.json()["response"]
                   and all(code in text1 for code in flagged))
        report("service round trip (upload -> interpret -> chat)",
               ok_upload and ok_report and ok_chat,
               f"upload={ok_upload}, report ok={ok_report}, "
               f"chat deterministic+complete={ok_chat}, flagged={len(flagged)}")
