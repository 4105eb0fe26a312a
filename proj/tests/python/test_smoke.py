"""End-to-end checks of the Python extension against numpy references."""

import json

import numpy as np
import pytest

import stereosparse as ss

STRIDE = (1, 2, 2)


def make_rng():
    return np.random.default_rng(1234)


def energy(x, a, w, lam):
    recon = ss.reconstruct(a, w, STRIDE)
    return 0.5 * float(((x - recon) ** 2).sum()) + lam * float(np.abs(a).sum())


def test_sten_roundtrip(tmp_path):
    arr = make_rng().standard_normal((2, 3, 5)).astype(np.float32)
    path = str(tmp_path / "t.sten")
    ss.write_sten(path, arr)
    back = ss.read_sten(path)
    assert back.shape == arr.shape
    assert np.array_equal(back, arr)


def test_correlate_matches_direct_patch_dots():
    r = make_rng()
    x = r.standard_normal((1, 2, 7, 9, 3)).astype(np.float32)
    w = r.standard_normal((4, 2, 3, 3, 3)).astype(np.float32)
    y = ss.correlate(x, w, STRIDE)
    assert y.shape == (1, 1, 3, 4, 4)
    for oh in range(3):
        for ow in range(4):
            patch = x[0, 0:2, 2 * oh : 2 * oh + 3, 2 * ow : 2 * ow + 3, :]
            for f in range(4):
                expect = float((patch * w[f]).sum())
                assert y[0, 0, oh, ow, f] == pytest.approx(expect, rel=1e-4, abs=1e-5)


def test_reconstruct_is_adjoint_of_correlate():
    r = make_rng()
    x = r.standard_normal((1, 2, 7, 9, 3)).astype(np.float32)
    w = r.standard_normal((4, 2, 3, 3, 3)).astype(np.float32)
    y = ss.correlate(x, w, STRIDE)
    g = r.standard_normal(y.shape).astype(np.float32)
    lhs = float((y * g).sum())
    rhs = float((x * ss.reconstruct(g, w, STRIDE)).sum())
    assert lhs == pytest.approx(rhs, rel=1e-5)


def test_soft_threshold_matches_numpy():
    u = make_rng().standard_normal(64).astype(np.float32)
    lam = 0.3
    expect = np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)
    assert np.allclose(ss.soft_threshold(u, lam), expect, atol=1e-7)


def test_lca_energy_descends_to_a_sparse_code():
    r = make_rng()
    w = ss.init_dictionary(6, (2, 3, 3), 3, STRIDE, seed=3)
    x = r.standard_normal((1, 2, 7, 9, 3)).astype(np.float32)
    lam = 0.1
    res = ss.lca_encode(x, w, STRIDE, lam=lam, max_iters=300)
    trace = res["trace"]
    assert np.all(np.diff(trace[:, 2]) <= 1e-6 * trace[0, 2])
    assert np.allclose(res["a"], ss.soft_threshold(res["u"], lam), atol=1e-6)
    # The traced energy is the real objective, not a proxy.
    assert trace[-1, 2] == pytest.approx(energy(x, res["a"], w, lam), rel=1e-4)
    assert trace[-1, 3] == np.count_nonzero(res["a"])


def test_lca_reaches_the_reference_solver_energy():
    r = make_rng()
    w = ss.init_dictionary(3, (1, 2, 2), 1, STRIDE, seed=5)
    x = r.standard_normal((1, 1, 4, 4, 1)).astype(np.float32)
    lam = 0.05
    a_lca = ss.lca_encode(x, w, STRIDE, lam=lam, max_iters=2000, stop_tol=1e-9)["a"]
    a_ref = ss.ista_oracle(x, w, STRIDE, lam=lam, iters=4000)
    j_lca = energy(x, a_lca, w, lam)
    j_ref = energy(x, a_ref, w, lam)
    assert j_lca <= j_ref * 1.01 + 1e-12


def test_dict_gradient_descends_the_energy():
    r = make_rng()
    w = ss.init_dictionary(4, (2, 3, 3), 3, STRIDE, seed=7)
    x = r.standard_normal((1, 2, 7, 9, 3)).astype(np.float32)
    a = ss.lca_encode(x, w, STRIDE, lam=0.05, max_iters=200)["a"]
    g = ss.dict_gradient(x, a, w, STRIDE)
    assert g.shape == w.shape
    step = 1e-4 / max(1e-12, float(np.abs(g).max()))
    before = energy(x, a, w, 0.05)
    after = energy(x, a, (w - step * g).astype(np.float32), 0.05)
    assert after < before


def test_train_dictionary_keeps_unit_atoms():
    r = make_rng()
    w0 = ss.init_dictionary(4, (2, 3, 3), 3, STRIDE, seed=9)
    data = [r.standard_normal((2, 9, 9, 3)).astype(np.float32) for _ in range(4)]
    w, history = ss.train_dictionary(
        data, w0, STRIDE, lr=1e-3, batches=5, batch_size=2, seed=1, lam=0.05
    )
    assert history.shape == (5, 7)
    norms = np.linalg.norm(w.reshape(w.shape[0], -1), axis=1)
    assert np.allclose(norms, 1.0, atol=1e-5)


def test_pr_auc_agrees_with_threshold_enumeration():
    r = make_rng()
    scores = r.standard_normal(200)
    labels = (r.random(200) < 0.3).astype(int)
    labels[0] = 1

    pts = []
    for t in sorted(set(scores), reverse=True):
        keep = scores >= t
        tp = int((labels[keep] == 1).sum())
        pts.append((tp / labels.sum(), tp / keep.sum()))
    expect = 0.0
    prev_r, prev_p = 0.0, pts[0][1]
    for rec, prec in pts:
        expect += (rec - prev_r) * (prec + prev_p) / 2
        prev_r, prev_p = rec, prec

    assert ss.pr_auc(scores.tolist(), labels.tolist()) == pytest.approx(expect, abs=1e-9)
    assert ss.pr_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0


def test_window_labels_positive_only_under_overlap():
    grid = ss.window_labels([(64.0, 16.0, 96.0, 32.0)])
    assert grid.shape == (4, 8)
    expect = np.zeros((4, 8), dtype=np.float32)
    expect[1, 2] = 1.0
    assert np.array_equal(grid, expect)


def test_synth_example_is_deterministic_and_labeled():
    a = ss.synth_example(11, noise=2.0)
    b = ss.synth_example(11, noise=2.0)
    assert np.array_equal(a["input"], b["input"])
    assert a["input"].shape == (3, 64, 256, 6)
    assert a["labels"].shape == (4, 8)
    assert set(np.unique(a["labels"])) <= {0.0, 1.0}
    assert a["labels"].sum() >= 1
    assert a["disparity"].shape == (64, 256)
    assert a["disparity"].min() >= 0
    # Normalized to zero mean, unit std by preprocessing.
    assert abs(float(a["input"].mean())) < 1e-3
    assert float(a["input"].std()) == pytest.approx(1.0, abs=1e-3)


def test_cli_runs_a_small_pipeline(tmp_path):
    root = tmp_path / "corpus"
    rc = ss.cli(
        ["synth", "--n", "3", "--seed", "5", "--noise", "2", "--out", str(root)]
    )
    assert rc == 0
    manifest = root / "manifest.jsonl"
    assert manifest.exists()
    entries = [json.loads(line) for line in manifest.read_text().splitlines()]
    assert len(entries) == 3

    dict_path = tmp_path / "dict.sten"
    rc = ss.cli(
        [
            "train-dict",
            "--data", str(manifest),
            "--out", str(dict_path),
            "--features", "8",
            "--batches", "6",
            "--batch-size", "2",
            "--lambda", "0.5",
            "--seed", "1",
        ]
    )
    assert rc == 0
    w = ss.read_sten(str(dict_path))
    assert w.shape == (8, 3, 8, 8, 6)
    assert dict_path.with_suffix(".history.csv").exists()

    acts_path = tmp_path / "acts.sten"
    rc = ss.cli(
        [
            "encode",
            "--dict", str(dict_path),
            "--input", str(root / entries[0]["input"]),
            "--out", str(acts_path),
            "--lambda", "0.5",
            "--iters", "60",
        ]
    )
    assert rc == 0
    acts = ss.read_sten(str(acts_path))
    # Three frames collapse to one step (valid in time), SAME pad in space.
    assert acts.shape == (1, 1, 32, 128, 8)

    assert ss.cli(["encode", "--dict", str(dict_path)]) == 2  # missing required flags
    assert ss.cli(["eval", "--model", str(tmp_path / "no.ssm"), "--data", str(manifest)]) == 1
