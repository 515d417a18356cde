import copy

import numpy as np
import pytest

from compass import data
from compass.errors import IndexUnavailable
from compass.surrogate import ensemble_variance, train_select
from compass.trust import (
    assess,
    assess_batch,
    build_index,
    distance_matrix,
    mixed_distance,
    percentile_rank,
    suggest_next_runs,
)
from conftest import csv_bytes, fast_config

TARGET_HINT = {"columns": [{"name": "y", "role": "target"}]}


# -- mixed distance ------------------------------------------------------------


def test_mixed_distance_identity(jobs_handle):
    z = np.array([0.3, -1.2, 2.0])
    assert mixed_distance(z, z, jobs_handle.schema) == 0.0


def test_mixed_distance_single_categorical_mismatch(jobs_handle):
    a = np.array([0.0, 0.0, 0.0])
    b = np.array([0.0, 0.0, 1.0])  # job_state is the categorical coordinate
    assert mixed_distance(a, b, jobs_handle.schema) == 1.0


def test_mixed_distance_pythagorean(jobs_handle):
    a = np.array([0.0, 0.0, 2.0])
    b = np.array([3.0, 4.0, 2.0])
    assert mixed_distance(a, b, jobs_handle.schema) == pytest.approx(5.0)


def test_distance_matrix_agrees_with_scalar(jobs_handle):
    rng = np.random.default_rng(0)
    num = np.array([c.kind == data.NUMERIC for c in jobs_handle.schema.feature_columns])
    A = rng.normal(size=(6, 3))
    B = rng.normal(size=(4, 3))
    A[:, ~num] = rng.integers(0, 3, size=(6, (~num).sum()))
    B[:, ~num] = rng.integers(0, 3, size=(4, (~num).sum()))
    D = distance_matrix(A, B, num, ~num)
    for i in range(6):
        for j in range(4):
            assert D[i, j] == pytest.approx(mixed_distance(A[i], B[j], jobs_handle.schema))


# -- index + assess -------------------------------------------------------------


def test_index_requires_validation_rows(cfg):
    rows = [[i, float(i)] for i in range(4)]  # round(0.2 * 4) = 1, shrink to 2 rows
    h = data.ingest(csv_bytes(["x", "y"], [[0, 0.0], [1, 1.0]]), TARGET_HINT, seed=0)
    assert len(h.validation) == 0
    b = None
    with pytest.raises(IndexUnavailable):
        build_index(h, b, cfg)


def test_tau_close_positive(jobs_index):
    assert jobs_index.tau_close > 0.0


def test_duplicated_train_row_not_unsupported(jobs_handle, jobs_bundle, jobs_index):
    row = {k: v for k, v in jobs_handle.raw_row(int(jobs_handle.train.row_ids[5])).items()
           if k in jobs_handle.feature_order}
    verdict = assess(row, jobs_index, jobs_bundle)
    assert verdict.label != "unsupported"
    assert verdict.ood <= 0.6


def test_far_outlier_always_unsupported(jobs_handle, jobs_bundle, jobs_index):
    row = {"num_nodes": 1e6, "num_gpus": 1e6, "job_state": "completed"}
    verdict = assess(row, jobs_index, jobs_bundle)
    assert verdict.label == "unsupported"
    assert verdict.ood == 1.0
    assert verdict.uq is None
    assert verdict.next_runs


def test_percentile_rank_equals_naive_counting(jobs_index):
    rng = np.random.default_rng(1)
    sorted_vals = jobs_index.val_distances_sorted
    for _ in range(100):
        v = float(rng.uniform(-0.5, sorted_vals.max() * 1.5))
        naive = float(np.mean(sorted_vals <= v))
        assert percentile_rank(sorted_vals, v) == naive
    for v in sorted_vals[:5]:  # exact ties must count (non-strict)
        assert percentile_rank(sorted_vals, float(v)) == float(np.mean(sorted_vals <= v))


def test_assess_matches_bruteforce_definitions(jobs_handle, jobs_bundle, jobs_index):
    rng = np.random.default_rng(2)
    Ztr = jobs_index.train_encoded
    for _ in range(40):
        row = {
            "num_nodes": float(rng.integers(1, 9)),
            "num_gpus": float(rng.integers(0, 33)),
            "job_state": str(rng.choice(["completed", "failed", "timeout"])),
        }
        verdict = assess(row, jobs_index, jobs_bundle)
        z = data.normalize(jobs_handle, row, on_unseen="mismatch")
        d = np.array([mixed_distance(z, Ztr[i], jobs_handle.schema) for i in range(len(Ztr))])
        d_x = float(np.sort(d)[: jobs_index.k].mean())
        ood = float(np.mean(jobs_index.val_distances_sorted <= d_x))
        assert verdict.ood == ood
        if ood > 0.99:
            assert verdict.label == "unsupported"
        else:
            u = float(ensemble_variance(jobs_bundle, z))
            uq = float(np.mean(jobs_index.val_uncertainty_sorted <= u))
            assert verdict.uq == uq
            if ood > 0.95 or uq > 0.95:
                assert verdict.label == "caution"
            else:
                assert verdict.label == "trusted"


def test_support_set_soundness(jobs_handle, jobs_bundle, jobs_index):
    row = {k: v for k, v in jobs_handle.raw_row(int(jobs_handle.train.row_ids[0])).items()
           if k in jobs_handle.feature_order}
    verdict = assess(row, jobs_index, jobs_bundle)
    z = data.normalize(jobs_handle, row)
    dists = [d for _, d in verdict.support]
    assert dists == sorted(dists)
    for row_id, d in verdict.support:
        assert d <= jobs_index.tau_close
        pos = int(np.flatnonzero(jobs_index.train_row_ids == row_id)[0])
        recomputed = mixed_distance(z, jobs_index.train_encoded[pos], jobs_handle.schema)
        assert recomputed == pytest.approx(d, abs=1e-9)


def test_assess_batch_matches_single(jobs_handle, jobs_bundle, jobs_index):
    rows = [
        {"num_nodes": 2.0, "num_gpus": 4.0, "job_state": "completed"},
        {"num_nodes": 8.0, "num_gpus": 32.0, "job_state": "failed"},
        {"num_nodes": 1e5, "num_gpus": 1e5, "job_state": "timeout"},
    ]
    batch = assess_batch(rows, jobs_index, jobs_bundle)
    for row, b in zip(rows, batch):
        s = assess(row, jobs_index, jobs_bundle)
        assert (s.label, s.ood, s.uq, s.support, s.reason) == (b.label, b.ood, b.uq, b.support, b.reason)
        assert s.next_runs == b.next_runs


def test_ood_monotone_in_numeric_offset(jobs_handle, jobs_bundle, jobs_index):
    base = {"num_nodes": 4.0, "num_gpus": 8.0, "job_state": "completed"}
    prev = -1.0
    for scale in (0.0, 2.0, 8.0, 32.0, 128.0):
        row = dict(base)
        row["num_nodes"] = base["num_nodes"] + scale
        row["num_gpus"] = base["num_gpus"] + scale
        verdict = assess(row, jobs_index, jobs_bundle)
        assert verdict.ood >= prev - 1e-12
        prev = verdict.ood


def test_caution_reasons_distinguish_branches(jobs_handle, jobs_bundle):
    cfg = fast_config()
    index = build_index(jobs_handle, jobs_bundle, cfg)
    # force the uq branch: everything is in-distribution but variance is huge
    hacked = copy.copy(index)
    hacked.val_uncertainty_sorted = np.zeros_like(index.val_uncertainty_sorted) - 1.0
    row = {k: v for k, v in jobs_handle.raw_row(int(jobs_handle.train.row_ids[3])).items()
           if k in jobs_handle.feature_order}
    verdict = assess(row, hacked, jobs_bundle)
    assert verdict.label == "caution"
    assert "uncertainty" in verdict.reason
    # force the ood branch: distances all tiny
    hacked2 = copy.copy(index)
    hacked2.val_distances_sorted = np.zeros_like(index.val_distances_sorted) - 1.0
    hacked2.unsupported_threshold = 2.0  # keep out of the unsupported short-circuit
    verdict2 = assess(row, hacked2, jobs_bundle)
    assert verdict2.label == "caution"
    assert "support" in verdict2.reason


def test_next_runs_contract(jobs_handle, jobs_bundle, jobs_index):
    x = {"num_nodes": 3.0, "num_gpus": 6.0, "job_state": "completed"}
    assert suggest_next_runs(x, jobs_index, 1) == [x]
    runs = suggest_next_runs(x, jobs_index, 4)
    assert len(runs) == 4
    assert runs[0] == x
    z = data.normalize(jobs_handle, x)
    seen = set()
    for r in runs:
        key = tuple(sorted(r.items()))
        assert key not in seen
        seen.add(key)
        assert r["job_state"] == "completed"  # categoricals held
        zr = data.normalize(jobs_handle, r)
        assert mixed_distance(z, zr, jobs_handle.schema) <= 1.5 * jobs_index.tau_close + 1e-9
        spec_n = jobs_handle.schema.column("num_nodes")
        assert spec_n.vmin <= r["num_nodes"] <= spec_n.vmax


def test_next_runs_respect_query_bounds(jobs_handle, jobs_index):
    x = {"num_nodes": 1.0, "num_gpus": 0.0, "job_state": "completed"}
    runs = suggest_next_runs(x, jobs_index, 6, bounds={"num_gpus": (0.0, 2.0)})
    for r in runs[1:]:
        assert 0.0 <= r["num_gpus"] <= 2.0


def test_next_runs_deterministic(jobs_handle, jobs_index):
    x = {"num_nodes": 3.0, "num_gpus": 6.0, "job_state": "completed"}
    assert suggest_next_runs(x, jobs_index, 5) == suggest_next_runs(x, jobs_index, 5)


def test_small_training_set_clamps_k_with_warning(cfg):
    rows = [[i, float(2 * i)] for i in range(15)]  # train split of 12 < default k=20
    h = data.ingest(csv_bytes(["x", "y"], rows), TARGET_HINT, seed=0)
    b = train_select(h, families=["ridge_linear"], seed=0, config=cfg)
    with pytest.warns(UserWarning, match="clamped"):
        index = build_index(h, b, cfg)
    assert index.k == len(h.train)
