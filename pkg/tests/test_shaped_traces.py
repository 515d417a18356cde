"""Scheduler-trace-shaped datasets: multi-target regression, categorical
search, and the resource-rule grammar working together."""

import numpy as np
import pytest

from compass import bench, constraints as C, data
from compass.generator import Query, generate
from compass.surrogate import ensemble_variance, predict, train_select
from compass.trust import build_index
from conftest import csv_bytes, fast_config

PM_HINTS = {
    "columns": [
        {"name": "node_power", "role": "target"},
        {"name": "mem_power", "role": "target"},
        {"name": "cpu_power", "role": "target"},
        {"name": "run_time", "role": "target"},
        {"name": "job_state", "role": "system_feature"},
    ]
}


def pm100_shaped_csv(n=400, seed=0) -> bytes:
    """Power/perf trace in the shape of a scheduler log: request columns as
    features, four power/runtime regression targets."""
    rng = np.random.default_rng(seed)
    cores_per_task = rng.integers(1, 5, n)
    nodes = rng.integers(1, 9, n)
    cores = np.minimum(rng.integers(1, 33, n) * nodes, 32 * nodes)
    gpus = np.minimum(rng.integers(0, 5, n) * nodes, 4 * nodes)
    mem = rng.integers(16, 257, n)
    limit = rng.integers(30, 720, n)
    state = rng.choice(["completed", "failed"], n, p=[0.85, 0.15])
    cpu_power = 40.0 + 2.5 * cores + rng.normal(0, 2, n)
    mem_power = 5.0 + 0.1 * mem + rng.normal(0, 1, n)
    node_power = cpu_power + mem_power + 30.0 * gpus / np.maximum(nodes, 1)
    run_time = 3600.0 / (1.0 + 0.2 * cores) + rng.normal(0, 20, n)
    header = [
        "cores_per_task", "job_state", "num_cores_req", "num_nodes_req",
        "num_gpus_req", "mem_req", "time_limit",
        "node_power", "mem_power", "cpu_power", "run_time",
    ]
    rows = [
        [cores_per_task[i], state[i], cores[i], nodes[i], gpus[i], mem[i], limit[i],
         round(float(node_power[i]), 4), round(float(mem_power[i]), 4),
         round(float(cpu_power[i]), 4), round(float(run_time[i]), 4)]
        for i in range(n)
    ]
    return csv_bytes(header, rows)


@pytest.fixture(scope="module")
def pm_handle():
    return data.ingest(pm100_shaped_csv(), PM_HINTS, seed=3)


@pytest.fixture(scope="module")
def pm_bundle(pm_handle):
    return train_select(pm_handle, seed=3, config=fast_config())


def test_four_regression_targets_inferred(pm_handle):
    targets = {(c.name, c.target_task) for c in pm_handle.schema.target_columns}
    assert targets == {
        ("node_power", "regression"), ("mem_power", "regression"),
        ("cpu_power", "regression"), ("run_time", "regression"),
    }


def test_multi_target_predictions_and_variance(pm_handle, pm_bundle):
    z = pm_handle.encoded_validation()[:8]
    preds = predict(pm_bundle, z)
    assert preds.shape == (8, 4)
    var = ensemble_variance(pm_bundle, z)
    assert var.shape == (8,)
    assert (var >= 0).all()


def test_resource_rules_filter_and_penalize(pm_handle):
    rules = C.parse_constraints(
        [
            {"feature": "num_gpus_req", "op": "<=", "coef": 4, "rhs_feature": "num_nodes_req"},
            {"feature": "num_cores_req", "op": "<=", "coef": 32, "rhs_feature": "num_nodes_req"},
            {"feature": "job_state", "op": "==", "value": "completed"},
        ],
        pm_handle.schema,
    )
    primary, _ = C.filter(pm_handle, rules)
    assert primary  # generator rows satisfy all three by construction
    for row_id in primary[:20]:
        row = pm_handle.raw_row(row_id)
        assert row["num_gpus_req"] <= 4 * row["num_nodes_req"]
        assert row["job_state"] == "completed"


def test_reconfigure_power_reduction(pm_handle, pm_bundle):
    cfg = fast_config()
    index = build_index(pm_handle, pm_bundle, cfg)
    row_id = int(pm_handle.train.row_ids[3])
    base = pm_handle.raw_row(row_id)
    target = base["node_power"] * 0.9  # ask for a 10% power cut
    doc = {
        "kind": "reconfigure",
        "baseline_row": row_id,
        "targets": [{"target": "node_power", "objective": {"range": [0.0, target]}}],
        "assignments": {
            "num_cores_req": {"from": base["num_cores_req"], "to": "?"},
            "num_gpus_req": {"from": base["num_gpus_req"], "to": "?"},
        },
        "constraints": [
            {"feature": "num_gpus_req", "op": "<=", "coef": 4, "rhs_feature": "num_nodes_req"}
        ],
        "gamma": 3,
        "n": 40,
        "seed": 5,
    }
    result = generate(Query.from_json(doc, pm_handle.schema), pm_handle, pm_bundle, cfg, trust_index=index)
    top = result.top[0]
    assert top.prediction[0] <= target * 1.01
    assert top.config["mem_req"] == base["mem_req"]  # untouched fields stay put
    assert top.config["num_gpus_req"] <= 4 * top.config["num_nodes_req"] + 1e-9


def comd_shaped_csv(n=553, seed=1) -> bytes:
    """Application-profile-shaped table: categorical app/algorithm knobs,
    runtime and power-cap targets, ~5% run-to-run noise."""
    rng = np.random.default_rng(seed)
    app = np.repeat("comd", n)
    algorithm = rng.choice(["rand", "spr", "pak"], n)
    bw_level = rng.integers(1, 5, n)
    tasks = rng.choice([8, 16, 32, 64], n)
    threads = rng.choice([1, 2, 4, 8], n)
    perf_var = rng.uniform(0.5, 6.0, n)
    alg_cost = np.select([algorithm == "rand", algorithm == "spr"], [1.15, 0.95], 1.0)
    runtime = 200.0 * alg_cost / (tasks * threads) ** 0.5 * (1 + 0.05 * rng.normal(size=n))
    power_cap = 50.0 + 10.0 * bw_level + rng.normal(0, 2.5, n)
    header = ["application", "algorithm", "bw_level", "task_count", "thread_count",
              "perf_variation", "runtime", "power_cap"]
    rows = [
        [app[i], algorithm[i], bw_level[i], tasks[i], threads[i],
         round(float(perf_var[i]), 4), round(float(runtime[i]), 4), round(float(power_cap[i]), 4)]
        for i in range(n)
    ]
    return csv_bytes(header, rows)


COMD_HINTS = {
    "columns": [
        {"name": "runtime", "role": "target"},
        {"name": "power_cap", "role": "target"},
        {"name": "application", "role": "system_feature"},
    ]
}


def test_forest_selection_band_on_profile_shaped_data():
    handle = data.ingest(comd_shaped_csv(), COMD_HINTS, seed=1)
    bundle = train_select(handle, seed=1, config=fast_config())
    forest = bundle.selection_report["random_forest"]
    assert forest["status"] == "ok"
    assert forest["cv_error"] <= 0.10  # ~5% noise floor puts CV MAPE near 0.05


def test_categorical_search_flips_algorithm_only():
    cfg = fast_config()
    handle = data.ingest(comd_shaped_csv(), COMD_HINTS, seed=1)
    bundle = train_select(handle, seed=1, config=cfg)
    index = build_index(handle, bundle, cfg)
    # baseline on the slow algorithm; ask for a runtime cut searching algorithm only
    base_id = next(
        int(r) for r in handle.train.row_ids
        if handle.raw_row(int(r))["algorithm"] == "rand"
    )
    base = handle.raw_row(base_id)
    doc = {
        "kind": "reconfigure",
        "baseline_row": base_id,
        "targets": [{"target": "runtime", "objective": {"range": [0.0, base["runtime"] * 0.9]}}],
        "assignments": {"algorithm": {"from": "rand", "to": "?"}},
        "gamma": 3,
        "n": 20,
        "seed": 2,
    }
    result = generate(Query.from_json(doc, handle.schema), handle, bundle, cfg, trust_index=index)
    top = result.top[0]
    assert top.config["application"] == base["application"]  # fixed field untouched
    assert top.config["task_count"] == base["task_count"]
    if not result.target_unmet:
        assert top.config["algorithm"] != "rand"
        assert top.loss_terms["prox"] == 1.0  # exactly one categorical flip


def test_identity_reconstruction_query_scores_zero():
    cfg = fast_config()
    handle = bench.ingest_model("basic_linear", 600, seed=4, config=cfg)
    bundle = train_select(handle, seed=4, config=cfg)
    protocol = bench.MaskingProtocol(n_queries=2, mask_groups=((),), num_candidates=10, gamma=1)
    report = bench.reconstruction_suite(handle, bundle, protocol, seed=4, config=cfg)
    assert report.mean <= 1e-9  # nothing hidden: answer equals the row up to float round-trip
