import numpy as np
import pytest

from compass import data
from compass.config import EngineConfig


def csv_bytes(header, rows) -> bytes:
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    return ("\n".join(lines) + "\n").encode()


def fast_config() -> EngineConfig:
    """Small knobs so unit tests stay quick; semantics unchanged."""
    cfg = EngineConfig()
    cfg.surrogate.forest_trees = 25
    cfg.surrogate.gbt_rounds = 25
    cfg.generator.population = 30
    cfg.generator.generations = 60
    cfg.generator.workers = 2
    return cfg


@pytest.fixture(scope="session")
def cfg():
    return fast_config()


def jobs_csv(n=240, seed=3) -> bytes:
    """Mixed-type scheduler-style table: 2 numeric + 1 categorical feature,
    runtime regression target with a known structure."""
    rng = np.random.default_rng(seed)
    nodes = rng.integers(1, 9, n)
    gpus = rng.integers(0, 33, n)
    state = rng.choice(["completed", "failed", "timeout"], n, p=[0.7, 0.2, 0.1])
    runtime = 100.0 / (1.0 + gpus) + nodes + (state == "failed") * 5.0
    rows = list(zip(nodes, gpus, state, np.round(runtime, 6)))
    return csv_bytes(["num_nodes", "num_gpus", "job_state", "runtime"], rows)


JOBS_HINTS = {
    "columns": [
        {"name": "runtime", "role": "target", "target_task": "regression"},
        {"name": "job_state", "role": "system_feature"},
    ]
}


@pytest.fixture(scope="session")
def jobs_handle():
    return data.ingest(jobs_csv(), JOBS_HINTS, seed=11)


@pytest.fixture(scope="session")
def jobs_bundle(jobs_handle, cfg):
    from compass.surrogate import train_select

    return train_select(jobs_handle, seed=11, config=cfg)


@pytest.fixture(scope="session")
def jobs_index(jobs_handle, jobs_bundle, cfg):
    from compass.trust import build_index

    return build_index(jobs_handle, jobs_bundle, cfg)
