"""Batch CLI mirroring the HTTP flows.

Exit codes: 0 success, 3 target_unmet, 2 engine errors (bad input, parse
failures), 1 unexpected crashes.
"""

import json
import os
import sys
from pathlib import Path

import click

from . import bench as B
from . import data as D
from . import surrogate
from .config import EngineConfig
from .errors import CompassError
from .generator import Query, generate


def _env_seed(seed):
    if seed is not None:
        return seed
    return int(os.environ.get("COMPASS_SEED", "0"))


def _load_config(path) -> EngineConfig:
    return EngineConfig.load(path) if path else EngineConfig()


def _read_hints(path):
    return Path(path).read_text() if path else None


def _emit(doc):
    click.echo(json.dumps(doc, sort_keys=True))


@click.group()
def main():
    """Decision-intelligence engine over tabular performance traces."""


@main.command()
@click.option("-d", "--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--hints", type=click.Path(exists=True), help="schema hints JSON file")
@click.option("--drop", multiple=True, help="column to drop (repeatable)")
@click.option("--seed", type=int, default=None)
@click.option("--subsample", is_flag=True, help="reduce oversized tables before splitting")
@click.option("--config", "config_path", type=click.Path(exists=True))
def ingest(dataset_path, hints, drop, seed, subsample, config_path):
    """Parse a CSV trace and report the inferred schema and row counts."""
    handle = D.ingest(
        Path(dataset_path).read_bytes(),
        _read_hints(hints),
        drop_columns=list(drop),
        seed=_env_seed(seed),
        enable_subsampling=subsample,
        config=_load_config(config_path),
    )
    _emit(
        {
            "fingerprint": handle.id,
            "schema": handle.schema.to_dict(),
            "row_counts": {"train": len(handle.train), "validation": len(handle.validation)},
        }
    )


@main.command()
@click.option("-d", "--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--hints", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("-o", "--out", type=click.Path(), help="write the persisted surrogate here")
@click.option("--families", help="comma-separated family subset")
@click.option("--config", "config_path", type=click.Path(exists=True))
def train(dataset_path, hints, seed, out, families, config_path):
    """Train and select a surrogate; optionally persist it for reuse."""
    seed = _env_seed(seed)
    cfg = _load_config(config_path)
    handle = D.ingest(Path(dataset_path).read_bytes(), _read_hints(hints), seed=seed, config=cfg)
    bundle = surrogate.train_select(
        handle, families=families.split(",") if families else None, seed=seed, config=cfg
    )
    if out:
        Path(out).write_bytes(surrogate.persist(bundle))
    _emit({"family": bundle.primary.family, "selection_report": bundle.selection_report})


@main.command()
@click.option("-d", "--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("-q", "--query", "query_path", type=click.Path(exists=True),
              help="query JSON file; defaults to stdin")
@click.option("--hints", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="overrides the query's seed")
@click.option("--subsample", is_flag=True, help="reduce oversized tables before splitting")
@click.option("--bundle", "bundle_path", type=click.Path(exists=True),
              help="reuse a persisted surrogate instead of retraining")
@click.option("--full", is_flag=True, help="embed all retained candidates, not only top-gamma")
@click.option("--config", "config_path", type=click.Path(exists=True))
def query(dataset_path, query_path, hints, seed, subsample, bundle_path, full, config_path):
    """Run one query end to end; result JSON goes to stdout."""
    cfg = _load_config(config_path)
    doc = json.loads(Path(query_path).read_text() if query_path else sys.stdin.read())
    if seed is not None:
        doc["seed"] = seed
    data_seed = _env_seed(seed if seed is not None else doc.get("seed"))
    handle = D.ingest(
        Path(dataset_path).read_bytes(), _read_hints(hints),
        seed=data_seed, enable_subsampling=subsample, config=cfg,
    )
    if bundle_path:
        bundle = surrogate.load(Path(bundle_path).read_bytes())
    else:
        bundle = surrogate.train_select(handle, seed=data_seed, config=cfg)
    q = Query.from_json(doc, handle.schema)
    result = generate(q, handle, bundle, cfg)
    out = result.to_json(include_all=full)
    out["dataset_fingerprint"] = handle.id
    _emit(out)
    if result.target_unmet:
        sys.exit(3)


@main.command()
@click.option("--model", required=True, help=f"one of {sorted(B.REGISTRY)}")
@click.option("--queries", type=int, default=10)
@click.option("--seed", type=int, default=None)
@click.option("--rows", type=int, default=None, help="override the model's sample count")
@click.option("--table", "as_table", is_flag=True, help="plain-text table instead of JSON")
@click.option("--export-csv", type=click.Path(), help="also write the sampled dataset")
@click.option("--config", "config_path", type=click.Path(exists=True))
def bench(model, queries, seed, rows, as_table, export_csv, config_path):
    """Validate recommend accuracy against one analytical model."""
    seed = _env_seed(seed)
    if export_csv:
        Path(export_csv).write_text(B.generate_model_dataset(model, rows, seed))
    report = B.recommend_accuracy_suite(
        model, n_queries=queries, seed=seed, n_rows=rows, config=_load_config(config_path)
    )
    if as_table:
        click.echo(report.to_table())
    else:
        _emit({"model": model, **report.to_json()})


@main.command()
@click.option("--port", type=int, default=None)
@click.option("--data-dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True))
def serve(port, data_dir, seed, config_path):
    """Serve the HTTP API (and the console, when built) on localhost."""
    import uvicorn

    from .service import create_app

    app = create_app(
        data_dir or os.environ.get("COMPASS_DATA_DIR", "compass-data"),
        _load_config(config_path),
        seed=_env_seed(seed),
    )
    uvicorn.run(app, host="127.0.0.1", port=port or int(os.environ.get("COMPASS_PORT", "8080")))


def entry():
    try:
        main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except CompassError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entry()
