"""HTTP facade: dataset upload, sample browsing, async query jobs, results.

Jobs run on a single worker thread; records persist as JSON under the data
directory and in-flight jobs restart as queued after a process restart.
Dataset sources are kept verbatim so every result replays from
(dataset bytes, query JSON, seed).
"""

import json
import threading
import time
import traceback
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, File, Form, HTTPException, Query as QueryParam, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import constraints as C
from . import data as D
from . import surrogate
from .config import EngineConfig
from .errors import CompassError, FormatError, ParseError, QueryError, SchemaError
from .generator import Query, generate
from .trust import build_index

JOB_STATES = ("queued", "running", "done", "failed", "target_unmet")


class Engine:
    """Owns datasets, cached bundles/indexes, and the job queue."""

    def __init__(self, data_dir: str | Path, config: EngineConfig | None = None, seed: int = 0):
        self.data_dir = Path(data_dir)
        (self.data_dir / "datasets").mkdir(parents=True, exist_ok=True)
        (self.data_dir / "jobs").mkdir(parents=True, exist_ok=True)
        self.config = config or EngineConfig()
        self.seed = seed
        self._handles = {}
        self._bundles = {}
        self._indexes = {}
        self._lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=1)
        self._requeue_pending()

    # -- datasets -------------------------------------------------------------

    def add_dataset(self, raw: bytes, hints_doc=None, seed: int | None = None,
                    enable_subsampling: bool = False) -> dict:
        seed = self.seed if seed is None else seed
        if isinstance(hints_doc, (bytes, str)):
            try:
                hints_doc = json.loads(hints_doc)
            except ValueError as exc:
                raise SchemaError(f"schema hints are not valid JSON: {exc}") from exc
        t0 = time.monotonic()
        handle = D.ingest(raw, hints_doc, seed=seed, enable_subsampling=enable_subsampling,
                          config=self.config)
        dataset_id = uuid.uuid4().hex  # re-uploads get fresh ids, no dedup
        ddir = self.data_dir / "datasets" / dataset_id
        ddir.mkdir(parents=True)
        (ddir / "source.csv").write_bytes(raw)
        meta = {
            "dataset_id": dataset_id,
            "fingerprint": handle.id,
            "hints": hints_doc,
            "seed": seed,
            "enable_subsampling": enable_subsampling,
            "schema": handle.schema.to_dict(),
            "row_counts": {"train": len(handle.train), "validation": len(handle.validation)},
            "preprocess_s": time.monotonic() - t0,
        }
        (ddir / "meta.json").write_text(json.dumps(meta, sort_keys=True))
        self._handles[dataset_id] = handle
        return meta

    def meta(self, dataset_id: str) -> dict:
        path = self.data_dir / "datasets" / dataset_id / "meta.json"
        if not path.exists():
            raise KeyError(dataset_id)
        return json.loads(path.read_text())

    def handle(self, dataset_id: str) -> D.DatasetHandle:
        if dataset_id not in self._handles:
            meta = self.meta(dataset_id)
            raw = (self.data_dir / "datasets" / dataset_id / "source.csv").read_bytes()
            self._handles[dataset_id] = D.ingest(
                raw, meta["hints"], seed=meta["seed"],
                enable_subsampling=meta["enable_subsampling"], config=self.config,
            )
        return self._handles[dataset_id]

    # -- surrogate cache ------------------------------------------------------

    def train(self, dataset_id: str, seed: int | None = None, families=None) -> dict:
        handle = self.handle(dataset_id)
        seed = self.seed if seed is None else seed
        t0 = time.monotonic()
        bundle = surrogate.train_select(handle, families=families, seed=seed, config=self.config)
        train_s = time.monotonic() - t0
        blob = surrogate.persist(bundle)
        (self.data_dir / "datasets" / dataset_id / "bundle.cmps").write_bytes(blob)
        with self._lock:
            self._bundles[dataset_id] = bundle
            self._indexes.pop(dataset_id, None)
        return {"selection_report": bundle.selection_report, "train_s": train_s}

    def bundle(self, dataset_id: str):
        with self._lock:
            if dataset_id in self._bundles:
                return self._bundles[dataset_id], 0.0
        path = self.data_dir / "datasets" / dataset_id / "bundle.cmps"
        if path.exists():
            bundle = surrogate.load(path.read_bytes())
            with self._lock:
                self._bundles[dataset_id] = bundle
            return bundle, 0.0
        t0 = time.monotonic()
        self.train(dataset_id)
        return self._bundles[dataset_id], time.monotonic() - t0

    def set_bundle(self, dataset_id: str, blob: bytes):
        bundle = surrogate.load(blob)  # FormatError for foreign payloads
        (self.data_dir / "datasets" / dataset_id / "bundle.cmps").write_bytes(blob)
        with self._lock:
            self._bundles[dataset_id] = bundle
            self._indexes.pop(dataset_id, None)

    def index(self, dataset_id: str):
        with self._lock:
            if dataset_id in self._indexes:
                return self._indexes[dataset_id]
        bundle, _ = self.bundle(dataset_id)
        idx = build_index(self.handle(dataset_id), bundle, self.config)
        with self._lock:
            self._indexes[dataset_id] = idx
        return idx

    # -- jobs -------------------------------------------------------------

    def submit(self, dataset_id: str, query_doc: dict) -> str:
        handle = self.handle(dataset_id)  # also validates the dataset exists
        Query.from_json(query_doc, handle.schema)  # 422s surface before queueing
        job_id = uuid.uuid4().hex
        record = {
            "job_id": job_id,
            "dataset_id": dataset_id,
            "state": "queued",
            "query": query_doc,
            "result": None,
            "error": None,
            "timings": {},
        }
        self._write_job(record)
        self._executor.submit(self._run_job, job_id)
        return job_id

    def job(self, job_id: str) -> dict:
        path = self.data_dir / "jobs" / f"{job_id}.json"
        if not path.exists():
            raise KeyError(job_id)
        return json.loads(path.read_text())

    def _write_job(self, record: dict):
        path = self.data_dir / "jobs" / f"{record['job_id']}.json"
        path.write_text(json.dumps(record, sort_keys=True))

    def _requeue_pending(self):
        for path in sorted((self.data_dir / "jobs").glob("*.json")):
            record = json.loads(path.read_text())
            if record["state"] in ("queued", "running"):
                record["state"] = "queued"
                self._write_job(record)
                self._executor.submit(self._run_job, record["job_id"])

    def _run_job(self, job_id: str):
        record = self.job(job_id)
        record["state"] = "running"
        self._write_job(record)
        try:
            dataset_id = record["dataset_id"]
            handle = self.handle(dataset_id)
            query = Query.from_json(record["query"], handle.schema)
            bundle, train_s = self.bundle(dataset_id)
            index = self.index(dataset_id)
            t0 = time.monotonic()
            result = generate(query, handle, bundle, self.config, trust_index=index)
            generate_s = time.monotonic() - t0
            record["result"] = result.to_json()
            record["state"] = "target_unmet" if result.target_unmet else "done"
            record["timings"] = {
                "preprocess_s": self.meta(dataset_id).get("preprocess_s", 0.0),
                "train_s": train_s,
                "generate_s": generate_s - result.timings.get("assess_s", 0.0),
                "assess_s": result.timings.get("assess_s", 0.0),
            }
        except Exception as exc:  # noqa: BLE001 - job failures land in the record
            record["state"] = "failed"
            record["error"] = f"{type(exc).__name__}: {exc}"
            record["trace"] = traceback.format_exc()
        self._write_job(record)


def create_app(data_dir: str | Path | None = None, config: EngineConfig | None = None,
               seed: int = 0, static_dir: str | Path | None = None) -> FastAPI:
    engine = Engine(data_dir or "compass-data", config, seed)
    app = FastAPI(title="compass", version="0.1.0")
    app.state.engine = engine

    @app.exception_handler(CompassError)
    async def _compass_error(_, exc: CompassError):
        status = 422 if isinstance(exc, QueryError) else 400
        body = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, QueryError):
            body["rule"] = exc.rule
        if isinstance(exc, ParseError):
            body["row"] = exc.row
            body["column"] = exc.column
        return JSONResponse(status_code=status, content=body)

    @app.post("/datasets", status_code=201)
    async def upload_dataset(
        file: UploadFile = File(...),
        hints: str | None = Form(None),
        seed: int | None = Form(None),
        subsample: bool = Form(False),
    ):
        raw = await file.read()
        return engine.add_dataset(raw, hints, seed=seed, enable_subsampling=subsample)

    @app.get("/datasets/{dataset_id}")
    async def dataset_meta(dataset_id: str):
        try:
            return engine.meta(dataset_id)
        except KeyError:
            raise HTTPException(404, f"unknown dataset {dataset_id}")

    @app.get("/datasets/{dataset_id}/samples")
    async def samples(
        dataset_id: str,
        filter: str | None = QueryParam(None),
        limit: int = QueryParam(20, ge=0),
    ):
        try:
            handle = engine.handle(dataset_id)
        except KeyError:
            raise HTTPException(404, f"unknown dataset {dataset_id}")
        if filter:
            cset = C.parse_constraints(json.loads(filter), handle.schema)
            primary, fallback = C.filter(handle, cset)
            ids, fell_back = (primary, False) if primary else (fallback, True)
        else:
            ids = sorted(
                int(r) for r in list(handle.train.row_ids) + list(handle.validation.row_ids)
            )
            fell_back = False
        rows = [{"row_id": r, "values": handle.raw_row(r)} for r in ids[:limit]]
        return {"rows": rows, "fallback": fell_back}

    @app.post("/datasets/{dataset_id}/train")
    async def train(dataset_id: str, body: dict | None = None):
        try:
            engine.meta(dataset_id)
        except KeyError:
            raise HTTPException(404, f"unknown dataset {dataset_id}")
        body = body or {}
        return engine.train(dataset_id, seed=body.get("seed"), families=body.get("families"))

    @app.post("/datasets/{dataset_id}/model", status_code=201)
    async def upload_model(dataset_id: str, file: UploadFile = File(...)):
        try:
            engine.meta(dataset_id)
        except KeyError:
            raise HTTPException(404, f"unknown dataset {dataset_id}")
        blob = await file.read()
        try:
            engine.set_bundle(dataset_id, blob)
        except FormatError as exc:
            # foreign serialized models (.h5/.pt/...) are not loadable here
            raise HTTPException(415, f"only native persisted surrogates are accepted: {exc}")
        return {"loaded": True}

    @app.post("/datasets/{dataset_id}/queries", status_code=202)
    async def submit_query(dataset_id: str, query: dict):
        try:
            job_id = engine.submit(dataset_id, query)
        except KeyError:
            raise HTTPException(404, f"unknown dataset {dataset_id}")
        return {"job_id": job_id}

    @app.get("/queries/{job_id}")
    async def job_record(job_id: str):
        try:
            return engine.job(job_id)
        except KeyError:
            raise HTTPException(404, f"unknown job {job_id}")

    static = Path(static_dir) if static_dir else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if static.is_dir():
        app.mount("/", StaticFiles(directory=str(static), html=True), name="console")

    return app
