"""Trace ingestion: CSV parsing, feature schema, deterministic preprocessing.

Pipeline: drop rows with missing values, drop user-listed columns, optionally
reduce oversized tables to an informative subset, split 80/20, fit the
standardizer on the training partition only, ordinal-encode categoricals by
sorted category name.
"""

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import EngineConfig
from .errors import DatasetEmpty, ParseError, SchemaError, UnknownCategory, UnknownCode
from .rng import make_rng

NUMERIC = "numeric"
CATEGORICAL = "categorical"
ROLES = ("user_feature", "system_feature", "target")
VAL_FRACTION = 0.20


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    role: str
    target_task: str | None = None
    mutable: bool = True
    categories: tuple = ()
    vmin: float = math.nan
    vmax: float = math.nan


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        roles = {c.role for c in self.columns}
        if "target" not in roles:
            raise SchemaError("schema needs at least one target column")
        if "user_feature" not in roles:
            raise SchemaError("schema needs at least one user_feature column")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"unknown column: {name}")

    @property
    def feature_columns(self) -> tuple:
        return tuple(c for c in self.columns if c.role != "target")

    @property
    def target_columns(self) -> tuple:
        return tuple(c for c in self.columns if c.role == "target")

    @property
    def feature_names(self) -> list:
        return [c.name for c in self.feature_columns]

    @property
    def target_names(self) -> list:
        return [c.name for c in self.target_columns]

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            d = {"name": c.name, "kind": c.kind, "role": c.role, "mutable": c.mutable}
            if c.role == "target":
                d["target_task"] = c.target_task
            if c.kind == CATEGORICAL:
                d["categories"] = list(c.categories)
            else:
                d["min"] = c.vmin
                d["max"] = c.vmax
            cols.append(d)
        return {"columns": cols}


@dataclass
class Table:
    """Columnar rows; numeric columns are float64, categoricals int64 codes."""

    row_ids: np.ndarray
    columns: dict

    def __len__(self) -> int:
        return len(self.row_ids)

    def subset(self, positions) -> "Table":
        positions = np.asarray(positions, dtype=np.int64)
        return Table(
            row_ids=self.row_ids[positions].copy(),
            columns={k: v[positions].copy() for k, v in self.columns.items()},
        )


@dataclass
class DatasetHandle:
    id: str
    schema: FeatureSchema
    train: Table
    validation: Table
    scaler: dict  # numeric feature name -> (mean, std) fitted on train
    encoder: dict  # categorical column name -> {category: code}
    seed: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def feature_order(self) -> list:
        return self.schema.feature_names

    def raw_value(self, spec: ColumnSpec, stored):
        if spec.kind == CATEGORICAL:
            return spec.categories[int(stored)]
        return float(stored)

    def raw_row(self, row_id: int, table: Table | None = None) -> dict:
        for t in ([table] if table is not None else [self.train, self.validation]):
            pos = np.flatnonzero(t.row_ids == row_id)
            if len(pos):
                p = int(pos[0])
                return {
                    c.name: self.raw_value(c, t.columns[c.name][p]) for c in self.schema.columns
                }
        raise KeyError(f"row_id {row_id} not found")

    def encode_table(self, table: Table) -> np.ndarray:
        out = np.empty((len(table), len(self.feature_order)), dtype=np.float64)
        for j, spec in enumerate(self.schema.feature_columns):
            col = table.columns[spec.name]
            if spec.kind == NUMERIC:
                mean, std = self.scaler[spec.name]
                out[:, j] = (col - mean) / std if std > 0 else 0.0
            else:
                out[:, j] = col
        return out

    def target_matrix(self, table: Table) -> np.ndarray:
        """Raw values for regression targets / codes for classification ones."""
        cols = [table.columns[c.name].astype(np.float64) for c in self.schema.target_columns]
        return np.column_stack(cols) if cols else np.empty((len(table), 0))

    def encoded_train(self) -> np.ndarray:
        if "Ztr" not in self._cache:
            self._cache["Ztr"] = self.encode_table(self.train)
        return self._cache["Ztr"]

    def encoded_validation(self) -> np.ndarray:
        if "Zval" not in self._cache:
            self._cache["Zval"] = self.encode_table(self.validation)
        return self._cache["Zval"]


def parse_schema_hints(doc) -> tuple:
    """Accepts the hints JSON document (str/dict); returns (hints, drop)."""
    if doc is None:
        return {}, []
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    hints = {}
    for col in doc.get("columns", []):
        name = col["name"]
        hint = {}
        for key in ("kind", "role", "target_task", "mutable"):
            if key in col:
                hint[key] = col[key]
        if hint.get("kind") not in (None, NUMERIC, CATEGORICAL):
            raise SchemaError(f"column {name}: bad kind {hint['kind']!r}")
        if hint.get("role") not in (None,) + ROLES:
            raise SchemaError(f"column {name}: bad role {hint['role']!r}")
        hints[name] = hint
    return hints, list(doc.get("drop", []))


def ingest(
    source,
    schema_hints=None,
    drop_columns=None,
    seed: int = 0,
    enable_subsampling: bool = False,
    config: EngineConfig | None = None,
) -> DatasetHandle:
    """Parse a CSV byte stream into an immutable, reproducibly split handle."""
    config = config or EngineConfig()
    raw = _read_bytes(source)
    hints, hinted_drop = parse_schema_hints(schema_hints)
    drop = list(drop_columns or []) + [c for c in hinted_drop if c not in (drop_columns or [])]

    header, rows = _parse_csv(raw)
    for name in drop:
        if name not in header:
            raise SchemaError(f"drop list names unknown column: {name}")
    for name in hints:
        if name not in header:
            raise SchemaError(f"schema hint names unknown column: {name}")

    keep = [i for i, name in enumerate(header) if name not in set(drop)]
    names = [header[i] for i in keep]
    if not names:
        raise SchemaError("all columns dropped")

    # missing-value rows removed outright; no imputation
    kept_rows = [r for r in rows if all(r[i] != "" for i in keep)]
    if not kept_rows:
        raise DatasetEmpty("no rows remain after missing-value filtering")

    kinds = {}
    for i, name in zip(keep, names):
        tokens = [r[i] for r in kept_rows]
        hint_kind = hints.get(name, {}).get("kind")
        kinds[name] = _resolve_kind(name, tokens, hint_kind, rows, i)

    specs = []
    columns = {}
    for i, name in zip(keep, names):
        tokens = [r[i] for r in kept_rows]
        hint = hints.get(name, {})
        role = hint.get("role", "user_feature")
        kind = kinds[name]
        task = hint.get("target_task")
        if role == "target" and task is None:
            task = "regression" if kind == NUMERIC else "classification"
        if role == "target" and task == "regression" and kind != NUMERIC:
            raise SchemaError(f"column {name}: regression target must be numeric")
        mutable = hint.get("mutable", role == "user_feature")
        if kind == NUMERIC:
            values = np.array([float(t) for t in tokens], dtype=np.float64)
            specs.append(
                ColumnSpec(name, kind, role, task, mutable, (), float(values.min()), float(values.max()))
            )
            columns[name] = values
        else:
            cats = tuple(sorted(set(tokens)))
            code = {c: k for k, c in enumerate(cats)}
            specs.append(ColumnSpec(name, kind, role, task, mutable, cats))
            columns[name] = np.array([code[t] for t in tokens], dtype=np.int64)

    schema = FeatureSchema(tuple(specs))
    tasks = {c.target_task for c in schema.target_columns}
    if tasks == {"regression", "classification"}:
        raise SchemaError("targets must be all-regression or a single classification column")
    if "classification" in tasks and len(schema.target_columns) > 1:
        raise SchemaError("classification datasets support exactly one target column")

    table = Table(row_ids=np.arange(len(kept_rows), dtype=np.int64), columns=columns)

    if enable_subsampling and len(table) > config.sampling.threshold_rows:
        from . import sampling  # deferred: sampling builds fold models on top of this module

        scores = sampling.score_subset(table, schema, seed, config=config)
        chosen = sampling.select_subset(scores, config.sampling.retention, seed)
        pos = {int(r): p for p, r in enumerate(table.row_ids)}
        table = table.subset([pos[r] for r in chosen])

    n = len(table)
    n_val = int(round(VAL_FRACTION * n))
    perm = make_rng(seed, "split").permutation(n)
    handle = DatasetHandle(
        id=_dataset_id(raw, schema_hints, drop, seed, enable_subsampling),
        schema=schema,
        train=table.subset(np.sort(perm[n_val:])),
        validation=table.subset(np.sort(perm[:n_val])),
        scaler={},
        encoder={
            c.name: {cat: k for k, cat in enumerate(c.categories)}
            for c in schema.columns
            if c.kind == CATEGORICAL
        },
        seed=seed,
    )
    for spec in schema.feature_columns:
        if spec.kind == NUMERIC:
            col = handle.train.columns[spec.name]
            handle.scaler[spec.name] = (float(col.mean()), float(col.std()))
    return handle


def normalize(handle: DatasetHandle, row: dict, on_unseen: str = "raise") -> np.ndarray:
    """Encode a raw configuration: standardized numerics + categorical codes.

    on_unseen="mismatch" maps unseen categories to code -1 (never equal to a
    fitted code), the farthest-distance treatment used by trust scoring.
    """
    out = np.empty(len(handle.feature_order), dtype=np.float64)
    for j, spec in enumerate(handle.schema.feature_columns):
        if spec.name not in row:
            raise SchemaError(f"row is missing feature column: {spec.name}")
        value = row[spec.name]
        if spec.kind == NUMERIC:
            mean, std = handle.scaler[spec.name]
            value = float(value)
            out[j] = (value - mean) / std if std > 0 else 0.0
        else:
            code = handle.encoder[spec.name].get(str(value))
            if code is None:
                if on_unseen == "mismatch":
                    code = -1
                else:
                    raise UnknownCategory(f"{spec.name}: unseen category {value!r}")
            out[j] = code
    return out


def denormalize(handle: DatasetHandle, vector) -> dict:
    """Exact inverse of normalize (numerics within float rounding)."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (len(handle.feature_order),):
        raise SchemaError(
            f"vector has shape {vector.shape}, expected ({len(handle.feature_order)},)"
        )
    row = {}
    for j, spec in enumerate(handle.schema.feature_columns):
        if spec.kind == NUMERIC:
            mean, std = handle.scaler[spec.name]
            row[spec.name] = mean + vector[j] * std if std > 0 else mean
        else:
            code = int(round(vector[j]))
            if not 0 <= code < len(spec.categories):
                raise UnknownCode(f"{spec.name}: code {code} outside category map")
            row[spec.name] = spec.categories[code]
    return row


def table_to_csv(handle_or_schema, table: Table) -> str:
    schema = getattr(handle_or_schema, "schema", handle_or_schema)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = [c.name for c in schema.columns]
    writer.writerow(names)
    for p in range(len(table)):
        out = []
        for c in schema.columns:
            v = table.columns[c.name][p]
            out.append(c.categories[int(v)] if c.kind == CATEGORICAL else repr(float(v)))
        writer.writerow(out)
    return buf.getvalue()


def _read_bytes(source) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, str):
        return source.encode("utf-8")
    return source.read()


def _parse_csv(raw: bytes):
    text = raw.decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file: no header row")
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in header")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} cells, got {len(row)}", row=lineno)
        rows.append([c.strip() for c in row])
    return header, rows


def _resolve_kind(name, tokens, hint_kind, all_rows, col_idx):
    if hint_kind == CATEGORICAL:
        return CATEGORICAL
    bad = None
    for k, t in enumerate(tokens):
        if not _is_float(t):
            bad = (k, t)
            break
    if bad is None:
        return NUMERIC
    if hint_kind == NUMERIC:
        # report the position in the original file, header = line 1
        want = bad[1]
        for lineno, r in enumerate(all_rows, start=2):
            if r[col_idx] == want:
                raise ParseError(
                    f"column {name!r} declared numeric but row {lineno} holds {want!r}",
                    row=lineno,
                    column=name,
                )
        raise ParseError(f"column {name!r} declared numeric but holds {want!r}", column=name)
    return CATEGORICAL


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _dataset_id(raw, hints, drop, seed, subsampling) -> str:
    h = hashlib.sha256()
    h.update(raw)
    canon = hints if isinstance(hints, (str, bytes)) else json.dumps(hints, sort_keys=True)
    h.update(canon.encode() if isinstance(canon, str) else canon)
    h.update(json.dumps(sorted(drop)).encode())
    h.update(str(seed).encode())
    h.update(b"1" if subsampling else b"0")
    return h.hexdigest()[:16]
