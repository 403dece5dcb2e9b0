"""Domain types and file I/O shared by every other module.

Conventions baked in here:
  * Example identity is the positional index 0..n-1; external ids are
    metadata used for alignment checks.
  * Canonical score orientation is higher_is_harder. Scores imported as
    lower_is_harder (e.g. margin-style scores where a small value means a
    hard example) are negated by `canonicalize_scores`.
  * Text formats carry floats at 17 significant digits so a write/read
    cycle reproduces the double exactly; the binary embedding format is
    bit-exact by construction.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DataError

SCORE_KINDS = ("forgetting", "aum", "el2n", "entropy", "synthetic", "custom")
ORIENTATIONS = ("higher_is_harder", "lower_is_harder")

EMBEDDING_MAGIC = b"CSEM"
EMBEDDING_VERSION = 1


def fmt_float(x: float) -> str:
    """Decimal text form that round-trips a double (17 significant digits)."""
    return f"{float(x):.17g}"


def _timestamp() -> str:
    """ISO-8601 UTC timestamp; honors SOURCE_DATE_EPOCH for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        dt = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        dt = datetime.now(tz=timezone.utc)
    return dt.replace(microsecond=0).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class ScoreTable:
    """Per-example difficulty scores with ids and labels.

    ids, labels and scores are aligned, same-length, nonempty arrays; ids
    must be unique and scores finite.
    """

    ids: np.ndarray
    labels: np.ndarray
    scores: np.ndarray
    score_kind: str = "custom"
    orientation: str = "higher_is_harder"

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids, dtype=np.uint64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "scores", scores)
        n = len(ids)
        if n == 0:
            raise DataError("score table is empty")
        if len(labels) != n or len(scores) != n:
            raise DataError(
                f"score table misaligned: {n} ids, {len(labels)} labels, {len(scores)} scores"
            )
        if self.score_kind not in SCORE_KINDS:
            raise DataError(f"unknown score_kind {self.score_kind!r}")
        if self.orientation not in ORIENTATIONS:
            raise DataError(f"unknown orientation {self.orientation!r}")
        bad = np.flatnonzero(~np.isfinite(scores))
        if bad.size:
            raise DataError(f"non-finite score at index {int(bad[0])}")
        if np.unique(ids).size != n:
            seen: set[int] = set()
            for i in ids.tolist():
                if i in seen:
                    raise DataError(f"duplicate id {i}")
                seen.add(i)
        if np.any(labels < 0):
            i = int(np.flatnonzero(labels < 0)[0])
            raise DataError(f"negative label at index {i}")

    @property
    def n(self) -> int:
        return len(self.ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScoreTable):
            return NotImplemented
        return (
            self.score_kind == other.score_kind
            and self.orientation == other.orientation
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.scores, other.scores)
        )


def canonicalize_scores(table: ScoreTable) -> ScoreTable:
    """Return `table` in the canonical higher_is_harder orientation.

    lower_is_harder tables come back with every score negated; canonical
    tables come back unchanged. Idempotent, and preserves the hardness
    ranking either way.
    """
    if table.orientation == "higher_is_harder":
        return table
    return replace(table, scores=-table.scores, orientation="higher_is_harder")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """n x d float32 feature matrix, optionally carrying row ids."""

    values: np.ndarray
    ids: np.ndarray | None = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise DataError(f"embedding matrix must be 2-d, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        n, d = values.shape
        if n == 0 or d == 0:
            raise DataError(f"degenerate embedding matrix shape {n}x{d}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite embedding entry at row {int(bad[0])}, column {int(bad[1])}")
        if self.ids is not None:
            ids = np.ascontiguousarray(self.ids, dtype=np.uint64)
            object.__setattr__(self, "ids", ids)
            if len(ids) != n:
                raise DataError(f"embedding has {n} rows but {len(ids)} ids")
            if np.unique(ids).size != n:
                raise DataError("duplicate embedding ids")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        if (self.ids is None) != (other.ids is None):
            return False
        if self.ids is not None and not np.array_equal(self.ids, other.ids):
            return False
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class SelectionResult:
    """A selected coreset: sorted indices into the source table plus provenance."""

    selected: np.ndarray
    method: str
    params: dict[str, Any]
    source_n: int
    created_at: str = field(default_factory=_timestamp)

    def __post_init__(self):
        sel = np.ascontiguousarray(self.selected, dtype=np.int64)
        object.__setattr__(self, "selected", sel)
        if np.any(np.diff(sel) <= 0):
            raise DataError(f"selection of method {self.method!r} is not sorted-unique")
        if sel.size and (sel[0] < 0 or sel[-1] >= self.source_n):
            bad = int(sel[0]) if sel[0] < 0 else int(sel[-1])
            raise DataError(f"selected index {bad} outside [0, {self.source_n})")

    @property
    def m(self) -> int:
        return len(self.selected)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SelectionResult):
            return NotImplemented
        return (
            self.method == other.method
            and self.params == other.params
            and self.source_n == other.source_n
            and self.created_at == other.created_at
            and np.array_equal(self.selected, other.selected)
        )


@dataclass(frozen=True)
class PRCurve:
    """Empirical coverage curve: i-th point says a radius of radii[i] covers
    coverage[i] of the evaluation points (coverage steps by 1/n_eval)."""

    radii: np.ndarray
    coverage: np.ndarray
    excluded_count: int = 0

    def __post_init__(self):
        radii = np.ascontiguousarray(self.radii, dtype=np.float64)
        coverage = np.ascontiguousarray(self.coverage, dtype=np.float64)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "coverage", coverage)
        if radii.size == 0:
            raise DataError("empty p-r curve")
        if len(radii) != len(coverage):
            raise DataError(f"p-r curve misaligned: {len(radii)} radii, {len(coverage)} coverages")
        if np.any(radii < 0):
            raise DataError("negative radius in p-r curve")
        if np.any(np.diff(radii) < 0):
            raise DataError("radii not sorted")
        n = len(radii)
        expected = np.arange(1, n + 1, dtype=np.float64) / n
        if not np.allclose(coverage, expected, rtol=0, atol=1e-12):
            raise DataError("coverage must step uniformly from 1/n to 1")
        if self.excluded_count < 0:
            raise DataError("negative excluded_count")

    @property
    def n_eval(self) -> int:
        return len(self.radii)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PRCurve):
            return NotImplemented
        return (
            self.excluded_count == other.excluded_count
            and np.array_equal(self.radii, other.radii)
            and np.array_equal(self.coverage, other.coverage)
        )


# ---------------------------------------------------------------------------
# Score table I/O
#
# CSV: header `id,label,score`; `#`-prefixed comment lines may carry
# `score_kind=...` / `orientation=...` metadata. JSONL: one object per line
# with keys id/label/score and optional score_kind/orientation.
# ---------------------------------------------------------------------------


def _detect_score_format(path: Path) -> str:
    return "jsonl" if path.suffix.lower() in (".jsonl", ".json") else "csv"


def load_scores(path: str | os.PathLike, format: str | None = None) -> ScoreTable:
    """Read a ScoreTable from a CSV or JSONL file. Errors carry line numbers."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"score file not found: {p}")
    fmt = format or _detect_score_format(p)
    if fmt == "csv":
        return _load_scores_csv(p)
    if fmt == "jsonl":
        return _load_scores_jsonl(p)
    raise DataError(f"unknown score format {fmt!r} (expected csv or jsonl)")


def _parse_meta(meta: dict[str, str], p: Path) -> tuple[str, str]:
    kind = meta.get("score_kind", "custom")
    orient = meta.get("orientation", "higher_is_harder")
    if kind not in SCORE_KINDS:
        raise DataError(f"{p}: unknown score_kind {kind!r}")
    if orient not in ORIENTATIONS:
        raise DataError(f"{p}: unknown orientation {orient!r}")
    return kind, orient


def _finish_table(p, ids, labels, scores, meta) -> ScoreTable:
    kind, orient = _parse_meta(meta, p)
    if not ids:
        raise DataError(f"{p}: no score rows")
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            raise DataError(f"{p}: duplicate id {i}")
        seen.add(i)
    try:
        return ScoreTable(
            ids=np.array(ids, dtype=np.uint64),
            labels=np.array(labels, dtype=np.int64),
            scores=np.array(scores, dtype=np.float64),
            score_kind=kind,
            orientation=orient,
        )
    except DataError as e:
        raise DataError(f"{p}: {e}") from None


def _load_scores_csv(p: Path) -> ScoreTable:
    ids: list[int] = []
    labels: list[int] = []
    scores: list[float] = []
    meta: dict[str, str] = {}
    header_seen = False
    with open(p, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                cols = [c.strip() for c in line.split(",")]
                if cols != ["id", "label", "score"]:
                    raise DataError(
                        f"{p}:{lineno}: expected header 'id,label,score', got {line!r}"
                    )
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataError(f"{p}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                ids.append(int(parts[0]))
                labels.append(int(parts[1]))
                scores.append(float(parts[2]))
            except ValueError as e:
                raise DataError(f"{p}:{lineno}: unparseable row: {e}") from None
    if not header_seen:
        raise DataError(f"{p}: missing 'id,label,score' header")
    return _finish_table(p, ids, labels, scores, meta)


def _load_scores_jsonl(p: Path) -> ScoreTable:
    ids: list[int] = []
    labels: list[int] = []
    scores: list[float] = []
    meta: dict[str, str] = {}
    with open(p, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{p}:{lineno}: invalid JSON: {e}") from None
            if not isinstance(rec, dict):
                raise DataError(f"{p}:{lineno}: expected an object per line")
            for key in ("id", "label", "score"):
                if key not in rec:
                    raise DataError(f"{p}:{lineno}: missing key {key!r}")
            try:
                ids.append(int(rec["id"]))
                labels.append(int(rec["label"]))
                scores.append(float(rec["score"]))
            except (TypeError, ValueError) as e:
                raise DataError(f"{p}:{lineno}: unparseable record: {e}") from None
            for key in ("score_kind", "orientation"):
                if key in rec:
                    prev = meta.setdefault(key, rec[key])
                    if prev != rec[key]:
                        raise DataError(f"{p}:{lineno}: conflicting {key} values")
    return _finish_table(p, ids, labels, scores, meta)


def save_scores(table: ScoreTable, path: str | os.PathLike, format: str | None = None) -> None:
    """Write a ScoreTable as CSV or JSONL (format inferred from suffix by default)."""
    p = Path(path)
    fmt = format or _detect_score_format(p)
    if fmt == "csv":
        lines = [
            f"# score_kind={table.score_kind}",
            f"# orientation={table.orientation}",
            "id,label,score",
        ]
        for i, lab, s in zip(table.ids.tolist(), table.labels.tolist(), table.scores.tolist()):
            lines.append(f"{i},{lab},{fmt_float(s)}")
        atomic_write_text(p, "\n".join(lines) + "\n")
    elif fmt == "jsonl":
        lines = []
        for i, lab, s in zip(table.ids.tolist(), table.labels.tolist(), table.scores.tolist()):
            rec = {
                "id": i,
                "label": lab,
                "score": float(fmt_float(s)),
                "score_kind": table.score_kind,
                "orientation": table.orientation,
            }
            lines.append(json.dumps(rec))
        atomic_write_text(p, "\n".join(lines) + "\n")
    else:
        raise DataError(f"unknown score format {fmt!r} (expected csv or jsonl)")


# ---------------------------------------------------------------------------
# Embedding I/O
#
# Binary layout: magic "CSEM", version byte 0x01, n (u64 LE), d (u64 LE),
# n*d float32 LE row-major, then an id block flag byte (0x01 -> n u64 LE ids
# follow, 0x00 or EOF -> none). A non-binary file is parsed as CSV of floats.
# ---------------------------------------------------------------------------


def write_embeddings(matrix: EmbeddingMatrix, path: str | os.PathLike) -> None:
    """Write the binary embedding format (source of truth for embeddings)."""
    n, d = matrix.values.shape
    blob = bytearray()
    blob += EMBEDDING_MAGIC
    blob += struct.pack("<B", EMBEDDING_VERSION)
    blob += struct.pack("<QQ", n, d)
    blob += matrix.values.astype("<f4", copy=False).tobytes(order="C")
    if matrix.ids is not None:
        blob += struct.pack("<B", 1)
        blob += matrix.ids.astype("<u8", copy=False).tobytes()
    # no trailing flag when ids are absent; EOF marks the end
    atomic_write_bytes(Path(path), bytes(blob))


def load_embeddings(path: str | os.PathLike) -> EmbeddingMatrix:
    """Read an EmbeddingMatrix from the binary format or a CSV of floats."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"embedding file not found: {p}")
    with open(p, "rb") as fh:
        head = fh.read(4)
        if head == EMBEDDING_MAGIC:
            return _load_embeddings_binary(p, fh)
    return _load_embeddings_csv(p)


def _load_embeddings_binary(p: Path, fh) -> EmbeddingMatrix:
    header = fh.read(17)
    if len(header) < 17:
        raise DataError(f"{p}: truncated embedding header")
    version = header[0]
    if version != EMBEDDING_VERSION:
        raise DataError(f"{p}: unsupported embedding format version {version}")
    n, d = struct.unpack("<QQ", header[1:])
    if n == 0 or d == 0:
        raise DataError(f"{p}: degenerate embedding matrix shape {n}x{d}")
    want = n * d * 4
    payload = fh.read(want)
    if len(payload) < want:
        raise DataError(f"{p}: truncated payload, expected {want} bytes, got {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    ids = None
    flag = fh.read(1)
    if flag == b"\x01":
        id_bytes = fh.read(n * 8)
        if len(id_bytes) < n * 8:
            raise DataError(f"{p}: truncated id block")
        ids = np.frombuffer(id_bytes, dtype="<u8")
    elif flag not in (b"", b"\x00"):
        raise DataError(f"{p}: unknown id block flag 0x{flag.hex()}")
    try:
        return EmbeddingMatrix(values=values, ids=ids)
    except DataError as e:
        raise DataError(f"{p}: {e}") from None


def _load_embeddings_csv(p: Path) -> EmbeddingMatrix:
    rows: list[list[float]] = []
    with open(p, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = [float(v) for v in line.split(",")]
            except ValueError as e:
                raise DataError(f"{p}:{lineno}: unparseable row: {e}") from None
            if rows and len(row) != len(rows[0]):
                raise DataError(
                    f"{p}:{lineno}: ragged row, expected {len(rows[0])} values, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise DataError(f"{p}: not a binary embedding file (magic mismatch) and no CSV rows")
    try:
        return EmbeddingMatrix(values=np.array(rows, dtype=np.float32))
    except DataError as e:
        raise DataError(f"{p}: {e}") from None


# ---------------------------------------------------------------------------
# Selection manifest I/O (JSON)
# ---------------------------------------------------------------------------


def selection_to_json(result: SelectionResult) -> str:
    doc = {
        "method": result.method,
        "params": result.params,
        "source_n": result.source_n,
        "selected": result.selected.tolist(),
        "created_at": result.created_at,
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def save_selection(result: SelectionResult, path: str | os.PathLike) -> None:
    atomic_write_text(Path(path), selection_to_json(result))


def load_selection(path: str | os.PathLike) -> SelectionResult:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"selection manifest not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{p}: invalid JSON: {e}") from None
    for key in ("method", "params", "source_n", "selected", "created_at"):
        if key not in doc:
            raise DataError(f"{p}: missing key {key!r}")
    selected = doc["selected"]
    if not isinstance(selected, list) or any(not isinstance(i, int) for i in selected):
        raise DataError(f"{p}: 'selected' must be a list of integers")
    if len(set(selected)) != len(selected):
        seen: set[int] = set()
        for i in selected:
            if i in seen:
                raise DataError(f"{p}: duplicate selected index {i}")
            seen.add(i)
    if selected != sorted(selected):
        raise DataError(f"{p}: 'selected' must be sorted ascending")
    try:
        return SelectionResult(
            selected=np.array(selected, dtype=np.int64),
            method=str(doc["method"]),
            params=dict(doc["params"]),
            source_n=int(doc["source_n"]),
            created_at=str(doc["created_at"]),
        )
    except DataError as e:
        raise DataError(f"{p}: {e}") from None


# ---------------------------------------------------------------------------
# Atomic writes: temp file in the destination directory, then rename, so a
# failure never leaves a partial output behind.
# ---------------------------------------------------------------------------


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
