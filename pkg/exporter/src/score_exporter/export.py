"""Write score tables and embeddings in the pruning toolkit's file formats.

The formats are reproduced here byte-for-byte rather than imported, so the
exporter stays framework- and toolkit-independent:

  * score CSV: `# score_kind=` / `# orientation=` comment lines, then an
    `id,label,score` header, floats at 17 significant digits.
  * embeddings: magic `CSEM`, version 0x01, n and d as little-endian u64,
    n*d float32 little-endian row-major, id-block flag byte (0x01 + n u64
    ids when ids are attached, else 0x00).

Tables are canonicalized to higher_is_harder before writing, so a
margin-style table lands on disk with its scores negated and consumers
never see a non-canonical orientation.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scores import ScoreTable, canonicalize
from .trace import TraceError

EMBEDDING_MAGIC = b"CSEM"
EMBEDDING_VERSION = 1


@dataclass(frozen=True, eq=False)
class EmbeddingExport:
    """Float32 feature rows with ids aligned to the score tables."""

    ids: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", np.ascontiguousarray(self.ids, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float32))
        if self.values.ndim != 2:
            raise TraceError(f"embeddings must be 2-d, got shape {self.values.shape}")
        if len(self.ids) != self.values.shape[0]:
            raise TraceError(
                f"{len(self.ids)} embedding ids for {self.values.shape[0]} rows"
            )


def write_score_csv(table: ScoreTable, path: str | os.PathLike) -> None:
    if table.n == 0:
        raise TraceError("refusing to export an empty score table")
    lines = [
        f"# score_kind={table.score_kind}",
        f"# orientation={table.orientation}",
    ]
    if table.metadata:
        for key in sorted(table.metadata):
            lines.append(f"# {key}={table.metadata[key]}")
    lines.append("id,label,score")
    for i, lab, s in zip(table.ids.tolist(), table.labels.tolist(), table.scores.tolist()):
        lines.append(f"{i},{lab},{s:.17g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_embedding_file(emb: EmbeddingExport, path: str | os.PathLike) -> None:
    n, d = emb.values.shape
    if n == 0 or d == 0:
        raise TraceError(f"refusing to export a degenerate {n}x{d} embedding matrix")
    blob = bytearray()
    blob += EMBEDDING_MAGIC
    blob += struct.pack("<B", EMBEDDING_VERSION)
    blob += struct.pack("<QQ", n, d)
    blob += emb.values.astype("<f4", copy=False).tobytes(order="C")
    blob += struct.pack("<B", 1)
    blob += emb.ids.astype("<u8").tobytes()
    Path(path).write_bytes(bytes(blob))


def export(
    tables: list[ScoreTable],
    embeddings: EmbeddingExport | None,
    out_dir: str | os.PathLike,
) -> list[Path]:
    """Write every table (canonicalized) plus the optional embedding file.

    Score files are named by score kind; ids must agree between every
    table and the embeddings.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not tables:
        raise TraceError("nothing to export: no score tables")
    written: list[Path] = []
    reference_ids = tables[0].ids
    for table in tables:
        if table.n == 0:
            raise TraceError("refusing to export an empty score table")
        if not np.array_equal(table.ids, reference_ids):
            raise TraceError("score tables disagree on example ids")
        canon = canonicalize(table)
        path = out / f"{canon.score_kind}.csv"
        write_score_csv(canon, path)
        written.append(path)
    if embeddings is not None:
        if not np.array_equal(embeddings.ids, reference_ids):
            raise TraceError("embedding ids do not match score table ids")
        path = out / "embeddings.bin"
        write_embedding_file(embeddings, path)
        written.append(path)
    return written
