"""Sparse LIBSVM-format datasets and per-node partitioning.

Each line is ``label idx:val idx:val ...`` with 1-based, strictly increasing
indices; ``#`` starts a comment. Labels normalize to +1 / -1 (a ``0`` label
maps to -1). Files whose names end in ``.gz`` are transparently decompressed.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(eq=False)
class SparseDataset:
    """Row-wise sparse dataset with labels in {+1, -1}.

    ``rows[k]`` is a pair of aligned arrays ``(indices, values)`` with
    0-based, strictly increasing indices below ``d``.
    """

    n: int
    d: int
    rows: list
    labels: np.ndarray

    def to_dense(self, row_ids=None) -> np.ndarray:
        ids = list(range(self.n)) if row_ids is None else list(row_ids)
        out = np.zeros((len(ids), self.d))
        for k, r in enumerate(ids):
            idx, val = self.rows[r]
            out[k, idx] = val
        return out


def _parse_label(token: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ValueError(f"line {lineno}: unparsable label {token!r}") from None
    if value == 1.0:
        return 1.0
    if value == -1.0 or value == 0.0:
        return -1.0
    raise ValueError(f"line {lineno}: unsupported label {token!r}")


def parse_libsvm(lines, dim_override: int | None = None) -> SparseDataset:
    """Parse an iterable of LIBSVM-format lines.

    The dimension defaults to the largest feature index seen; pass
    ``dim_override`` to fix it (indices beyond it fail). Malformed tokens,
    non-increasing indices, and bad labels raise ``ValueError`` with the
    offending 1-based line number.
    """
    rows = []
    labels = []
    max_index = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_label(tokens[0], lineno))
        indices = []
        values = []
        prev = 0
        for token in tokens[1:]:
            head, sep, tail = token.partition(":")
            if not sep:
                raise ValueError(f"line {lineno}: malformed feature token {token!r}")
            try:
                idx = int(head)
                val = float(tail)
            except ValueError:
                raise ValueError(
                    f"line {lineno}: malformed feature token {token!r}") from None
            if idx < 1:
                raise ValueError(f"line {lineno}: feature index {idx} must be >= 1")
            if idx <= prev:
                raise ValueError(
                    f"line {lineno}: feature indices must be strictly increasing")
            prev = idx
            indices.append(idx - 1)
            values.append(val)
        max_index = max(max_index, prev)
        rows.append((np.asarray(indices, dtype=np.int64),
                     np.asarray(values, dtype=float)))
    d = max_index if dim_override is None else int(dim_override)
    if dim_override is not None and max_index > dim_override:
        raise ValueError(
            f"feature index {max_index} exceeds dimension override {dim_override}")
    d = max(d, 1)
    return SparseDataset(n=len(rows), d=d, rows=rows,
                         labels=np.asarray(labels, dtype=float))


def load_libsvm(path, dim_override: int | None = None) -> SparseDataset:
    """Parse a LIBSVM file from disk; ``.gz`` names are decompressed."""
    path = Path(path)
    opener = gzip.open if path.name.endswith(".gz") else open
    with opener(path, "rt") as handle:
        return parse_libsvm(handle, dim_override=dim_override)


def serialize_libsvm(ds: SparseDataset) -> str:
    """Render a dataset back to LIBSVM text (1-based indices, LF endings)."""
    lines = []
    for k in range(ds.n):
        idx, val = ds.rows[k]
        label = "+1" if ds.labels[k] > 0 else "-1"
        feats = " ".join(f"{i + 1}:{v:.17g}" for i, v in zip(idx, val))
        lines.append(f"{label} {feats}" if feats else label)
    return "\n".join(lines) + ("\n" if lines else "")


def partition(ds: SparseDataset, m: int, scheme: str = "uniform_shuffle",
              seed: int | None = None) -> list:
    """Split row indices into ``m`` disjoint near-equal shards.

    ``uniform_shuffle`` permutes rows with the seeded generator before
    chunking; ``label_sorted`` chunks rows sorted by label (stable), giving
    maximally label-skewed shards. Every shard is nonempty, so ``m <= n``.
    """
    if m < 1:
        raise ValueError(f"shard count must be >= 1, got {m}")
    if m > ds.n:
        raise ValueError(f"cannot split {ds.n} rows into {m} nonempty shards")
    if scheme == "uniform_shuffle":
        order = np.random.default_rng(seed).permutation(ds.n)
    elif scheme == "label_sorted":
        order = np.argsort(ds.labels, kind="stable")
    else:
        raise ValueError(f"unknown partition scheme {scheme!r}")
    sizes = np.full(m, ds.n // m, dtype=int)
    sizes[: ds.n % m] += 1
    shards = []
    start = 0
    for size in sizes:
        shards.append([int(r) for r in order[start:start + size]])
        start += size
    return shards


def node_arrays(ds: SparseDataset, shards) -> tuple[list, list]:
    """Dense per-shard feature matrices and label vectors."""
    feats = []
    labels = []
    for shard in shards:
        block = np.zeros((len(shard), ds.d))
        for k, r in enumerate(shard):
            idx, val = ds.rows[r]
            block[k, idx] = val
        feats.append(block)
        labels.append(ds.labels[list(shard)])
    return feats, labels
