"""Plain-text formats for matrices, sampling patterns and manifests.

Matrix format: first line ``rows cols``, then one line per row with
whitespace-separated decimals written with 17 significant digits so a
write/read round trip is exact.

Pattern format: first line ``rows cols``, then one zero-indexed ``i j`` pair
per observed entry in row-major order.
"""

import json
from pathlib import Path

import numpy as np

from .exceptions import DimensionMismatchError
from .linalg import SamplingPattern, as_matrix


def format_float(x):
    return repr(float(x))


def dumps_matrix(A):
    A = as_matrix(A)
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines.extend(" ".join(format_float(v) for v in row) for row in A)
    return "\n".join(lines) + "\n"


def loads_matrix(text):
    tokens = text.split()
    if len(tokens) < 2:
        raise DimensionMismatchError("missing 'rows cols' header")
    rows, cols = int(tokens[0]), int(tokens[1])
    values = tokens[2:]
    if len(values) != rows * cols:
        raise DimensionMismatchError(
            f"header says {rows}x{cols} but found {len(values)} entries"
        )
    return as_matrix(np.array([float(v) for v in values]).reshape(rows, cols))


def write_matrix(path, A):
    Path(path).write_text(dumps_matrix(A))


def read_matrix(path):
    return loads_matrix(Path(path).read_text())


def dumps_pattern(pattern):
    rows, cols = pattern.indices()
    lines = [f"{pattern.shape[0]} {pattern.shape[1]}"]
    lines.extend(f"{i} {j}" for i, j in zip(rows.tolist(), cols.tolist()))
    return "\n".join(lines) + "\n"


def loads_pattern(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DimensionMismatchError("missing 'rows cols' header")
    m, n = (int(t) for t in lines[0].split())
    pairs = np.array([[int(t) for t in ln.split()] for ln in lines[1:]], dtype=int)
    if pairs.size == 0:
        return SamplingPattern(np.zeros((m, n), dtype=bool))
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise DimensionMismatchError("pattern lines must hold exactly two indices")
    if pairs.min() < 0 or pairs[:, 0].max() >= m or pairs[:, 1].max() >= n:
        raise DimensionMismatchError("pattern index out of range")
    return SamplingPattern.from_indices((m, n), pairs[:, 0], pairs[:, 1])


def write_pattern(path, pattern):
    Path(path).write_text(dumps_pattern(pattern))


def read_pattern(path):
    return loads_pattern(Path(path).read_text())


def write_manifest(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_manifest(path):
    return json.loads(Path(path).read_text())
