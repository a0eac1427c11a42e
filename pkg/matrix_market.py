"""
Matrix Market I/O
Coordinate real general matrices (1-indexed), dense vectors as one value per
line, and the CSV side outputs (scores, provenance).
"""
import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import scipy.sparse as sp

from errors import MatrixMarketError
from matrix_core import SparseRowMatrix, as_row_matrix
from sketch_sampling import SampledMatrix, ScoreVector

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MM_HEADER = "%%MatrixMarket matrix coordinate real general"
_SUPPORTED_FIELDS = ("real", "integer", "double")


def _fmt(value: float) -> str:
    # 17 significant digits round-trip any float64
    return f"{value:.17g}"


def _parse_header(line: str, path: str):
    tokens = line.strip().split()
    if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("missing %%MatrixMarket header", line=1, path=path)
    obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"only 'matrix coordinate' is supported, got '{obj} {fmt}'", line=1, path=path)
    if field not in _SUPPORTED_FIELDS:
        raise MatrixMarketError(f"unsupported field '{field}'", line=1, path=path)
    if symmetry != "general":
        raise MatrixMarketError(f"unsupported symmetry '{symmetry}'", line=1, path=path)


def read_matrix_market(path: PathLike) -> SparseRowMatrix:
    """
    Parse a coordinate Matrix Market file into a SparseRowMatrix.

    Raises:
        MatrixMarketError: with the offending line number
    """
    path = str(path)
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise MatrixMarketError(f"cannot read file: {e}", path=path) from e
    if not lines:
        raise MatrixMarketError("empty file", line=1, path=path)

    _parse_header(lines[0], path)

    shape = None
    expected = 0
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []

    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        tokens = line.split()

        if shape is None:
            if len(tokens) != 3:
                raise MatrixMarketError("size line must be 'rows cols nnz'", line=lineno, path=path)
            try:
                n, d, expected = (int(t) for t in tokens)
            except ValueError:
                raise MatrixMarketError(f"bad size line '{line}'", line=lineno, path=path)
            if n < 0 or d < 1 or expected < 0:
                raise MatrixMarketError(f"invalid dimensions {n} x {d}, nnz {expected}", line=lineno, path=path)
            shape = (n, d)
            continue

        if len(tokens) != 3:
            raise MatrixMarketError(f"expected 'row col value', got {len(tokens)} fields", line=lineno, path=path)
        try:
            i, j, v = int(tokens[0]), int(tokens[1]), float(tokens[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry '{line}'", line=lineno, path=path)
        if not (1 <= i <= shape[0] and 1 <= j <= shape[1]):
            raise MatrixMarketError(f"index ({i}, {j}) outside {shape[0]} x {shape[1]}", line=lineno, path=path)
        if not np.isfinite(v):
            raise MatrixMarketError(f"non-finite value '{tokens[2]}'", line=lineno, path=path)
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)

    if shape is None:
        raise MatrixMarketError("missing size line", line=len(lines), path=path)
    if len(vals) != expected:
        raise MatrixMarketError(f"size line declares {expected} entries, found {len(vals)}", path=path)

    coo = sp.coo_matrix((vals, (rows, cols)), shape=shape, dtype=np.float64)
    A = as_row_matrix(coo)
    logger.debug(f"read {path}: {A.shape[0]} x {A.shape[1]}, nnz={A.nnz}")
    return A


def write_matrix_market(path: PathLike, A: SparseRowMatrix, comment: str = ""):
    """Write A row-major with 17 significant digits"""
    A = as_row_matrix(A)
    coo = A.tocoo()
    out = [MM_HEADER]
    if comment:
        out.extend(f"% {c}" for c in comment.splitlines())
    out.append(f"{A.shape[0]} {A.shape[1]} {A.nnz}")
    out.extend(f"{i + 1} {j + 1} {_fmt(v)}" for i, j, v in zip(coo.row, coo.col, coo.data))
    Path(path).write_text("\n".join(out) + "\n")


def read_vector(path: PathLike) -> np.ndarray:
    """One value per line; blank lines and '%' comments are skipped"""
    path = str(path)
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise MatrixMarketError(f"cannot read file: {e}", path=path) from e

    values = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        try:
            v = float(line)
        except ValueError:
            raise MatrixMarketError(f"cannot parse value '{line}'", line=lineno, path=path)
        if not np.isfinite(v):
            raise MatrixMarketError(f"non-finite value '{line}'", line=lineno, path=path)
        values.append(v)
    return np.asarray(values, dtype=np.float64)


def write_vector(path: PathLike, x: np.ndarray):
    Path(path).write_text("".join(f"{_fmt(v)}\n" for v in np.ravel(x)))


def write_scores_csv(path: PathLike, scores: ScoreVector):
    lines = ["row,score"] + [f"{i},{_fmt(v)}" for i, v in enumerate(scores.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_provenance_csv(path: PathLike, S: SampledMatrix):
    lines = ["out_row,src_row,scale"]
    lines += [f"{j},{src},{_fmt(scale)}" for j, (src, scale) in enumerate(S.provenance())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_provenance_csv(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """(source_rows, scales) in output-row order"""
    path = str(path)
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "out_row,src_row,scale":
        raise MatrixMarketError("missing 'out_row,src_row,scale' header", line=1, path=path)
    src, scales = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            out_row, s, c = raw.split(",")
            out_row = int(out_row)
            src.append(int(s))
            scales.append(float(c))
        except ValueError:
            raise MatrixMarketError(f"cannot parse provenance '{raw}'", line=lineno, path=path)
        if out_row != len(src) - 1:
            raise MatrixMarketError(f"out_row {out_row} out of order", line=lineno, path=path)
    return np.asarray(src, dtype=np.int64), np.asarray(scales, dtype=np.float64)
