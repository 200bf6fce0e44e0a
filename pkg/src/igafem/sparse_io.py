"""Sparse triplet text files: header `nrows ncols nnz`, then one
`row col value` line per entry with 17 significant digits (bit-exact
float64 round trip)."""

import numpy as np
import scipy.sparse as sps

from .errors import MeshParseError


def write_triplets(path, matrix):
    mat = sps.coo_matrix(matrix)
    lines = [f"{mat.shape[0]} {mat.shape[1]} {mat.nnz}"]
    order = np.lexsort((mat.col, mat.row))
    for k in order:
        lines.append(f"{mat.row[k]} {mat.col[k]} {mat.data[k]:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_triplets(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise MeshParseError("empty triplet file")
    try:
        nr, nc, nnz = (int(t) for t in lines[0].split())
    except ValueError:
        raise MeshParseError("triplet header must be `nrows ncols nnz`", 1) from None
    if len(lines) - 1 != nnz:
        raise MeshParseError(f"expected {nnz} entries, found {len(lines) - 1}")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    data = np.empty(nnz)
    for k, ln in enumerate(lines[1:]):
        toks = ln.split()
        try:
            rows[k], cols[k], data[k] = int(toks[0]), int(toks[1]), float(toks[2])
        except (ValueError, IndexError):
            raise MeshParseError("triplet line must be `row col value`", k + 2) from None
    return sps.csr_matrix((data, (rows, cols)), shape=(nr, nc))
