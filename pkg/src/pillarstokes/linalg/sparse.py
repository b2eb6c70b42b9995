"""CSR construction and Matrix Market I/O.

Matrices are plain :class:`scipy.sparse.csr_matrix` objects kept in canonical
form (sorted column indices, no duplicates).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp


def coo_to_csr(rows, cols, vals, shape) -> sp.csr_matrix:
    """Sum duplicate triplets in input order and return a canonical CSR matrix.

    Duplicates of one entry are summed in the order they appear in the input,
    so entries (i, j) and (j, i) fed with bitwise-equal contributions in the
    same order come out bitwise equal.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    n_rows, n_cols = shape
    key = rows * n_cols + cols
    order = np.argsort(key, kind="stable")
    key, vals = key[order], vals[order]
    if len(key) == 0:
        return sp.csr_matrix(shape)
    start = np.flatnonzero(np.concatenate([[True], key[1:] != key[:-1]]))
    summed = np.add.reduceat(vals, start)
    ukey = key[start]
    r, c = np.divmod(ukey, n_cols)
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, r + 1, 1)
    np.cumsum(indptr, out=indptr)
    mat = sp.csr_matrix((summed, c, indptr), shape=shape)
    mat.has_sorted_indices = True
    return mat


def as_csr(m) -> sp.csr_matrix:
    """Canonical CSR copy of any sparse or dense 2-D input."""
    out = sp.csr_matrix(m, dtype=float, copy=True)
    out.sum_duplicates()
    out.sort_indices()
    return out


def write_matrix_market(path, m, symmetric: bool | None = None, comment: str = "") -> None:
    """Coordinate-format Matrix Market file; ``symmetric=None`` autodetects exact symmetry."""
    m = as_csr(m)
    if symmetric is None:
        symmetric = m.shape[0] == m.shape[1] and (m != m.T).nnz == 0
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), m.tocoo(), comment=comment, field="real",
                     symmetry="symmetric" if symmetric else "general", precision=17)


def read_matrix_market(path) -> sp.csr_matrix:
    return as_csr(scipy.io.mmread(str(path)))
