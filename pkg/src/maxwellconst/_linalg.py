"""Small sparse helpers shared by grid assembly and the metric checks."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


def block_eigvalsh(a) -> np.ndarray:
    """All eigenvalues of a symmetric sparse matrix made of small decoupled blocks.

    Blocks are the connected components of the sparsity graph. They are
    grouped by size so each size class is a single batched ``eigvalsh``.
    """
    a = sp.csr_matrix(a)
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    ncomp, labels = connected_components(a, directed=False)
    order = np.argsort(labels, kind="stable")
    sizes = np.bincount(labels, minlength=ncomp)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    out = []
    for size in np.unique(sizes):
        comps = np.nonzero(sizes == size)[0]
        idx = np.stack([order[starts[c] : starts[c] + size] for c in comps])
        if size == 1:
            out.append(a.diagonal()[idx[:, 0]])
            continue
        if size > 64:
            raise ValueError(f"block of size {size} is too large for blockwise eigenvalues")
        sub = a[idx.reshape(-1)][:, idx.reshape(-1)].toarray()
        blocks = np.stack(
            [sub[k * size : (k + 1) * size, k * size : (k + 1) * size] for k in range(len(comps))]
        )
        out.append(np.linalg.eigvalsh(blocks).reshape(-1))
    return np.sort(np.concatenate(out))


def is_diagonal(a) -> bool:
    a = sp.coo_matrix(a)
    return bool(np.all(a.row == a.col)) if a.nnz else True


def sym_error(a) -> float:
    """Max abs entry of ``a - a^T`` relative to the max abs entry of ``a``."""
    if sp.issparse(a):
        d = abs(a - a.T)
        dmax = d.max() if d.nnz else 0.0
        amax = abs(a).max() if a.nnz else 0.0
    else:
        a = np.asarray(a)
        dmax = np.abs(a - a.T).max() if a.size else 0.0
        amax = np.abs(a).max() if a.size else 0.0
    return float(dmax / amax) if amax else 0.0
