"""Cubical cochain complex on uniform box grids.

A q-cell is a base vertex ``i`` together with an ascending tuple ``S`` of q
extruded axes. Cochain values are integrals over cells. In every degree the
cells are enumerated block by block, with one block per axis tuple in
lexicographic order and C order inside each block.

Tangential boundary conditions delete the cells lying in the boundary. Normal
boundary conditions are reached only through the Hodge pairing with the dual
grid, whose vertices sit at the primal cell centers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from ._linalg import block_eigvalsh, is_diagonal
from .hilbert_complex import LinearMap, MetricSpace, WeightError

MAX_TOTAL_DOFS = 10**8
BCS = ("tangential", "none")


class GridError(ValueError):
    pass


def axis_sets(n_dim: int, q: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations(range(n_dim), q))


def perm_sign(seq) -> int:
    """Sign of the permutation that sorts ``seq`` (distinct integers)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _count(n_dim: int, m: int, q: int) -> int:
    return sum(
        math.prod(m if k in S else m + 1 for k in range(n_dim)) for S in axis_sets(n_dim, q)
    )


@dataclass(frozen=True, eq=False)
class BoxGrid:
    """Uniform grid with ``m`` cells per axis on ``origin + [0, side_k]``.

    ``side`` may differ per axis; the spacing along axis k is ``side_k / m``.
    Most of the package works on cubes, where ``h`` is a single number.
    """

    n_dim: int
    cells_per_axis: int
    side: tuple
    origin: tuple

    def __post_init__(self):
        n, m = self.n_dim, self.cells_per_axis
        if n < 1:
            raise GridError(f"n_dim must be >= 1, got {n}")
        if m < 1:
            raise GridError(f"cells_per_axis must be >= 1, got {m}")
        side = tuple(float(s) for s in self.side)
        origin = tuple(float(o) for o in self.origin)
        if len(side) != n or len(origin) != n:
            raise GridError("side and origin need one entry per axis")
        if min(side) <= 0:
            raise GridError("side lengths must be positive")
        total = sum(_count(n, m, q) for q in range(n + 1))
        if total > MAX_TOTAL_DOFS:
            raise GridError(f"grid has {total} cells over all degrees, limit {MAX_TOTAL_DOFS}")
        object.__setattr__(self, "side", side)
        object.__setattr__(self, "origin", origin)
        enum = {}
        for q in range(n + 1):
            sets = axis_sets(n, q)
            shapes = [tuple(m if k in S else m + 1 for k in range(n)) for S in sets]
            sizes = [math.prod(s) for s in shapes]
            offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
            bases, sid = [], []
            for j, shp in enumerate(shapes):
                idx = np.indices(shp).reshape(n, -1).T
                bases.append(idx)
                sid.append(np.full(len(idx), j, dtype=np.int64))
            base = np.concatenate(bases) if bases else np.zeros((0, n), dtype=np.int64)
            sidv = np.concatenate(sid)
            boundary = np.zeros(len(base), dtype=bool)
            for j, S in enumerate(sets):
                sel = sidv == j
                for k in range(n):
                    if k not in S:
                        boundary[sel] |= (base[sel, k] == 0) | (base[sel, k] == m)
            enum[q] = {
                "sets": sets,
                "shapes": shapes,
                "offsets": offsets,
                "base": base,
                "sid": sidv,
                "boundary": boundary,
                "interior": np.nonzero(~boundary)[0],
            }
        object.__setattr__(self, "_enum", enum)

    @property
    def spacing(self) -> tuple:
        return tuple(s / self.cells_per_axis for s in self.side)

    @property
    def uniform(self) -> bool:
        return len(set(self.side)) == 1

    @property
    def h(self) -> float:
        """Spacing along the first axis (the spacing, on cubes)."""
        return self.side[0] / self.cells_per_axis

    @property
    def diam(self) -> float:
        return math.sqrt(sum(s * s for s in self.side))

    def axis_sets(self, q: int) -> list[tuple[int, ...]]:
        return self._enum[q]["sets"]

    def block_shape(self, S) -> tuple:
        m = self.cells_per_axis
        return tuple(m if k in S else m + 1 for k in range(self.n_dim))

    def n_cells(self, q: int, bc: str = "none") -> int:
        e = self._enum[q]
        return len(e["base"]) if bc == "none" else len(e["interior"])

    def cells(self, q: int):
        """``(base, axis_set_id)`` arrays for every q-cell."""
        e = self._enum[q]
        return e["base"], e["sid"]

    def boundary_mask(self, q: int) -> np.ndarray:
        return self._enum[q]["boundary"]

    def interior(self, q: int) -> np.ndarray:
        """Indices of the q-cells not contained in the boundary."""
        return self._enum[q]["interior"]

    def dofs(self, q: int, bc: str) -> np.ndarray:
        _check_bc(bc)
        e = self._enum[q]
        return e["interior"] if bc == "tangential" else np.arange(len(e["base"]))

    def index(self, q: int, S, base: np.ndarray) -> np.ndarray:
        """Global indices of the q-cells with axis tuple ``S`` and the given base vertices."""
        e = self._enum[q]
        j = e["sets"].index(tuple(S))
        flat = np.ravel_multi_index(tuple(np.asarray(base).T), e["shapes"][j])
        return e["offsets"][j] + flat

    def barycenters(self, q: int) -> np.ndarray:
        base, sid = self.cells(q)
        ext = np.zeros(base.shape)
        for j, S in enumerate(self.axis_sets(q)):
            ext[np.ix_(sid == j, list(S))] = 0.5
        return np.asarray(self.origin) + (base + ext) * np.asarray(self.spacing)

    def cell_volume_factor(self, q: int) -> np.ndarray:
        """Unweighted mass per cell, ``h^(N-2q)`` on cubes."""
        h = self.spacing
        base, sid = self.cells(q)
        if self.uniform:
            return np.full(len(base), h[0] ** (self.n_dim - 2 * q))
        per_set = np.array(
            [
                math.prod(h[k] for k in range(self.n_dim) if k not in S)
                / math.prod(h[k] for k in S)
                for S in self.axis_sets(q)
            ]
        )
        return per_set[sid]

    def dual(self) -> "BoxGrid":
        """Grid whose vertices are the cell centers of this grid (``m - 1`` cells per axis)."""
        h = self.spacing
        return BoxGrid(
            self.n_dim,
            self.cells_per_axis - 1,
            tuple(s - hk for s, hk in zip(self.side, h)),
            tuple(o + hk / 2 for o, hk in zip(self.origin, h)),
        )

    def outer_dual(self) -> "BoxGrid":
        """Grid whose interior vertices are the cell centers of this grid (``m + 1`` cells)."""
        h = self.spacing
        return BoxGrid(
            self.n_dim,
            self.cells_per_axis + 1,
            tuple(s + hk for s, hk in zip(self.side, h)),
            tuple(o - hk / 2 for o, hk in zip(self.origin, h)),
        )

    def describe(self) -> dict:
        return {
            "n_dim": self.n_dim,
            "cells_per_axis": self.cells_per_axis,
            "side": list(self.side),
            "origin": list(self.origin),
        }


def build_grid(n_dim: int, cells_per_axis: int, side=1.0) -> BoxGrid:
    """Box grid ``[0, side]^N`` with ``cells_per_axis`` cells along every axis."""
    if int(n_dim) != n_dim or n_dim < 1:
        raise GridError(f"n_dim must be an integer >= 1, got {n_dim}")
    if int(cells_per_axis) != cells_per_axis or cells_per_axis < 2:
        raise GridError(f"cells_per_axis must be an integer >= 2, got {cells_per_axis}")
    if np.isscalar(side):
        side = (float(side),) * int(n_dim)
    return BoxGrid(int(n_dim), int(cells_per_axis), tuple(side), (0.0,) * int(n_dim))


def _check_bc(bc):
    if bc not in BCS:
        raise GridError(f"bc must be one of {BCS}, got {bc!r}")


def _check_degree(grid: BoxGrid, q: int, lo: int, hi: int, what: str):
    if int(q) != q or not lo <= q <= hi:
        raise GridError(f"{what}: degree q={q} outside [{lo}, {hi}] for N={grid.n_dim}")


@dataclass(frozen=True, eq=False)
class Cochain:
    """Values of a discrete q-form, one per q-cell of the grid."""

    grid: BoxGrid
    degree: int
    values: np.ndarray
    bc: str = "none"

    def __post_init__(self):
        _check_bc(self.bc)
        _check_degree(self.grid, self.degree, 0, self.grid.n_dim, "Cochain")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells(self.degree),):
            raise GridError(f"expected {self.grid.n_cells(self.degree)} values, got {v.shape}")
        if self.bc == "tangential" and np.any(v[self.grid.boundary_mask(self.degree)]):
            raise GridError("tangential cochain has nonzero values on boundary cells")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_dofs(cls, grid: BoxGrid, q: int, dofs, bc: str) -> "Cochain":
        v = np.zeros(grid.n_cells(q))
        v[grid.dofs(q, bc)] = dofs
        return cls(grid, q, v, bc)

    def dofs(self) -> np.ndarray:
        return self.values[self.grid.dofs(self.degree, self.bc)]

    def d(self) -> "Cochain":
        D = exterior_derivative(self.grid, self.degree, "none").matrix
        return Cochain(self.grid, self.degree + 1, D @ self.values, self.bc)


@dataclass(frozen=True, eq=False)
class IncidenceOperator:
    matrix: sp.csr_matrix
    degree: int
    bc: str

    @property
    def shape(self):
        return self.matrix.shape


def _full_incidence(grid: BoxGrid, q: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for T in grid.axis_sets(q + 1):
        shp = grid.block_shape(T)
        base = np.indices(shp).reshape(grid.n_dim, -1).T
        r = grid.index(q + 1, T, base)
        for p, t in enumerate(T):
            S = T[:p] + T[p + 1 :]
            sign = 1 if p % 2 == 0 else -1
            far = base.copy()
            far[:, t] += 1
            rows += [r, r]
            cols += [grid.index(q, S, base), grid.index(q, S, far)]
            vals += [np.full(len(r), -sign, dtype=np.int64), np.full(len(r), sign, dtype=np.int64)]
    shape = (grid.n_cells(q + 1), grid.n_cells(q))
    if not rows:
        return sp.csr_matrix(shape, dtype=np.int64)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )
    return mat.tocsr()


def exterior_derivative(grid: BoxGrid, q: int, bc: str = "tangential") -> IncidenceOperator:
    """Signed incidence ``D_q`` from q-cochains to (q+1)-cochains.

    The face of a (q+1)-cell obtained by dropping the axis at position p of its
    axis tuple gets sign ``(-1)^p`` on the far side and ``-(-1)^p`` on the near
    side. With ``bc="tangential"`` rows and columns of boundary cells are deleted.
    """
    _check_bc(bc)
    _check_degree(grid, q, 0, grid.n_dim - 1, "exterior_derivative")
    cache = grid.__dict__.setdefault("_incidence", {})
    if q not in cache:
        cache[q] = _full_incidence(grid, q)
    D = cache[q]
    if bc == "tangential":
        D = D[grid.interior(q + 1)][:, grid.interior(q)]
    return IncidenceOperator(sp.csr_matrix(D), q, bc)


@dataclass(frozen=True, eq=False)
class EpsilonWeight:
    """Material weight on q-forms.

    ``kind`` is ``"identity"``, ``"scalar-field"`` (``field`` maps an ``(n, N)``
    array of points to positive values) or ``"constant-spd"`` (``matrix`` acts on
    the ``binom(N, q)`` proxy components in ascending axis-tuple order).
    """

    kind: str = "identity"
    field: Optional[Callable] = None
    matrix: Optional[np.ndarray] = None
    label: str = "identity"

    def __post_init__(self):
        if self.kind not in ("identity", "scalar-field", "constant-spd"):
            raise WeightError(f"unknown weight kind {self.kind!r}")
        if self.kind == "scalar-field" and self.field is None:
            raise WeightError("scalar-field weight needs a field")
        if self.kind == "constant-spd":
            if self.matrix is None:
                raise WeightError("constant-spd weight needs a matrix")
            e = np.asarray(self.matrix, dtype=float)
            if e.ndim != 2 or e.shape[0] != e.shape[1] or np.abs(e - e.T).max() > 1e-12 * np.abs(e).max():
                raise WeightError("constant-spd matrix must be square and symmetric")
            if np.linalg.eigvalsh(e)[0] <= 0:
                raise WeightError("constant-spd matrix must be positive definite")
            object.__setattr__(self, "matrix", 0.5 * (e + e.T))

    @classmethod
    def identity(cls) -> "EpsilonWeight":
        return cls()

    @classmethod
    def scalar(cls, value: float, label: Optional[str] = None) -> "EpsilonWeight":
        value = float(value)
        return cls(
            "scalar-field",
            field=lambda x: np.full(len(x), value),
            label=label or f"scalar {value!r}",
        )

    @classmethod
    def from_field(cls, fn: Callable, label: str) -> "EpsilonWeight":
        return cls("scalar-field", field=fn, label=label)

    @classmethod
    def constant_spd(cls, matrix, label: Optional[str] = None) -> "EpsilonWeight":
        return cls("constant-spd", matrix=np.asarray(matrix, dtype=float), label=label or "constant-spd")

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def inverse(self) -> "EpsilonWeight":
        if self.kind == "identity":
            return self
        if self.kind == "scalar-field":
            fn = self.field
            return EpsilonWeight("scalar-field", field=lambda x: 1.0 / fn(x), label=f"inverse of {self.label}")
        return EpsilonWeight("constant-spd", matrix=np.linalg.inv(self.matrix), label=f"inverse of {self.label}")


IDENTITY = EpsilonWeight()


@dataclass(frozen=True, eq=False)
class MassMatrix:
    matrix: sp.csr_matrix
    degree: int
    bc: str
    diagonal: bool

    def inverse(self) -> sp.csr_matrix:
        if not self.diagonal:
            raise GridError("only diagonal mass matrices are inverted explicitly")
        return sp.diags(1.0 / self.matrix.diagonal()).tocsr()


def _scalar_weights(eps: EpsilonWeight, grid: BoxGrid, q: int) -> np.ndarray:
    w = np.asarray(eps.field(grid.barycenters(q)), dtype=float).reshape(-1)
    if w.shape != (grid.n_cells(q),):
        raise WeightError("scalar field returned the wrong number of samples")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise WeightError(f"weight {eps.label!r} has a non-positive sample on degree {q}")
    return w


def _spd_block_mass(eps: EpsilonWeight, grid: BoxGrid, q: int) -> sp.csr_matrix:
    sets = grid.axis_sets(q)
    E = eps.matrix
    if E.shape != (len(sets), len(sets)):
        raise WeightError(
            f"constant-spd matrix is {E.shape[0]}x{E.shape[1]}, degree {q} needs {len(sets)}x{len(sets)}"
        )
    vol = grid.cell_volume_factor(q)
    m = grid.cells_per_axis
    rows, cols, vals = [], [], []
    for a, Sa in enumerate(sets):
        for b, Sb in enumerate(sets):
            if E[a, b] == 0:
                continue
            # base vertices carrying a cell of both axis tuples
            shp = tuple(m if (k in Sa or k in Sb) else m + 1 for k in range(grid.n_dim))
            base = np.indices(shp).reshape(grid.n_dim, -1).T
            ia = grid.index(q, Sa, base)
            ib = grid.index(q, Sb, base)
            rows.append(ia)
            cols.append(ib)
            vals.append(np.sqrt(vol[ia] * vol[ib]) * E[a, b])
    n = grid.n_cells(q)
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    mat = mat.tocsr()
    return 0.5 * (mat + mat.T)


def mass_matrix(grid: BoxGrid, q: int, eps: Optional[EpsilonWeight] = None, bc: str = "tangential") -> MassMatrix:
    """Midpoint-rule mass ``h^(N-2q) w_c`` on the degrees of freedom selected by ``bc``."""
    _check_bc(bc)
    _check_degree(grid, q, 0, grid.n_dim, "mass_matrix")
    eps = eps or IDENTITY
    dofs = grid.dofs(q, bc)
    vol = grid.cell_volume_factor(q)
    if eps.kind == "identity":
        return MassMatrix(sp.diags(vol[dofs]).tocsr(), q, bc, True)
    if eps.kind == "scalar-field":
        w = _scalar_weights(eps, grid, q)
        return MassMatrix(sp.diags(vol[dofs] * w[dofs]).tocsr(), q, bc, True)
    full = _spd_block_mass(eps, grid, q)
    sub = full[dofs][:, dofs].tocsr()
    return MassMatrix(sub, q, bc, is_diagonal(sub))


def epsilon_bounds(eps: EpsilonWeight, grid: BoxGrid, q: int, bc: str = "tangential") -> tuple[float, float, float]:
    """``(eps_under, eps_over, eps_hat)`` from the Rayleigh quotients of ``M_eps`` against ``M``."""
    if eps is None or eps.is_identity:
        return 1.0, 1.0, 1.0
    M = mass_matrix(grid, q, None, bc).matrix.diagonal()
    Me = mass_matrix(grid, q, eps, bc)
    if Me.diagonal:
        r = Me.matrix.diagonal() / M
        lo, hi = r.min(), r.max()
    else:
        s = sp.diags(1.0 / np.sqrt(M))
        w = block_eigvalsh(s @ Me.matrix @ s)
        lo, hi = w[0], w[-1]
    under = 1.0 / math.sqrt(lo)
    over = math.sqrt(hi)
    return under, over, max(under, over)


def codifferential(grid: BoxGrid, q: int, eps: Optional[EpsilonWeight] = None, bc: str = "tangential") -> LinearMap:
    """``delta_eps = -M_{q-1}^{-1} D_{q-1}^T M_{q,eps}`` so that <d w, z> = -<w, delta z>."""
    _check_degree(grid, q, 1, grid.n_dim, "codifferential")
    D = exterior_derivative(grid, q - 1, bc).matrix.astype(float)
    Mlo = mass_matrix(grid, q - 1, None, bc)
    Mq = mass_matrix(grid, q, eps, bc)
    delta = -(Mlo.inverse() @ D.T @ Mq.matrix)
    return LinearMap(sp.csr_matrix(delta), MetricSpace(Mq.matrix), MetricSpace(Mlo.matrix))


@dataclass(frozen=True, eq=False)
class HodgePairing:
    """Signed bijection from the dofs of q-cochains to the dofs of (N-q)-cochains on a partner grid.

    ``target[k]`` is the partner dof of source dof ``k`` (both counted in the dof
    ordering of their bc), and ``sign[k]`` the orientation sign of the pair.
    """

    source_grid: BoxGrid
    source_degree: int
    source_bc: str
    target_grid: BoxGrid
    target_degree: int
    target_bc: str
    target: np.ndarray
    sign: np.ndarray

    def matrix(self) -> sp.csr_matrix:
        n = len(self.target)
        return sp.csr_matrix(
            (self.sign.astype(float), (self.target, np.arange(n))), shape=(n, n)
        )

    def transport(self, dofs: np.ndarray) -> np.ndarray:
        """Carry source dof values across, including the factor ``h^(N-2q)``."""
        g = self.source_grid
        if not g.uniform:
            raise GridError("value transport needs a uniform grid")
        scale = g.h ** (g.n_dim - 2 * self.source_degree)
        out = np.zeros(len(self.target))
        out[self.target] = self.sign * scale * np.asarray(dofs, dtype=float)
        return out


def hodge_dual_index(grid: BoxGrid, q: int, bc: str = "tangential") -> HodgePairing:
    """Pair each q-cell with the complementary-axis cell through the same center.

    ``bc="tangential"``: interior q-cells of ``grid`` pair with all (N-q)-cells of
    ``grid.dual()``. ``bc="none"``: all q-cells of ``grid`` pair with the interior
    (N-q)-cells of ``grid.outer_dual()``. Applying the two directions in turn
    returns every cell with sign ``(-1)^(q(N-q))``.
    """
    _check_bc(bc)
    _check_degree(grid, q, 0, grid.n_dim, "hodge_dual_index")
    n = grid.n_dim
    partner = grid.dual() if bc == "tangential" else grid.outer_dual()
    target_bc = "none" if bc == "tangential" else "tangential"
    src = grid.dofs(q, bc)
    base, sid = grid.cells(q)
    base, sid = base[src], sid[src]
    sets = grid.axis_sets(q)
    tgt_full = np.empty(len(src), dtype=np.int64)
    sign = np.empty(len(src), dtype=np.int64)
    for j, S in enumerate(sets):
        sel = sid == j
        C = tuple(k for k in range(n) if k not in S)
        b = base[sel].copy()
        if bc == "tangential":
            b[:, list(C)] -= 1
        else:
            b[:, list(S)] += 1
        tgt_full[sel] = partner.index(n - q, C, b)
        sign[sel] = perm_sign(S + C)
    # full index -> dof position on the partner side
    pos = np.full(partner.n_cells(n - q), -1, dtype=np.int64)
    pdofs = partner.dofs(n - q, target_bc)
    pos[pdofs] = np.arange(len(pdofs))
    target = pos[tgt_full]
    if np.any(target < 0) or len(np.unique(target)) != len(target) or len(target) != len(pdofs):
        raise GridError("Hodge pairing is not a bijection on the chosen index sets")
    return HodgePairing(grid, q, bc, partner, n - q, target_bc, target, sign)


def export_coo(matrix, stream) -> None:
    """Write ``row col value`` lines, values in shortest round-trip form for floats."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    integral = np.issubdtype(coo.data.dtype, np.integer)
    for k in order:
        v = int(coo.data[k]) if integral else repr(float(coo.data[k]))
        stream.write(f"{coo.row[k]} {coo.col[k]} {v}\n")
