"""Finite-dimensional Hilbert complexes.

Every space carries an explicit gram matrix and every adjoint is taken with
respect to it. The reduced-operator constant of ``A`` is ``1/sigma_min``,
where ``sigma_min`` is the smallest nonzero singular value of ``A`` measured
in the two metrics.
"""

from __future__ import annotations

import math
from typing import Optional
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ._linalg import block_eigvalsh, sym_error
from .checks import Verdict, check_close, check_le

RANK_RTOL = 1e-10
SYM_RTOL = 1e-12
COMPLEX_RTOL = 1e-10


class MetricError(ValueError):
    pass


class ComplexError(ValueError):
    pass


class WeightError(ValueError):
    pass


def _dense(a) -> np.ndarray:
    if sp.issparse(a):
        return a.toarray()
    return np.asarray(a, dtype=float)


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """Real coordinate space with inner product ``x^T G y``.

    Dense grams are factored on construction. Sparse grams (grid mass
    matrices) are checked blockwise and only factored if a dense operation
    asks for it.
    """

    gram: np.ndarray

    def __post_init__(self):
        g = self.gram
        if sp.issparse(g):
            g = sp.csr_matrix(g, dtype=float)
            if g.shape[0] != g.shape[1]:
                raise MetricError(f"gram must be square, got shape {g.shape}")
            if sym_error(g) > SYM_RTOL:
                raise MetricError("gram matrix is not symmetric")
            if g.shape[0]:
                try:
                    w = block_eigvalsh(g)
                except ValueError:
                    w = np.linalg.eigvalsh(g.toarray())
                if w[0] <= 0:
                    raise MetricError("gram matrix is not positive definite")
            object.__setattr__(self, "gram", g)
            return
        g = np.asarray(g, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise MetricError(f"gram must be square, got shape {g.shape}")
        if g.size and sym_error(g) > SYM_RTOL:
            raise MetricError("gram matrix is not symmetric")
        g = 0.5 * (g + g.T)
        object.__setattr__(self, "gram", g)
        if g.size:
            self.chol

    @classmethod
    def euclidean(cls, n: int) -> "MetricSpace":
        return cls(np.eye(n))

    @property
    def dim(self) -> int:
        return self.gram.shape[0]

    @cached_property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor ``L`` with ``G = L L^T``."""
        if not self.dim:
            return np.zeros((0, 0))
        try:
            return np.linalg.cholesky(_dense(self.gram))
        except np.linalg.LinAlgError as exc:
            raise MetricError("gram matrix is not positive definite") from exc

    def inner(self, x, y) -> float:
        return float(np.asarray(x) @ (self.gram @ np.asarray(y)))

    def norm(self, x) -> float:
        return math.sqrt(max(self.inner(x, x), 0.0))

    def to_coords(self, x) -> np.ndarray:
        """Coordinates in which the metric becomes Euclidean (``L^T x``)."""
        return self.chol.T @ x

    def from_coords(self, y) -> np.ndarray:
        return sla.solve_triangular(self.chol.T, y, lower=False) if self.dim else y


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Matrix between two metric spaces; sparse matrices stay sparse."""

    matrix: np.ndarray
    domain: MetricSpace
    codomain: MetricSpace

    def __post_init__(self):
        a = self.matrix
        if sp.issparse(a):
            a = sp.csr_matrix(a)
        else:
            a = np.asarray(a, dtype=float)
            if a.ndim != 2:
                a = a.reshape(self.codomain.dim, self.domain.dim)
        if a.shape != (self.codomain.dim, self.domain.dim):
            raise ValueError(
                f"matrix shape {a.shape} does not match codomain x domain "
                f"({self.codomain.dim}, {self.domain.dim})"
            )
        object.__setattr__(self, "matrix", a)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def dense(self) -> np.ndarray:
        return _dense(self.matrix)

    def __call__(self, x):
        return self.matrix @ x

    def is_zero(self) -> bool:
        a = self.matrix
        if sp.issparse(a):
            return a.nnz == 0 or not np.any(a.data)
        return a.size == 0 or not np.any(a)


@dataclass(frozen=True, eq=False)
class AbstractComplex:
    """``H0 --a0--> H1 --a1--> H2`` with ``a1 a0 = 0``."""

    a0: LinearMap
    a1: LinearMap

    def __post_init__(self):
        if self.a0.codomain.dim != self.a1.domain.dim:
            raise ComplexError("a0 codomain and a1 domain differ in dimension")
        if self.a0.codomain is not self.a1.domain and not np.array_equal(
            _dense(self.a0.codomain.gram), _dense(self.a1.domain.gram)
        ):
            raise ComplexError("a0 codomain and a1 domain carry different metrics")
        r = complex_residual(self)
        if r > COMPLEX_RTOL:
            raise ComplexError(f"complex property violated: relative residual {r:.3e}")

    @property
    def h1(self) -> MetricSpace:
        return self.a0.codomain


@dataclass(frozen=True)
class HelmholtzSplit:
    x_range_a0: np.ndarray
    x_cohom: np.ndarray
    x_range_a1s: np.ndarray
    unstable: bool = False

    def parts(self):
        return (self.x_range_a0, self.x_cohom, self.x_range_a1s)


@dataclass(frozen=True)
class Spectrum:
    """Metric singular values of a map with the rank decision made explicit."""

    values: np.ndarray
    threshold: float
    rank: int
    unstable: bool
    left: np.ndarray
    right: np.ndarray


@dataclass(frozen=True)
class CohomologyBasis:
    basis: np.ndarray
    dim: int
    unstable: bool


@dataclass(frozen=True)
class CombinedConstant:
    c_direct: float
    c_max: float
    c_a0: float
    c_a1: float
    passed: bool
    verdict: Verdict


def complex_residual(c: AbstractComplex) -> float:
    a0, a1 = c.a0.dense, c.a1.dense
    if a0.size == 0 or a1.size == 0:
        return 0.0
    denom = np.linalg.norm(a1, 2) * np.linalg.norm(a0, 2)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a1 @ a0, 2) / denom)


def zero_threshold(smax: float, shape) -> float:
    return RANK_RTOL * smax * max(max(shape), 1)


def _spectrum_of(b: np.ndarray) -> Spectrum:
    m, n = b.shape
    if b.size == 0:
        return Spectrum(np.zeros(0), 0.0, 0, False, np.zeros((m, 0)), np.eye(n))
    u, s, vt = np.linalg.svd(b)
    smax = s[0] if s.size else 0.0
    thr = zero_threshold(smax, b.shape)
    if smax == 0:
        return Spectrum(s, 0.0, 0, False, u, vt.T)
    rank = int(np.sum(s >= thr))
    unstable = bool(np.any((s >= thr / 10) & (s <= thr * 10)))
    return Spectrum(s, thr, rank, unstable, u, vt.T)


def singular_spectrum(a: LinearMap) -> Spectrum:
    """SVD of ``L_cod^T A L_dom^{-T}``; singular vectors in metric-free coordinates."""
    b = a.codomain.chol.T @ a.dense
    if a.domain.dim:
        b = sla.solve_triangular(a.domain.chol, b.T, lower=True).T
    return _spectrum_of(b)


def adjoint(a: LinearMap) -> LinearMap:
    """``A* = G_dom^{-1} A^T G_cod`` with domain and codomain swapped."""
    rhs = a.dense.T @ _dense(a.codomain.gram)
    if a.domain.dim:
        try:
            mat = sla.cho_solve((a.domain.chol, True), rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise MetricError("domain gram is singular") from exc
    else:
        mat = rhs
    return LinearMap(mat, a.codomain, a.domain)


def constant_of(a: LinearMap) -> float:
    """Reduced-operator constant ``c_A``; ``inf`` exactly for the zero map."""
    if a.is_zero():
        return math.inf
    s = singular_spectrum(a)
    return float(1.0 / s.values[s.rank - 1])


def verify_constant_symmetry(a: LinearMap, rtol: float = 1e-10) -> dict:
    ca = constant_of(a)
    cs = constant_of(adjoint(a))
    v = check_close("adjoint-constant-equality", ca, cs, rtol)
    return {"c_A": ca, "c_Astar": cs, "pass": v.passed, "verdict": v}


def _range_basis(a: LinearMap):
    """Orthonormal basis of R(a) in the metric-free coordinates of the codomain."""
    s = singular_spectrum(a)
    return s.left[:, : s.rank], s.unstable


def cohomology_basis(c: AbstractComplex) -> CohomologyBasis:
    """H1-orthonormal basis of ``N(a1) ∩ N(a0*)``."""
    h1 = c.h1
    n = h1.dim
    # both kernels in coordinates y = L^T x where H1 is Euclidean
    r0, u0 = _range_basis(c.a0)
    r1s, u1 = _range_basis(adjoint(c.a1))
    stack = np.hstack([r0, r1s])
    if stack.shape[1] == 0:
        comp = np.eye(n)
    else:
        # the two ranges are orthogonal, so the complement is the null space of stack^T
        q, s, _ = np.linalg.svd(stack, full_matrices=True)
        thr = zero_threshold(s[0] if s.size else 0.0, stack.shape)
        rank = int(np.sum(s >= thr))
        comp = q[:, rank:]
    basis = h1.from_coords(comp) if n else comp
    return CohomologyBasis(basis, basis.shape[1], bool(u0 or u1))


def helmholtz_decompose(c: AbstractComplex, x) -> HelmholtzSplit:
    h1 = c.h1
    y = h1.to_coords(np.asarray(x, dtype=float))
    r0, u0 = _range_basis(c.a0)
    r1s, u1 = _range_basis(adjoint(c.a1))
    p0 = r0 @ (r0.T @ y)
    p1 = r1s @ (r1s.T @ y)
    ph = y - p0 - p1
    return HelmholtzSplit(h1.from_coords(p0), h1.from_coords(ph), h1.from_coords(p1), bool(u0 or u1))


def _combined_singular_values(c: AbstractComplex) -> Spectrum:
    # x -> (a0* x, a1 x) measured in H0 x H2, written in H1-Euclidean coordinates
    a0s = adjoint(c.a0)
    rows = []
    if a0s.codomain.dim:
        rows.append(a0s.codomain.chol.T @ a0s.dense)
    if c.a1.codomain.dim:
        rows.append(c.a1.codomain.chol.T @ c.a1.dense)
    n = c.h1.dim
    if not rows:
        return _spectrum_of(np.zeros((0, n)))
    b = np.vstack(rows)
    b = sla.solve_triangular(c.h1.chol, b.T, lower=True).T
    return _spectrum_of(b)


def combined_constant(c: AbstractComplex, rtol: float = 1e-8) -> CombinedConstant:
    """Direct constant of ``(a0*, a1)`` on the complement of the cohomology, next to the max formula.

    A zero operator has an empty reduced domain and contributes nothing to the
    combined form, so it is left out of the maximum unless both maps vanish.
    """
    s = _combined_singular_values(c)
    c_direct = math.inf if s.rank == 0 else float(1.0 / s.values[s.rank - 1])
    c0 = constant_of(c.a0)
    c1 = constant_of(c.a1)
    finite = [v for v, a in ((c0, c.a0), (c1, c.a1)) if not a.is_zero()]
    c_max = max(finite) if finite else math.inf
    v = check_close("combined-equals-max", c_direct, c_max, rtol)
    return CombinedConstant(c_direct, c_max, c0, c1, v.passed, v)


def _coords_weight(h1: MetricSpace, eps) -> np.ndarray:
    e = _dense(eps)
    if e.shape != (h1.dim, h1.dim):
        raise WeightError(f"eps must be {h1.dim}x{h1.dim}, got {e.shape}")
    if h1.dim and np.abs(e - e.T).max() > SYM_RTOL * max(np.abs(e).max(), 1.0):
        raise WeightError("eps is not symmetric")
    e = 0.5 * (e + e.T)
    if h1.dim and np.linalg.eigvalsh(e)[0] <= 0:
        raise WeightError("eps is not positive definite")
    return e


def weighted_middle(c: AbstractComplex, eps) -> AbstractComplex:
    """Replace the H1 metric by the symmetrized ``G·eps``.

    ``eps`` acts in H1-orthonormal coordinates, so the new gram is
    ``L eps L^T`` with ``G = L L^T``. This is symmetric positive definite for any
    SPD ``eps`` and reduces to ``G·eps`` in the Euclidean case.
    """
    e = _coords_weight(c.h1, eps)
    L = c.h1.chol
    g = L @ e @ L.T
    h1 = MetricSpace(0.5 * (g + g.T))
    return AbstractComplex(
        LinearMap(c.a0.matrix, c.a0.domain, h1),
        LinearMap(c.a1.matrix, h1, c.a1.codomain),
    )


def epsilon_bounds(eps) -> tuple[float, float, float]:
    """``(eps_under, eps_over, eps_hat)`` with ``eps_under^-2 <= RQ <= eps_over^2``."""
    e = _dense(eps)
    w = np.linalg.eigvalsh(0.5 * (e + e.T))
    under = 1.0 / math.sqrt(w[0])
    over = math.sqrt(w[-1])
    return under, over, max(under, over)


def sandwich_checks(c: AbstractComplex, eps, rtol: float = 1e-10) -> list[Verdict]:
    """The six inequalities of the weight lemma on an abstract complex."""
    w = weighted_middle(c, eps)
    under, over, hat = epsilon_bounds(eps)
    c0, c1 = constant_of(c.a0), constant_of(c.a1)
    t0, t1 = constant_of(w.a0), constant_of(w.a1)
    cw = combined_constant(w).c_direct
    nonzero = [v for v, a in ((c0, c.a0), (c1, c.a1)) if not a.is_zero()]
    lo = min(nonzero) / hat if nonzero else math.inf
    hi = max(nonzero) * hat if nonzero else math.inf
    out = []
    for rule, lhs, rhs in (
        ("eps-lemma-a0-lower", c0 / over, t0),
        ("eps-lemma-a0-upper", t0, c0 * under),
        ("eps-lemma-a1-lower", c1 / under, t1),
        ("eps-lemma-a1-upper", t1, c1 * over),
        ("eps-lemma-combined-lower", lo, cw),
        ("eps-lemma-combined-upper", cw, hi),
    ):
        tol = rtol * abs(rhs) if math.isfinite(rhs) else 0.0
        out.append(check_le(rule, lhs, rhs, tol))
    return out


def random_spd(n: int, rng: np.random.Generator) -> np.ndarray:
    """``Q^T D Q`` with ``D`` log-uniform in [0.1, 10]."""
    if n == 0:
        return np.zeros((0, 0))
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = 10.0 ** rng.uniform(-1.0, 1.0, size=n)
    g = q.T @ np.diag(d) @ q
    return 0.5 * (g + g.T)


def random_complex(n0: int, n1: int, n2: int, seed: int, rank0: Optional[int] = None) -> AbstractComplex:
    """Seeded random complex with random SPD metrics.

    ``a1`` is built on an explicit basis of the complement of ``R(a0)``, so it
    is exactly zero when ``a0`` is onto. ``rank0`` caps the rank of ``a0``.
    """
    rng = np.random.default_rng(seed)
    k = min(n0, n1) if rank0 is None else min(rank0, n0, n1)
    a0 = rng.standard_normal((n1, k)) @ rng.standard_normal((k, n0))
    b = rng.standard_normal((n2, n1))
    if n0 and n1 and k:
        u, s, _ = np.linalg.svd(a0, full_matrices=True)
        r = int(np.sum(s >= zero_threshold(s[0], a0.shape))) if s[0] > 0 else 0
        w = u[:, r:]
        a1 = (b @ w) @ w.T
    else:
        a1 = b
    g0, g1, g2 = (random_spd(n, rng) for n in (n0, n1, n2))
    h0, h1, h2 = MetricSpace(g0), MetricSpace(g1), MetricSpace(g2)
    return AbstractComplex(LinearMap(a0, h0, h1), LinearMap(a1, h1, h2))


SUITE_MAX_MIDDLE = 12


def suite_record(seed: int, max_middle: int = SUITE_MAX_MIDDLE) -> dict:
    """All abstract checks on one seeded random complex and a seeded random weight."""
    rng = np.random.default_rng([seed, 1])
    n1 = int(rng.integers(1, max_middle + 1))
    n0 = int(rng.integers(0, n1 + 1))
    n2 = int(rng.integers(0, max_middle + 1))
    rank0 = int(rng.integers(0, min(n0, n1) + 1))
    c = random_complex(n0, n1, n2, seed, rank0)
    verdicts = [check_le("complex-property", complex_residual(c), COMPLEX_RTOL, 0.0)]
    for name, a in (("a0", c.a0), ("a1", c.a1)):
        v = verify_constant_symmetry(a)["verdict"]
        verdicts.append(Verdict(v.rule, v.lhs, v.rhs, v.relation, v.tolerance, v.passed, v.slack, name))
    cc = combined_constant(c)
    verdicts.append(cc.verdict)
    x = rng.standard_normal(n1)
    split = helmholtz_decompose(c, x)
    h1 = c.h1
    nx = h1.norm(x) ** 2
    recomb = h1.norm(x - sum(split.parts())) / math.sqrt(nx)
    parts = split.parts()
    ortho = max(abs(h1.inner(parts[i], parts[j])) for i in range(3) for j in range(i + 1, 3)) / nx
    verdicts.append(check_le("helmholtz-recombination", recomb, 1e-10, 0.0))
    verdicts.append(check_le("helmholtz-orthogonality", ortho, 1e-10, 0.0))
    eps = random_spd(n1, rng)
    verdicts.extend(sandwich_checks(c, eps))
    return {
        "seed": seed,
        "dims": [n0, n1, n2],
        "cohomology_dim": cohomology_basis(c).dim,
        "c_a0": cc.c_a0,
        "c_a1": cc.c_a1,
        "c_direct": cc.c_direct,
        "verdicts": verdicts,
        "passed": all(v.passed for v in verdicts),
    }


def abstract_suite(seeds, max_middle: int = SUITE_MAX_MIDDLE) -> list[dict]:
    return [suite_record(int(s), max_middle) for s in seeds]
