"""Symmetric generalized eigenproblems ``K x = lam M x`` with the kernel deflated.

Two paths: ``dense_solve`` (full spectrum through ``M^{-1/2} K M^{-1/2}``) as the
oracle, and a block LOBPCG iteration that keeps its iterates M-orthogonal to a
kernel basis and, optionally, inside the range of a projector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._linalg import block_eigvalsh, is_diagonal, sym_error

KERNEL_RTOL = 1e-10
DENSE_LIMIT = 5000
AUTO_DENSE_LIMIT = 800


class PencilError(ValueError):
    pass


class EigensolverError(RuntimeError):
    """Raised when the iteration stops without meeting the tolerance."""

    def __init__(self, message: str, residuals=None, values=None, iterations: int = 0):
        super().__init__(message)
        self.residuals = None if residuals is None else np.asarray(residuals)
        self.values = None if values is None else np.asarray(values)
        self.iterations = iterations

    def dump(self) -> dict:
        return {
            "message": str(self),
            "iterations": self.iterations,
            "values": [] if self.values is None else [float(v) for v in self.values],
            "residuals": [] if self.residuals is None else [float(r) for r in self.residuals],
        }


def _as_operator(a):
    return sp.csr_matrix(a) if sp.issparse(a) else np.asarray(a, dtype=float)


@dataclass(frozen=True, eq=False)
class SymmetricPencil:
    K: object
    M: object

    def __post_init__(self):
        K, M = _as_operator(self.K), _as_operator(self.M)
        if K.shape != M.shape or K.shape[0] != K.shape[1]:
            raise PencilError(f"K {K.shape} and M {M.shape} must be square and of equal size")
        if sym_error(K) > 1e-12:
            raise PencilError("stiffness matrix is not symmetric")
        if sym_error(M) > 1e-12:
            raise PencilError("mass matrix is not symmetric")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "M", M)
        if self.n:
            try:
                w = block_eigvalsh(M) if sp.issparse(M) else np.linalg.eigvalsh(M)
            except ValueError:
                w = np.linalg.eigvalsh(M.toarray())
            if w[0] <= 0:
                raise PencilError("mass matrix is not positive definite")

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def is_zero(self) -> bool:
        K = self.K
        if sp.issparse(K):
            return K.nnz == 0 or not np.any(K.data)
        return not np.any(K)


@dataclass
class EigResult:
    kernel_dim: int
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    method: str
    iterations: int = 0
    threshold: float = 0.0
    all_kernel: bool = False
    flags: list = field(default_factory=list)

    @property
    def smallest(self) -> float:
        if self.all_kernel or len(self.values) == 0:
            return math.inf
        return float(self.values[0])

    def summary(self) -> dict:
        return {
            "method": self.method,
            "kernel_dim": int(self.kernel_dim),
            "values": [float(v) for v in self.values],
            "residuals": [float(r) for r in self.residuals],
            "iterations": int(self.iterations),
            "threshold": float(self.threshold),
            "all_kernel": bool(self.all_kernel),
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class DenseSpectrum:
    values: np.ndarray
    vectors: np.ndarray
    kernel_dim: int
    threshold: float


def _inv_sqrt(M):
    """``M^{-1/2}`` as a vector when M is diagonal, else as a dense matrix."""
    if sp.issparse(M) and is_diagonal(M) or (not sp.issparse(M) and np.count_nonzero(M - np.diag(np.diag(M))) == 0):
        d = M.diagonal() if sp.issparse(M) else np.diag(M)
        return 1.0 / np.sqrt(d)
    Md = M.toarray() if sp.issparse(M) else M
    w, V = np.linalg.eigh(Md)
    return (V / np.sqrt(w)) @ V.T


def dense_solve(p: SymmetricPencil, rtol: float = KERNEL_RTOL) -> DenseSpectrum:
    """Full spectrum by symmetric reduction; eigenvalues ascending, vectors M-orthonormal."""
    if p.n > DENSE_LIMIT:
        raise PencilError(f"dense path limited to n <= {DENSE_LIMIT}, got {p.n}")
    S = _inv_sqrt(p.M)
    K = p.K.toarray() if sp.issparse(p.K) else np.array(p.K, dtype=float)
    A = S[:, None] * K * S[None, :] if S.ndim == 1 else S @ K @ S
    A = 0.5 * (A + A.T)
    w, U = np.linalg.eigh(A)
    thr = rtol * max(np.abs(w).max(), 0.0) if w.size else 0.0
    kdim = int(np.sum(w < thr)) if thr > 0 else len(w)
    return DenseSpectrum(w, S[:, None] * U if S.ndim == 1 else S @ U, kdim, thr)


def _m_orthonormalize(X, M, drop=1e-12):
    """SVQB: M-orthonormal basis of span(X), dropping numerically dependent directions."""
    G = X.T @ (M @ X)
    G = 0.5 * (G + G.T)
    d = np.sqrt(np.abs(np.diag(G)))
    d[d == 0] = 1.0
    Gs = G / np.outer(d, d)
    w, V = np.linalg.eigh(Gs)
    keep = w > drop * w.max()
    return (X / d) @ (V[:, keep] / np.sqrt(w[keep]))


def _lambda_max_estimate(K, M, rng, iters=40):
    """Power iteration on M^{-1} K; a lower estimate, enough for a threshold."""
    n = K.shape[0]
    if sp.issparse(M) and is_diagonal(M):
        dinv = 1.0 / M.diagonal()
        solve = lambda v: dinv * v
    else:
        lu = spla.splu(sp.csc_matrix(M)) if sp.issparse(M) else None
        solve = (lambda v: lu.solve(v)) if lu is not None else (lambda v: np.linalg.solve(M, v))
    x = rng.standard_normal(n)
    lam = 0.0
    for _ in range(iters):
        y = solve(K @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        x = y / nrm
        lam = float(x @ (K @ x)) / float(x @ (M @ x))
    return lam


def _default_preconditioner(K, M, shift_scale):
    # preconditioner only: the pencil itself is never shifted
    A = sp.csc_matrix(K + shift_scale * M) if sp.issparse(K) else None
    if A is None:
        lu = sla.lu_factor(K + shift_scale * M)
        return lambda R: sla.lu_solve(lu, R)
    lu = spla.splu(A)
    return lambda R: lu.solve(R)


def _lobpcg(K, M, k, tol, kernel, project, precond, rng, maxiter, thr, lmax, refine=None):
    """Block LOBPCG.

    With a ``refine`` shift-invert callable, converged null Ritz pairs are
    sharpened by two inverse-iteration steps and locked into the kernel basis.
    """
    n = K.shape[0]
    nk = 0 if kernel is None else kernel.shape[1]
    bs = min(k + 2 if k < 4 else k + max(2, k // 2), n - nk)
    if bs < k:
        raise PencilError(f"only {n - nk} directions remain after deflation, {k} requested")
    state = {"Y": kernel, "MY": None if kernel is None else M @ kernel}

    def constrain(Z):
        if project is not None:
            Z = project(Z)
        if state["Y"] is not None:
            Z = Z - state["Y"] @ (state["MY"].T @ Z)
        return Z

    def refill(X):
        short = bs - X.shape[1]
        if short > 0:
            X = np.hstack([X, constrain(rng.standard_normal((n, short)))])
        return _m_orthonormalize(constrain(X), M)[:, :bs]

    X = refill(np.zeros((n, 0)))
    P = None
    lam = None
    res = None
    for it in range(1, maxiter + 1):
        KX = K @ X
        MX = M @ X
        A = X.T @ KX
        w, C = np.linalg.eigh(0.5 * (A + A.T))
        X, KX, MX = X @ C, KX @ C, MX @ C
        lam = w
        R = KX - MX * lam
        # null pairs are judged by backward error on the scale of lambda_max
        scale = np.where(np.abs(lam) < thr, max(lmax, thr), np.abs(lam))
        denom = scale * np.linalg.norm(MX, axis=0)
        res = np.linalg.norm(R, axis=0) / denom
        null = (lam < thr) & (res <= tol)
        if refine is not None and np.any(null):
            Z = X[:, null]
            for _ in range(2):
                Z = _m_orthonormalize(refine(M @ Z), M)
            Y = Z if state["Y"] is None else np.hstack([state["Y"], Z])
            state["Y"] = _m_orthonormalize(Y, M)
            state["MY"] = M @ state["Y"]
            if n - state["Y"].shape[1] < k:
                raise PencilError(f"only {n - state['Y'].shape[1]} directions remain after deflation, {k} requested")
            bs = min(bs, n - state["Y"].shape[1])
            X, P = refill(X[:, ~null]), None
            continue
        if np.all(res[:k] <= tol):
            return lam[:k], X[:, :k], res[:k], it, state["Y"]
        W = constrain(precond(R) if precond is not None else R)
        blocks = [X, W] if P is None else [X, W, constrain(P)]
        S = _m_orthonormalize(np.hstack(blocks), M)
        A = S.T @ (K @ S)
        w, C = np.linalg.eigh(0.5 * (A + A.T))
        Xn = S @ C[:, :bs]
        P = Xn - X @ (X.T @ (M @ Xn))
        X = Xn
        if it % 20 == 0:
            X, P = refill(X), None
    raise EigensolverError(
        f"LOBPCG did not reach tol={tol:g} in {maxiter} iterations",
        residuals=res[:k] if res is not None else None,
        values=lam[:k] if lam is not None else None,
        iterations=maxiter,
    )


def smallest_nonzero(
    p: SymmetricPencil,
    k: int = 1,
    tol: float = 1e-9,
    known_kernel: Optional[np.ndarray] = None,
    projector: Optional[Callable] = None,
    preconditioner: Optional[Callable] = None,
    seed: int = 0,
    maxiter: int = 500,
    method: str = "auto",
    lambda_max: Optional[float] = None,
) -> EigResult:
    """The ``k`` smallest eigenvalues strictly above the kernel.

    Args:
        p: the pencil.
        k: number of eigenpairs wanted.
        tol: relative residual ``|Kv - lam Mv| / |lam Mv|`` required of each pair.
        known_kernel: ``(n, r)`` basis of the kernel; deflated M-orthogonally.
        projector: callable keeping blocks inside an invariant subspace that
            avoids the rest of the kernel (for pencils whose kernel is too large
            to list).
        preconditioner: callable applied to residual blocks.
        seed: seed for the initial block.
        method: ``"auto"``, ``"dense"`` or ``"lobpcg"``.
        lambda_max: upper spectral estimate used for the kernel threshold.

    Returns:
        EigResult with the values, M-orthonormal vectors and residuals.

    Raises:
        EigensolverError: the iteration did not converge.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = p.n
    flags = []
    if p.is_zero():
        return EigResult(n, np.zeros(0), np.zeros((n, 0)), np.zeros(0), "trivial", all_kernel=True)
    if method == "auto":
        method = "dense" if (n <= AUTO_DENSE_LIMIT and projector is None) else "lobpcg"
    if method == "dense":
        ds = dense_solve(p)
        vals = ds.values[ds.kernel_dim :]
        if known_kernel is not None and known_kernel.shape[1] != ds.kernel_dim:
            flags.append(
                f"kernel dimension {ds.kernel_dim} differs from supplied basis of size {known_kernel.shape[1]}"
            )
        if len(vals) == 0:
            return EigResult(ds.kernel_dim, vals, np.zeros((n, 0)), np.zeros(0), "dense", threshold=ds.threshold, all_kernel=True, flags=flags)
        V = ds.vectors[:, ds.kernel_dim : ds.kernel_dim + k]
        lam = vals[:k]
        R = p.K @ V - (p.M @ V) * lam
        res = np.linalg.norm(R, axis=0) / (np.abs(lam) * np.linalg.norm(p.M @ V, axis=0))
        return EigResult(ds.kernel_dim, lam, V, res, "dense", threshold=ds.threshold, flags=flags)
    if method != "lobpcg":
        raise ValueError(f"unknown method {method!r}")

    rng = np.random.default_rng(seed)
    lmax = lambda_max if lambda_max is not None else _lambda_max_estimate(p.K, p.M, rng)
    thr = KERNEL_RTOL * lmax
    Y = None
    if known_kernel is not None and known_kernel.shape[1]:
        Y = _m_orthonormalize(np.asarray(known_kernel, dtype=float), p.M)
        if Y.shape[1] != known_kernel.shape[1]:
            flags.append("supplied kernel basis is linearly dependent")
        KY = p.K @ Y
        bad = np.linalg.norm(KY, axis=0) > 1e-8 * lmax * np.linalg.norm(p.M @ Y, axis=0)
        if np.any(bad):
            flags.append(f"{int(bad.sum())} supplied kernel vectors are not in the kernel")
    scale = float(abs(p.K.diagonal()).mean() / abs(p.M.diagonal()).mean()) if n else 1.0
    lazy = {}

    def shift_invert(R):
        # factored on first use: most solves never meet a null mode
        if "f" not in lazy:
            lazy["f"] = _default_preconditioner(p.K, p.M, 1e-6 * scale)
        return lazy["f"](R)

    if preconditioner is None:
        preconditioner = shift_invert
    refine = shift_invert if known_kernel is None and projector is None else None
    lam, X, res, its, Yout = _lobpcg(p.K, p.M, k, tol, Y, projector, preconditioner, rng, maxiter, thr, lmax, refine)
    null = lam < thr
    if np.any(null):
        flags.append(f"{int(null.sum())} near-null modes beyond the supplied kernel")
        lam, X, res = lam[~null], X[:, ~null], res[~null]
    kdim = 0 if Yout is None else Yout.shape[1]
    return EigResult(kdim, lam, X, res, "lobpcg", its, thr, flags=flags)


@dataclass(frozen=True)
class Extrapolation:
    limit: float
    error: float
    order: Optional[float]
    flagged: bool
    levels: tuple

    def __iter__(self):
        yield self.limit
        yield self.error

    def to_dict(self) -> dict:
        return {
            "limit": self.limit,
            "error": self.error,
            "order": self.order,
            "flagged": self.flagged,
            "levels": [[h, v] for h, v in self.levels],
        }


def richardson_extrapolate(pairs: Sequence) -> Extrapolation:
    """Second-order Richardson step on the two finest of ``(h, value)`` pairs.

    Assumes ``value(h) = L + c h^2 + o(h^2)``. With three or more levels the
    observed order ``log2(|v1 - v2| / |v2 - v3|)`` of the three finest is
    reported; a sign change in the differences flags the sequence.
    """
    pts = sorted(((float(h), float(v)) for h, v in pairs), key=lambda t: -t[0])
    if len(pts) < 2:
        raise ValueError("need at least two grid levels")
    for (h1, _), (h2, _) in zip(pts, pts[1:]):
        if abs(h1 / h2 - 2.0) > 1e-9:
            raise ValueError(f"grid levels must halve h, got {h1} -> {h2}")
    vc, vf = pts[-2][1], pts[-1][1]
    limit = (4.0 * vf - vc) / 3.0
    err = abs(vf - vc) / 3.0
    order, flagged = None, False
    if len(pts) >= 3:
        v1, v2, v3 = pts[-3][1], vc, vf
        d1, d2 = v1 - v2, v2 - v3
        if d1 * d2 < 0:
            flagged = True
        elif d1 != 0 and d2 != 0:
            order = math.log2(abs(d1) / abs(d2))
    return Extrapolation(limit, err, order, flagged, tuple(pts))
