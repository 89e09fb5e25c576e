"""Independent reference implementations used by the tests.

Nothing here imports the package under test. Each oracle takes a different
route from the production code: Jacobi rotations instead of LAPACK, explicit
loops instead of vectorized assembly, Leibniz expansion instead of LU
determinants, closed-form separable spectra instead of any solver.
"""

import itertools
import math

import numpy as np


# -- eigenvalues by cyclic Jacobi rotations -------------------------------------------------

def jacobi_eigh(A, tol=1e-14, max_sweeps=100):
    """Eigenvalues and vectors of a symmetric matrix by cyclic Jacobi sweeps."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.abs(A).max(), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                if abs(theta) > 1e150:
                    t = 1 / (2 * theta)
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                R = np.eye(n)
                R[p, p] = R[q, q] = c
                R[p, q] = s
                R[q, p] = -s
                A = R.T @ A @ R
                V = V @ R
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def generalized_eigvals(K, M):
    """Eigenvalues of ``K x = lam M x`` via ``M^{-1/2}`` from a Jacobi decomposition of M."""
    K = np.asarray(K.toarray() if hasattr(K, "toarray") else K, dtype=float)
    M = np.asarray(M.toarray() if hasattr(M, "toarray") else M, dtype=float)
    wm, Vm = jacobi_eigh(M)
    S = Vm @ np.diag(1 / np.sqrt(wm)) @ Vm.T
    A = S @ K @ S
    return jacobi_eigh(0.5 * (A + A.T))[0]


def smallest_above(values, rtol=1e-10):
    values = np.sort(np.asarray(values))
    thr = rtol * max(np.abs(values).max(), 1e-300)
    pos = values[values > thr]
    return float(pos[0]) if pos.size else math.inf


# -- closed-form discrete spectra on boxes --------------------------------------------------

def dirichlet_1d(m, h):
    """Second-difference Dirichlet spectrum on m-1 interior points."""
    k = np.arange(1, m)
    return 4 / h ** 2 * np.sin(k * np.pi / (2 * m)) ** 2


def neumann_1d(m, h):
    """Graph-Laplacian spectrum of a path with m nodes and spacing h."""
    k = np.arange(0, m)
    return 4 / h ** 2 * np.sin(k * np.pi / (2 * m)) ** 2


def lambda_1(n_dim, m, side=1.0):
    h = side / m
    return n_dim * dirichlet_1d(m, h)[0]


def mu_2(n_dim, m, side=1.0):
    h = side / m
    return neumann_1d(m, h)[1]


def maxwell_tangential_closed_form(n_dim, q, m, side=1.0):
    """``C_t^q = 1/sqrt((N-q) s_1)`` for 0 <= q <= N-1, and ``1/sqrt(s_1)`` at q = N."""
    h = side / m
    s1 = 4 / h ** 2 * math.sin(math.pi / (2 * m)) ** 2
    if q == n_dim:
        return 1 / math.sqrt(s1)
    return 1 / math.sqrt((n_dim - q) * s1)


def richardson(v_coarse, v_fine):
    return (4 * v_fine - v_coarse) / 3


# -- brute-force cubical complex -----------------------------------------------------------

def brute_cells(n_dim, m, q):
    """All q-cells as (base, axes), enumerated by explicit loops."""
    cells = []
    for S in itertools.combinations(range(n_dim), q):
        ranges = [range(m) if k in S else range(m + 1) for k in range(n_dim)]
        for base in itertools.product(*ranges):
            cells.append((base, S))
    return cells


def brute_incidence(n_dim, m, q):
    """Signed incidence from q-cells to (q+1)-cells in the brute enumeration order."""
    lo = brute_cells(n_dim, m, q)
    hi = brute_cells(n_dim, m, q + 1)
    where = {c: i for i, c in enumerate(lo)}
    D = np.zeros((len(hi), len(lo)), dtype=np.int64)
    for r, (base, T) in enumerate(hi):
        for p, t in enumerate(T):
            S = tuple(a for a in T if a != t)
            far = list(base)
            far[t] += 1
            D[r, where[(tuple(base), S)]] += -((-1) ** p)
            D[r, where[(tuple(far), S)]] += (-1) ** p
    return D, lo, hi


def cell_center(cell, h):
    base, S = cell
    return tuple((b + (0.5 if k in S else 0.0)) * h for k, b in enumerate(base))


def on_boundary(cell, m):
    base, S = cell
    return any(k not in S and b in (0, m) for k, b in enumerate(base))


def product_count(n_dim, m, q):
    total = 0
    for S in itertools.combinations(range(n_dim), q):
        c = 1
        for k in range(n_dim):
            c *= m if k in S else m + 1
        total += c
    return total


# -- determinants and minors by Leibniz expansion -------------------------------------------

def perm_parity(p):
    p = list(p)
    sign = 1
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                sign = -sign
    return sign


def leibniz_det(A):
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        return 1.0
    return sum(perm_parity(p) * math.prod(A[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def minors(J, q):
    n = J.shape[0]
    sets = list(itertools.combinations(range(n), q))
    out = np.zeros((len(sets), len(sets)))
    for a, I in enumerate(sets):
        for b, K in enumerate(sets):
            out[a, b] = leibniz_det(J[np.ix_(I, K)])
    return out


def cofactor_adjugate(A):
    n = A.shape[0]
    C = np.zeros_like(A, dtype=float)
    for i in range(n):
        for j in range(n):
            sub = np.delete(np.delete(A, i, 0), j, 1)
            C[i, j] = (-1) ** (i + j) * leibniz_det(sub)
    return C.T


# -- abstract constants via metric square roots ----------------------------------------------

def sym_sqrt(G):
    w, V = jacobi_eigh(G)
    return V @ np.diag(np.sqrt(w)) @ V.T


def metric_constant(A, G_dom, G_cod, rtol=1e-10):
    """``1/sigma_min^+`` of ``G_cod^{1/2} A G_dom^{-1/2}`` through Jacobi; inf for A = 0."""
    A = np.asarray(A, dtype=float)
    if A.size == 0 or not np.any(A):
        return math.inf
    Sd = sym_sqrt(G_dom)
    Sc = sym_sqrt(G_cod)
    B = Sc @ A @ np.linalg.inv(Sd)
    w = jacobi_eigh(B.T @ B)[0]
    thr = rtol * w.max() * max(B.shape)
    return 1 / math.sqrt(w[w > thr][0])


def numerical_rank(A):
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > 1e-10 * s[0]))


# -- extended precision (mpmath) -------------------------------------------------------------

MP_DIGITS = 40


def _mp(A):
    import mpmath as mp

    A = np.atleast_2d(np.asarray(A, dtype=float))
    return mp.matrix(A.tolist())


def _mp_inv_chol(G):
    import mpmath as mp

    return mp.inverse(mp.cholesky(_mp(G)))


def mp_metric_constant(A, G_dom, G_cod):
    """``c_A`` from the squared form carried out in 40-digit arithmetic."""
    import mpmath as mp

    A = np.asarray(A, dtype=float)
    if A.size == 0 or not np.any(A):
        return math.inf
    with mp.workdps(MP_DIGITS):
        Li = _mp_inv_chol(G_dom)
        Am = _mp(A)
        K = Li * Am.T * _mp(G_cod) * Am * Li.T
        w = sorted(float(v) for v in mp.eigsy(K)[0])
    return 1 / math.sqrt(smallest_above(w, rtol=1e-20))


def mp_combined_constant(a0, G0, G1, a1, G2):
    """``1/sqrt`` of the smallest nonzero eigenvalue of ``a0 a0* + a1* a1`` in the H1 metric."""
    import mpmath as mp

    n1 = G1.shape[0]
    with mp.workdps(MP_DIGITS):
        G = _mp(G1)
        K = mp.zeros(n1, n1)
        if a0.size and np.any(a0):
            A0 = _mp(a0)
            a0s = mp.inverse(_mp(G0)) * A0.T * G
            K += a0s.T * _mp(G0) * a0s
        if a1.size and np.any(a1):
            A1 = _mp(a1)
            K += A1.T * _mp(G2) * A1
        Li = _mp_inv_chol(G1)
        w = sorted(float(v) for v in mp.eigsy(Li * K * Li.T)[0])
    lam = smallest_above(w, rtol=1e-20)
    return 1 / math.sqrt(lam) if math.isfinite(lam) else math.inf
