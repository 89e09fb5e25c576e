import io
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

import oracles
from maxwellconst.grid_complex import (
    Cochain,
    EpsilonWeight,
    GridError,
    build_grid,
    codifferential,
    epsilon_bounds,
    export_coo,
    exterior_derivative,
    hodge_dual_index,
    mass_matrix,
)
from maxwellconst.hilbert_complex import WeightError


def _round_key(p):
    return tuple(round(v, 9) for v in p)


def brute_permutation(grid, q):
    """Positions of the brute-force cells inside the package ordering, matched by barycenter."""
    n, m = grid.n_dim, grid.cells_per_axis
    pkg = {_round_key(p): i for i, p in enumerate(grid.barycenters(q))}
    return np.array([pkg[_round_key(oracles.cell_center(c, grid.h))] for c in oracles.brute_cells(n, m, q)])


# -- build_grid --------------------------------------------------------------------------------

def test_counts_small_grids():
    g = build_grid(2, 2, 1.0)
    assert [g.n_cells(q) for q in range(3)] == [9, 12, 4]
    g = build_grid(3, 2, 1.0)
    assert [g.n_cells(q) for q in range(4)] == [27, 54, 36, 8]


def test_counts_4d_match_brute_enumeration():
    g = build_grid(4, 3, 1.0)
    for q in range(5):
        assert g.n_cells(q) == len(oracles.brute_cells(4, 3, q)) == oracles.product_count(4, 3, q)


def test_build_grid_guards():
    with pytest.raises(GridError):
        build_grid(2, 1)
    with pytest.raises(GridError):
        build_grid(0, 4)
    with pytest.raises(GridError):
        build_grid(3, 500)  # > 1e8 cells over all degrees


def test_diam():
    assert build_grid(3, 4, 2.0).diam == pytest.approx(2 * math.sqrt(3))


# -- exterior derivative -----------------------------------------------------------------------

def test_d0_1d_example():
    D = exterior_derivative(build_grid(1, 2), 0, "none").matrix.toarray()
    assert np.array_equal(D, [[-1, 1, 0], [0, -1, 1]])


def test_d0_tangential_2d_m2():
    D = exterior_derivative(build_grid(2, 2), 0, "tangential").matrix
    assert D.shape[1] == 1
    assert np.count_nonzero(D.toarray()) == 4


@pytest.mark.parametrize("n,m", [(1, 3), (2, 3), (3, 2), (4, 2)])
def test_incidence_matches_brute_force(n, m):
    g = build_grid(n, m)
    for q in range(n):
        D, lo, hi = oracles.brute_incidence(n, m, q)
        plo, phi = brute_permutation(g, q), brute_permutation(g, q + 1)
        P = exterior_derivative(g, q, "none").matrix.toarray()
        assert np.array_equal(P[np.ix_(phi, plo)], D)


@pytest.mark.parametrize("n,m", [(2, 4), (3, 3), (4, 2)])
def test_row_structure_and_dd_zero(n, m):
    g = build_grid(n, m)
    for q in range(n):
        D = exterior_derivative(g, q, "none").matrix
        nnz = np.diff(D.indptr)
        assert np.all(nnz == 2 * (q + 1))
        assert set(np.unique(D.data)) <= {-1, 1}
    for bc in ("none", "tangential"):
        for q in range(n - 1):
            DD = exterior_derivative(g, q + 1, bc).matrix @ exterior_derivative(g, q, bc).matrix
            assert DD.nnz == 0 or np.abs(DD.toarray()).max() == 0


def test_tangential_deletes_boundary_cells():
    g = build_grid(3, 3)
    for q in range(3):
        Dt = exterior_derivative(g, q, "tangential").matrix
        cells_lo = [c for c in oracles.brute_cells(3, 3, q) if not oracles.on_boundary(c, 3)]
        cells_hi = [c for c in oracles.brute_cells(3, 3, q + 1) if not oracles.on_boundary(c, 3)]
        assert Dt.shape == (len(cells_hi), len(cells_lo))


def test_degree_out_of_range():
    g = build_grid(2, 3)
    with pytest.raises(GridError):
        exterior_derivative(g, 2)
    with pytest.raises(GridError):
        exterior_derivative(g, -1)


def test_cochain_tangential_invariant():
    g = build_grid(2, 3)
    v = np.ones(g.n_cells(1))
    with pytest.raises(GridError):
        Cochain(g, 1, v, "tangential")
    c = Cochain.from_dofs(g, 1, np.arange(g.dofs(1, "tangential").size, dtype=float), "tangential")
    assert np.all(c.values[g.boundary_mask(1)] == 0)
    assert c.d().degree == 2


# -- masses -----------------------------------------------------------------------------------

def test_mass_examples():
    g = build_grid(2, 2)
    assert np.array_equal(mass_matrix(g, 1, bc="none").matrix.diagonal(), np.ones(12))
    assert np.array_equal(mass_matrix(g, 0, bc="none").matrix.diagonal(), np.full(9, 0.25))


@pytest.mark.parametrize("n,m", [(2, 5), (3, 3)])
def test_unweighted_mass_is_exact_power(n, m):
    g = build_grid(n, m)
    h = 1.0 / m
    for q in range(n + 1):
        M = mass_matrix(g, q, bc="none")
        assert M.diagonal
        assert np.array_equal(M.matrix.diagonal(), np.full(g.n_cells(q), h ** (n - 2 * q)))
        w = np.random.default_rng(q).standard_normal(g.n_cells(q))
        assert w @ M.matrix @ w == pytest.approx(np.sum(w * w) * h ** (n - 2 * q), rel=1e-13)


def test_scalar_two_weight():
    g = build_grid(2, 4)
    eps = EpsilonWeight.scalar(2.0)
    M, Me = mass_matrix(g, 1, None).matrix, mass_matrix(g, 1, eps).matrix
    rng = np.random.default_rng(0)
    for _ in range(10):
        w = rng.standard_normal(M.shape[0])
        assert w @ Me @ w == pytest.approx(2 * (w @ M @ w), rel=1e-13)
    under, over, hat = epsilon_bounds(eps, g, 1)
    assert over == pytest.approx(math.sqrt(2)) and under == pytest.approx(1 / math.sqrt(2)) and hat == pytest.approx(math.sqrt(2))


def test_nonpositive_weight_rejected():
    g = build_grid(2, 4)
    eps = EpsilonWeight.from_field(lambda x: x[:, 0] - 0.5, "x1 - 1/2")
    with pytest.raises(WeightError):
        mass_matrix(g, 1, eps)


def test_constant_spd_mass_block_structure():
    g = build_grid(2, 3)
    E = np.array([[2.0, 0.5], [0.5, 1.0]])
    M = mass_matrix(g, 1, EpsilonWeight.constant_spd(E), bc="none").matrix
    assert abs(M - M.T).max() == 0
    assert np.linalg.eigvalsh(M.toarray())[0] > 0
    # off-diagonal entries couple x-edges and y-edges sharing a base vertex only
    assert M.nnz == g.n_cells(1) + 2 * 3 * 3
    with pytest.raises(WeightError):
        mass_matrix(g, 1, EpsilonWeight.constant_spd(np.eye(3)))


# -- epsilon bounds --------------------------------------------------------------------------

def test_epsilon_bounds_examples():
    g = build_grid(2, 8)
    assert epsilon_bounds(EpsilonWeight.identity(), g, 1) == (1.0, 1.0, 1.0)
    under, over, hat = epsilon_bounds(EpsilonWeight.scalar(4.0), g, 1)
    assert (under, over, hat) == pytest.approx((0.5, 2.0, 2.0), rel=1e-15)


def test_epsilon_bounds_field_diagonal_scan():
    g = build_grid(2, 8)
    eps = EpsilonWeight.from_field(lambda x: 1 + x[:, 0], "1 + x1")
    for q in (0, 1, 2):
        under, over, _ = epsilon_bounds(eps, g, q)
        ratio = []
        for c in oracles.brute_cells(2, 8, q):
            if not oracles.on_boundary(c, 8):
                ratio.append(1 + oracles.cell_center(c, 1 / 8)[0])
        assert over == pytest.approx(math.sqrt(max(ratio)), rel=1e-14)
        assert under == pytest.approx(1 / math.sqrt(min(ratio)), rel=1e-14)
        assert 1 <= min(ratio) and max(ratio) <= 2


@pytest.mark.parametrize("q", [0, 1, 2])
def test_bounds_bracket_100_random_rayleigh_quotients(q):
    g = build_grid(2, 6)
    for eps in (EpsilonWeight.from_field(lambda x: 1 + x[:, 0] * x[:, 1], "1 + x1 x2"),
                EpsilonWeight.constant_spd(np.array([[3.0, 1.0], [1.0, 2.0]]))):
        if eps.kind == "constant-spd" and q != 1:
            continue
        under, over, _ = epsilon_bounds(eps, g, q)
        M, Me = mass_matrix(g, q).matrix, mass_matrix(g, q, eps).matrix
        rng = np.random.default_rng(q)
        for _ in range(100):
            w = rng.standard_normal(M.shape[0])
            rq = (w @ Me @ w) / (w @ M @ w)
            assert under ** -2 * (1 - 1e-12) <= rq <= over ** 2 * (1 + 1e-12)


# -- codifferential -----------------------------------------------------------------------------

@pytest.mark.parametrize("n,q", [(2, 1), (2, 2), (3, 1), (3, 2), (3, 3)])
def test_partial_integration_identity(n, q):
    g = build_grid(n, 4)
    eps = EpsilonWeight.from_field(lambda x: 1 + x[:, 0], "1 + x1")
    delta = codifferential(g, q, eps)
    D = exterior_derivative(g, q - 1).matrix
    Mlo = mass_matrix(g, q - 1).matrix
    Me = mass_matrix(g, q, eps).matrix
    rng = np.random.default_rng(n * 10 + q)
    for _ in range(50):
        xi = rng.standard_normal(D.shape[1])
        zeta = rng.standard_normal(D.shape[0])
        lhs = (D @ xi) @ Me @ zeta
        rhs = -(xi @ Mlo @ (delta.matrix @ zeta))
        assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + np.linalg.norm(xi) * np.linalg.norm(zeta))


def test_delta_delta_zero():
    g = build_grid(3, 3)
    d2 = codifferential(g, 2).matrix
    d3 = codifferential(g, 3).matrix
    prod = d2 @ d3
    assert prod.nnz == 0 or np.abs(prod.toarray()).max() <= 1e-12 * abs(d2).max() * abs(d3).max()


def test_codifferential_1d_hand_calculation():
    # N=1, m=2, tangential: one interior vertex (x=1/2), two edges; h = 1/2
    g = build_grid(1, 2)
    delta = codifferential(g, 1).matrix.toarray()
    # -M0^{-1} D0^T M1 with M0 = h, M1 = 1/h, D0 = [[1], [-1]]
    assert np.allclose(delta, [[-4.0, 4.0]], rtol=0, atol=1e-15)


def test_codifferential_degree_guard():
    with pytest.raises(GridError):
        codifferential(build_grid(2, 3), 0)


# -- Hodge pairing ------------------------------------------------------------------------------

@pytest.mark.parametrize("n,m", [(2, 4), (3, 3)])
def test_hodge_pairing_is_a_bijection(n, m):
    g = build_grid(n, m)
    for q in range(n + 1):
        for bc in ("tangential", "none"):
            P = hodge_dual_index(g, q, bc)
            assert sorted(P.target.tolist()) == list(range(len(P.target)))
            assert set(np.unique(P.sign)) <= {-1, 1}


def test_hodge_3d_vertices_to_dual_volumes():
    g = build_grid(3, 2)
    P = hodge_dual_index(g, 0, "tangential")
    # the single interior vertex pairs with the single volume of the dual grid
    assert len(P.target) == 1 and P.target_grid.n_cells(3) == 1


@pytest.mark.parametrize("n,m", [(2, 4), (3, 3)])
def test_hodge_pairing_involution_sign(n, m):
    g = build_grid(n, m)
    for q in range(n + 1):
        P = hodge_dual_index(g, q, "tangential")
        back = hodge_dual_index(P.target_grid, n - q, "none")
        assert back.target_grid.cells_per_axis == m
        # compose and compare with the embedding of the interior cells
        A = P.matrix()
        B = back.matrix()
        C = (B @ A).toarray()
        src = g.dofs(q, "tangential")
        tgt_dofs = back.target_grid.dofs(q, "tangential")
        assert len(tgt_dofs) == len(src)
        assert np.array_equal(np.abs(C), np.eye(len(src)))
        assert np.all(np.diag(C) == (-1) ** (q * (n - q)))


def test_hodge_transport_matches_cell_centers():
    g = build_grid(2, 4)
    P = hodge_dual_index(g, 1, "tangential")
    src = g.barycenters(1)[g.dofs(1, "tangential")]
    dst = P.target_grid.barycenters(1)[P.target]
    assert np.allclose(src, dst, atol=1e-14)
    out = P.transport(np.ones(len(src)))
    assert np.allclose(np.abs(out), 1.0)  # h^(N-2q) = 1 for N=2, q=1


# -- export ---------------------------------------------------------------------------------

def test_export_coo_round_trip():
    g = build_grid(2, 3)
    D = exterior_derivative(g, 1, "none").matrix
    buf = io.StringIO()
    export_coo(D, buf)
    rows = [line.split() for line in buf.getvalue().splitlines()]
    back = sp.coo_matrix(([int(v) for _, _, v in rows], ([int(r) for r, _, _ in rows], [int(c) for _, c, _ in rows])), shape=D.shape)
    assert (back - D).nnz == 0
    M = mass_matrix(g, 0, EpsilonWeight.from_field(lambda x: 1 + x[:, 0] / 3, "f")).matrix
    buf = io.StringIO()
    export_coo(M, buf)
    vals = [float(line.split()[2]) for line in buf.getvalue().splitlines()]
    assert vals == M.diagonal().tolist()


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(2, 4))
def test_property_dd_zero_and_counts(n, m):
    g = build_grid(n, m)
    for q in range(n + 1):
        assert g.n_cells(q) == oracles.product_count(n, m, q)
    for q in range(n - 1):
        DD = exterior_derivative(g, q + 1, "none").matrix @ exterior_derivative(g, q, "none").matrix
        assert DD.count_nonzero() == 0
