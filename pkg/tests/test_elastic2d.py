import math

import networkx as nx
import numpy as np
import pytest
import scipy.linalg as sla

from fractura.crackgeom import CrackSet
from fractura.elastic2d import (BoundaryDisplacement, CoefficientError, ScalarCoefficientField,
                                SolverError, TensorCoefficientField, assemble, cut_mesh,
                                energy_inner_product, solve, solve_antiplanar, solve_planar,
                                stability_experiment)
from fractura.mesh import Mesh, MeshError, structured_rectangle

I2 = ScalarCoefficientField(1.0, 1.0, 1.0)
ID4 = TensorCoefficientField.identity()


def empty(mesh):
    return mesh.crack_graph().crack([])


def full(mesh):
    g = mesh.crack_graph()
    return g.crack(range(len(g)))


def toy_mesh(crack_edges):
    """Unit square split into four triangles around its centre (node 4)."""
    nodes = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)]
    tris = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
    bnd = {"dirichlet": [(0, 1), (1, 2), (2, 3), (3, 0)]}
    return Mesh(nodes, tris, bnd, crack_edges)


# --- patch tests --------------------------------------------------------------

@pytest.mark.parametrize("g,expected", [("x", 1.0), ("3 - 2*x + 0.5*y", 4.25)])
def test_scalar_patch(g, expected):
    m = structured_rectangle(6, 5)
    res = solve_antiplanar(cut_mesh(m, empty(m)), I2, BoundaryDisplacement.scalar(g))
    assert res.bulk_energy == pytest.approx(expected, abs=1e-10)
    exact = BoundaryDisplacement.scalar(g).base_values(m)[:, 0]
    np.testing.assert_allclose(res.u, exact, atol=1e-12)


def test_scaled_coefficient_doubles_energy():
    m = structured_rectangle(4, 4)
    res = solve(cut_mesh(m, empty(m)), ScalarCoefficientField(2.0, 2.0, 2.0), BoundaryDisplacement.scalar("x"))
    assert res.bulk_energy == pytest.approx(2.0, abs=1e-10)


def test_full_crack_floating_top():
    m = structured_rectangle(8, 8, dirichlet_sides=("bottom",), crack_segments=[[0, 0.5, 1, 0.5]],
                             allow_boundary_cracks=False)
    disc = cut_mesh(m, full(m))
    res = solve(disc, I2, BoundaryDisplacement.scalar("1"))
    assert res.bulk_energy == pytest.approx(0.0, abs=1e-12)
    below = disc.nodes[:, 1] < 0.5
    np.testing.assert_allclose(res.u[below], 1.0, atol=1e-12)
    assert res.floating.sum() == 1 and disc.n_components == 2


def test_planar_examples():
    m = structured_rectangle(5, 5)
    disc = cut_mesh(m, empty(m))
    assert solve_planar(disc, ID4, BoundaryDisplacement.vector("x", "0")).bulk_energy == pytest.approx(1.0, abs=1e-10)
    assert solve_planar(disc, ID4, BoundaryDisplacement.vector("-y", "x")).bulk_energy <= 1e-12


def test_planar_floating_component_zero_energy():
    m = structured_rectangle(6, 6, dirichlet_sides=("bottom",), crack_segments=[[0, 0.5, 1, 0.5]])
    res = solve_planar(cut_mesh(m, full(m)), ID4, BoundaryDisplacement.vector("0", "0"))
    assert res.bulk_energy == 0.0 and res.floating.any()


def test_planar_pinned_point_needs_rotation_constraint():
    # Dirichlet on a single node: translations fixed, rotation kernel removed by constraint
    nodes = [(0, 0), (1, 0), (1, 1), (0, 1)]
    m = Mesh(nodes, [(0, 1, 2), (0, 2, 3)], {"dirichlet": [], "neumann": [(0, 1), (1, 2), (2, 3), (3, 0)]})
    object.__setattr__(m, "boundary_edges", {"dirichlet": np.array([[0, 0]]), "neumann": m.boundary_edges["neumann"]})
    res = solve_planar(cut_mesh(m, empty(m)), ID4, BoundaryDisplacement.vector("x", "y"))
    assert res.bulk_energy == pytest.approx(0.0, abs=1e-14)


# --- cut mesh ------------------------------------------------------------------

def test_cut_mesh_empty_is_identity():
    m = structured_rectangle(3, 3)
    d = cut_mesh(m, empty(m))
    assert d.n_duplicated == 0
    np.testing.assert_array_equal(d.triangles, m.triangles)


def test_cut_mesh_interior_counts():
    m = structured_rectangle(4, 4, crack_segments=[[0.25, 0.5, 0.75, 0.5]])
    g = m.crack_graph()
    assert len(g) == 2
    assert cut_mesh(m, g.crack([0])).n_duplicated == 0      # both ends are tips
    assert cut_mesh(m, g.crack([0, 1])).n_duplicated == 1   # middle vertex splits in two


def test_cut_mesh_toy_five_nodes():
    # path corner-centre-corner along the diagonal: the centre and both corners split
    m = toy_mesh([(0, 4), (4, 2)])
    d = cut_mesh(m, m.crack_graph().crack([0, 1]))
    assert d.n_duplicated == 3 and d.n_components == 2
    # a single spoke has an interior tip at the centre and a corner on the boundary
    d1 = cut_mesh(m, m.crack_graph().crack([0]))
    assert d1.n_duplicated == 1 and d1.n_components == 1


def test_full_chain_separates_dofs():
    m = structured_rectangle(6, 4, crack_segments=[[0, 0.5, 1, 0.5]])
    d = cut_mesh(m, full(m))
    G = nx.Graph()
    G.add_nodes_from(range(d.n_nodes))
    for a, b, c in d.triangles:
        G.add_edges_from([(a, b), (b, c), (c, a)])
    assert nx.number_connected_components(G) == 2 == d.n_components


def test_cut_mesh_rejects_foreign_segment():
    m = structured_rectangle(2, 2, crack_segments=[[0, 0.5, 1, 0.5]])
    with pytest.raises(ValueError, match="not a crack-graph edge"):
        cut_mesh(m, CrackSet(np.array([[0.0, 0.0, 0.5, 0.5]])))


def test_mesh_validation():
    with pytest.raises(MeshError):
        Mesh([(0, 0), (1, 0), (2, 0)], [(0, 1, 2)])
    with pytest.raises(MeshError):
        structured_rectangle(0, 3)


# --- minimality and orthogonality -------------------------------------------

@pytest.fixture(scope="module")
def slit_solution():
    m = structured_rectangle(10, 10, crack_segments=[[0, 0.5, 0.6, 0.5]])
    a = ScalarCoefficientField({"a11": "2 + x", "a12": "0.2*y", "a22": "1.5"}, 1.0, 3.2)
    disc = cut_mesh(m, full(m))
    return disc, a, solve(disc, a, BoundaryDisplacement.scalar("sin(3*x)*(2*y-1)"))


def test_minimality_random_perturbations(slit_solution, rng):
    disc, a, res = slit_solution
    free = np.setdiff1d(np.arange(disc.n_nodes), disc.dirichlet_nodes)
    K = res.stiffness
    for _ in range(100):
        v = np.zeros(disc.n_nodes)
        v[free] = rng.normal(size=len(free)) * rng.uniform(1e-6, 1.0)
        w = res.u + v
        assert res.bulk_energy <= float(w @ K @ w) + 1e-12


def test_galerkin_orthogonality(slit_solution):
    disc, a, res = slit_solution
    free = np.setdiff1d(np.arange(disc.n_nodes), disc.dirichlet_nodes)
    assert np.abs((res.stiffness @ res.u)[free]).max() <= 1e-10


def test_inner_product_properties(slit_solution, rng):
    disc, a, res = slit_solution
    assert energy_inner_product(disc, a, res, res) == pytest.approx(res.bulk_energy, rel=1e-12)
    assert energy_inner_product(disc, a, res, np.zeros(disc.n_nodes)) == 0.0
    w1, w2 = rng.normal(size=disc.n_nodes), rng.normal(size=disc.n_nodes)
    lhs = energy_inner_product(disc, a, res, w1 + w2)
    rhs = energy_inner_product(disc, a, res, w1) + energy_inner_product(disc, a, res, w2)
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs)))
    assert energy_inner_product(disc, a, w1, w2) == pytest.approx(energy_inner_product(disc, a, w2, w1), rel=1e-12)
    with pytest.raises(ValueError, match="dof-length mismatch"):
        energy_inner_product(disc, a, res, np.zeros(3))


# --- convergence -------------------------------------------------------------

def test_manufactured_convergence():
    exact = 8.0 / 3.0  # int over the unit square of |grad(x^2 - y^2)|^2
    errs = []
    for n in (8, 16, 32):
        m = structured_rectangle(n, n)
        errs.append(abs(solve(cut_mesh(m, empty(m)), I2, BoundaryDisplacement.scalar("x**2 - y**2")).bulk_energy - exact))
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3


def _slit_energy(n, g):
    m = structured_rectangle(n, n, crack_segments=[[0, 0.5, 0.5, 0.5]])
    return solve(cut_mesh(m, full(m)), I2, BoundaryDisplacement.scalar(g)).bulk_energy


def test_slit_richardson_reference():
    g = "tanh(8*(y - 0.5))"
    h = 16  # base mesh h = 1/16; reference from h/4 and h/8
    e2, e4, e8 = (_slit_energy(h * k, g) for k in (2, 4, 8))
    order = math.log2((e4 - e2) / (e8 - e4))
    ref = e8 + (e8 - e4) / (2 ** order - 1)
    assert 0.8 <= order <= 2.5
    assert abs(e4 - ref) / ref <= 0.01
    assert abs(e8 - ref) < abs(e4 - ref) < abs(e2 - ref)


# --- coefficients and ellipticity ----------------------------------------------

def test_coefficient_validation():
    with pytest.raises(CoefficientError, match="ellipticity bound alpha1 must be positive"):
        ScalarCoefficientField(1.0, 0.0, 1.0)
    m = structured_rectangle(2, 2)
    with pytest.raises(CoefficientError):
        ScalarCoefficientField(np.diag([1.0, 3.0]), 1.0, 2.0).element_values(m)
    with pytest.raises(CoefficientError):
        TensorCoefficientField(np.diag([1.0, 1.0, -1.0]), 0.5, 2.0).element_values(m)


def test_generalized_eigenvalues_within_ellipticity_bounds():
    m = structured_rectangle(5, 4)
    disc = cut_mesh(m, empty(m))
    a = ScalarCoefficientField({"a11": "2 + x", "a12": "0.3*sin(4*y)", "a22": "1.5 + y"}, 0.9, 3.5)
    free = np.setdiff1d(np.arange(disc.n_nodes), disc.dirichlet_nodes)
    Ka = assemble(disc, a).toarray()[np.ix_(free, free)]
    Ki = assemble(disc, I2).toarray()[np.ix_(free, free)]
    lam = sla.eigh(Ka, Ki, eigvals_only=True)
    assert 0.9 <= lam.min() and lam.max() <= 3.5
    # raw stiffness spectrum against alpha scaled by the P1 Laplacian bounds (factor 10 slack)
    mu = np.linalg.eigvalsh(Ka)
    mi = np.linalg.eigvalsh(Ki)
    assert mu.min() >= 0.9 * mi.min() / 10 and mu.max() <= 3.5 * mi.max() * 10


def test_crack_monotonicity_of_bulk_energy():
    m = structured_rectangle(8, 8, crack_segments=[[0, 0.5, 1, 0.5]])
    g, G = BoundaryDisplacement.scalar("x + 2*y"), m.crack_graph()
    energies = [solve(cut_mesh(m, G.crack(range(k))), I2, g).bulk_energy for k in range(len(G) + 1)]
    assert all(b <= a for a, b in zip(energies, energies[1:]))


# --- solver paths ---------------------------------------------------------------

def test_iterative_path_matches_direct():
    m = structured_rectangle(12, 12, crack_segments=[[0, 0.5, 0.5, 0.5]])
    disc = cut_mesh(m, full(m))
    g = BoundaryDisplacement.scalar("tanh(8*(y - 0.5))")
    direct, iterative = solve(disc, I2, g), solve(disc, I2, g, direct_limit=0)
    assert iterative.bulk_energy == pytest.approx(direct.bulk_energy, rel=1e-10)


def test_singular_system_reported():
    m = structured_rectangle(2, 2)
    bad = ScalarCoefficientField.__new__(ScalarCoefficientField)
    object.__setattr__(bad, "a", np.zeros((2, 2)))
    object.__setattr__(bad, "alpha1", 1.0)
    object.__setattr__(bad, "alpha2", 1.0)
    with pytest.raises((SolverError, CoefficientError)):
        solve(cut_mesh(m, empty(m)), bad, BoundaryDisplacement.scalar("x"))


# --- stability ---------------------------------------------------------------------

def test_stability_constant_and_empty_sequences():
    m = structured_rectangle(8, 8, crack_segments=[[0, 0.5, 0.5, 0.5]])
    G, g = m.crack_graph(), BoundaryDisplacement.scalar("x + y")
    K = G.crack(range(len(G)))
    rep = stability_experiment(m, I2, g, [K] * 3, K)
    assert rep.gaps == [0.0, 0.0, 0.0] and rep.monotone and rep.within_tolerance
    rep0 = stability_experiment(m, I2, g, [G.crack([])] * 2, G.crack([]))
    assert rep0.energies[0] == solve(cut_mesh(m, G.crack([])), I2, g).bulk_energy
