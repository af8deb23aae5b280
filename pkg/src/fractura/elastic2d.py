"""Crack-conforming P1 solvers for anti-plane and plane linear elasticity.

Cracks are realised by duplicating mesh nodes along the crack: around each
crack vertex the incident triangles are grouped into sectors that are joined
through non-crack edges, and every sector gets its own copy of the node.  A
tip vertex (one crack edge, interior) therefore keeps a single node.

Energies follow the convention ``bulk = int a grad u . grad u`` (no factor
1/2), so that ``d/dt E = 2 (u, g')_a`` along an evolution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from . import kernels
from .crackgeom import CrackSet, h1_measure
from .expr import Expression
from .mesh import Mesh

log = logging.getLogger(__name__)

SOLVER_RTOL = 1e-12
DIRECT_LIMIT = 200_000


class CoefficientError(ValueError):
    """Coefficient field violates its ellipticity bounds."""


class SolverError(RuntimeError):
    """Linear solve failed or produced an inadmissible answer."""


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------


def _sym2_eigs(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b, d = m[:, 0, 0], 0.5 * (m[:, 0, 1] + m[:, 1, 0]), m[:, 1, 1]
    h = 0.5 * (a + d)
    r = np.hypot(0.5 * (a - d), b)
    return h - r, h + r


@dataclass(frozen=True, eq=False)
class ScalarCoefficientField:
    """Symmetric 2x2 conductivity ``a(x)``.

    ``a`` may be a number (isotropic constant), a 2x2 matrix, an ``(M, 2, 2)``
    per-triangle array, or a dict of formulas ``{"a11", "a12", "a22"}``
    evaluated at triangle centroids.
    """

    a: object = 1.0
    alpha1: float = 1.0
    alpha2: float = 1.0

    def __post_init__(self):
        if not self.alpha1 > 0:
            raise CoefficientError(f"ellipticity bound alpha1 must be positive (got {self.alpha1})")
        if self.alpha2 < self.alpha1:
            raise CoefficientError(f"ellipticity bounds need alpha1 <= alpha2 "
                                   f"(got {self.alpha1}, {self.alpha2})")

    def element_values(self, mesh: Mesh) -> np.ndarray:
        m = len(mesh.triangles)
        a = self.a
        if isinstance(a, dict):
            c = mesh.nodes[mesh.triangles].mean(axis=1)
            f = {k: Expression(a.get(k, 0.0))(c[:, 0], c[:, 1]) for k in ("a11", "a12", "a22")}
            vals = np.stack((np.stack((f["a11"], f["a12"]), -1), np.stack((f["a12"], f["a22"]), -1)), -2)
        else:
            arr = np.asarray(a, dtype=float)
            if arr.ndim == 0:
                vals = np.broadcast_to(arr * np.eye(2), (m, 2, 2)).copy()
            elif arr.shape == (2, 2):
                vals = np.broadcast_to(arr, (m, 2, 2)).copy()
            elif arr.shape == (m, 2, 2):
                vals = arr.copy()
            else:
                raise CoefficientError(f"coefficient array has shape {arr.shape}, expected (2,2) or ({m},2,2)")
        if not np.allclose(vals, np.swapaxes(vals, 1, 2), rtol=0, atol=0):
            raise CoefficientError("coefficient a(x) must be symmetric")
        lo, hi = _sym2_eigs(vals)
        if np.any(lo < self.alpha1) or np.any(hi > self.alpha2):
            k = int(np.flatnonzero((lo < self.alpha1) | (hi > self.alpha2))[0])
            raise CoefficientError(
                f"ellipticity bound alpha1|xi|^2 <= a xi.xi <= alpha2|xi|^2 violated on triangle {k} "
                f"(eigenvalues {lo[k]:.6g}, {hi[k]:.6g}; bounds {self.alpha1}, {self.alpha2})")
        return vals


@dataclass(frozen=True, eq=False)
class TensorCoefficientField:
    """Elasticity tensor as a symmetric 3x3 matrix in the ``(e11, e22, sqrt2 e12)`` basis."""

    C: object = field(default_factory=lambda: np.eye(3))
    alpha1: float = 1.0
    alpha2: float = 1.0

    def __post_init__(self):
        if not self.alpha1 > 0:
            raise CoefficientError(f"ellipticity bound alpha1 must be positive (got {self.alpha1})")
        if self.alpha2 < self.alpha1:
            raise CoefficientError(f"ellipticity bounds need alpha1 <= alpha2 "
                                   f"(got {self.alpha1}, {self.alpha2})")

    @classmethod
    def identity(cls) -> "TensorCoefficientField":
        return cls(np.eye(3), 1.0, 1.0)

    @classmethod
    def isotropic(cls, lam: float, mu: float) -> "TensorCoefficientField":
        c = np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, 2 * mu]])
        ev = np.linalg.eigvalsh(c)
        return cls(c, float(ev.min()), float(ev.max()))

    @classmethod
    def from_entries(cls, entries, alpha1, alpha2) -> "TensorCoefficientField":
        """Six upper-triangle entries ``c11 c12 c13 c22 c23 c33``."""
        c11, c12, c13, c22, c23, c33 = entries
        return cls(np.array([[c11, c12, c13], [c12, c22, c23], [c13, c23, c33]], dtype=float),
                   alpha1, alpha2)

    def element_values(self, mesh: Mesh) -> np.ndarray:
        m = len(mesh.triangles)
        arr = np.asarray(self.C, dtype=float)
        if arr.shape == (3, 3):
            vals = np.broadcast_to(arr, (m, 3, 3)).copy()
        elif arr.shape == (m, 3, 3):
            vals = arr.copy()
        else:
            raise CoefficientError(f"tensor array has shape {arr.shape}, expected (3,3) or ({m},3,3)")
        if not np.array_equal(vals, np.swapaxes(vals, 1, 2)):
            raise CoefficientError("tensor A(x) must be symmetric")
        ev = np.linalg.eigvalsh(vals)
        bad = (ev[:, 0] < self.alpha1 * (1 - 1e-14)) | (ev[:, -1] > self.alpha2 * (1 + 1e-14))
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise CoefficientError(
                f"ellipticity bound alpha1|M|^2 <= A M:M <= alpha2|M|^2 violated on triangle {k} "
                f"(eigenvalues {ev[k, 0]:.6g}..{ev[k, -1]:.6g}; bounds {self.alpha1}, {self.alpha2})")
        return vals


# ---------------------------------------------------------------------------
# boundary data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryDisplacement:
    """Scalar or 2-vector datum; formulas in ``(x, y)`` or nodal values.

    ``components`` holds one entry per field component: a formula string, a
    number, or a callable.  Alternatively ``nodal`` maps base-mesh node ids to
    values; those data are extended by zero into the interior.
    """

    components: tuple = ()
    nodal: dict | None = None
    base: np.ndarray | None = None

    @classmethod
    def scalar(cls, expr) -> "BoundaryDisplacement":
        return cls((expr,))

    @classmethod
    def vector(cls, ex, ey) -> "BoundaryDisplacement":
        return cls((ex, ey))

    @classmethod
    def from_nodal(cls, values: dict) -> "BoundaryDisplacement":
        return cls((), {int(k): np.atleast_1d(np.asarray(v, float)) for k, v in values.items()})

    @classmethod
    def from_base_values(cls, values) -> "BoundaryDisplacement":
        """Values at every base-mesh node, shape ``(N,)`` or ``(N, ncomp)``."""
        v = np.asarray(values, dtype=float)
        return cls((), None, v.reshape(len(v), -1))

    @property
    def ncomp(self) -> int:
        if self.base is not None:
            return self.base.shape[1]
        if self.nodal is not None:
            return len(next(iter(self.nodal.values()))) if self.nodal else 1
        return len(self.components)

    def at_points(self, pts: np.ndarray) -> np.ndarray:
        out = np.empty((len(pts), len(self.components)))
        for c, comp in enumerate(self.components):
            f = comp if callable(comp) else Expression(comp)
            out[:, c] = f(pts[:, 0], pts[:, 1])
        return out

    def base_values(self, mesh: Mesh) -> np.ndarray:
        """Nodal values on the base mesh, shape ``(N, ncomp)``."""
        if self.base is not None:
            if len(self.base) != len(mesh.nodes):
                raise ValueError(f"datum has {len(self.base)} nodal rows, mesh has {len(mesh.nodes)} nodes")
            vals = self.base
        elif self.nodal is not None:
            vals = np.zeros((len(mesh.nodes), self.ncomp))
            for k, v in self.nodal.items():
                vals[k] = v
            missing = set(mesh.dirichlet_nodes.tolist()) - set(self.nodal)
            if missing:
                raise ValueError(f"nodal boundary data missing for Dirichlet nodes {sorted(missing)[:5]}")
        else:
            vals = self.at_points(mesh.nodes)
        if not np.all(np.isfinite(vals[mesh.dirichlet_nodes])):
            raise ValueError("boundary displacement is not finite on the Dirichlet boundary")
        return vals

    def on(self, disc: "CrackedDiscretization") -> np.ndarray:
        """Lift to the cracked discretisation (copies inherit parent values), flattened."""
        return self.base_values(disc.mesh)[disc.parent].ravel()


# ---------------------------------------------------------------------------
# cracked discretisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CrackedDiscretization:
    mesh: Mesh
    crack: CrackSet
    nodes: np.ndarray
    triangles: np.ndarray
    parent: np.ndarray
    dirichlet_nodes: np.ndarray
    component: np.ndarray
    n_components: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_duplicated(self) -> int:
        return len(self.nodes) - len(self.mesh.nodes)


def _crack_node_pairs(mesh: Mesh, K: CrackSet) -> np.ndarray:
    if K.is_empty:
        return np.empty((0, 2), dtype=np.int64)
    if K.graph_backed and K.graph.node_pairs is not None:
        pairs = K.graph.node_pairs[sorted(K.edges)]
    else:
        # locate each segment as a crack-graph edge by coordinates
        lookup = {}
        for a, b in mesh.crack_graph_edges:
            pa, pb = mesh.nodes[a], mesh.nodes[b]
            lookup[(tuple(pa), tuple(pb))] = (a, b)
            lookup[(tuple(pb), tuple(pa))] = (a, b)
        pairs = []
        for x1, y1, x2, y2 in K.segments:
            try:
                pairs.append(lookup[((x1, y1), (x2, y2))])
            except KeyError:
                raise ValueError(f"segment ({x1}, {y1})-({x2}, {y2}) is not a crack-graph edge") from None
        pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    allowed = {(min(a, b), max(a, b)) for a, b in mesh.crack_graph_edges}
    for a, b in pairs:
        if (min(a, b), max(a, b)) not in allowed:
            raise ValueError(f"edge ({a}, {b}) is not a crack-graph edge of this mesh")
    return pairs


def cut_mesh(mesh: Mesh, K: CrackSet) -> CrackedDiscretization:
    """Duplicate node sheets along ``K`` so the two crack faces decouple."""
    pairs = _crack_node_pairs(mesh, K)
    tris = mesh.triangles.copy()
    nodes = [mesh.nodes]
    parent = [np.arange(len(mesh.nodes))]
    cracked = {(min(a, b), max(a, b)) for a, b in pairs}
    crack_vertices = np.unique(pairs) if len(pairs) else np.zeros(0, dtype=np.int64)
    next_id = len(mesh.nodes)
    for v in crack_vertices:
        fan = mesh.node_triangles[v]
        # triangles around v meeting across a non-crack edge (v, w) share a sector
        by_neighbor: dict[int, list[int]] = {}
        for t in fan:
            for w in mesh.triangles[t]:
                if w != v:
                    by_neighbor.setdefault(int(w), []).append(int(t))
        root = {int(t): int(t) for t in fan}

        def find(a):
            while root[a] != a:
                root[a] = root[root[a]]
                a = root[a]
            return a

        for w, ts in by_neighbor.items():
            if len(ts) == 2 and (min(v, w), max(v, w)) not in cracked:
                ra, rb = find(ts[0]), find(ts[1])
                if ra != rb:
                    root[max(ra, rb)] = min(ra, rb)
        sectors: dict[int, list[int]] = {}
        for t in sorted(int(t) for t in fan):
            sectors.setdefault(find(t), []).append(t)
        for k, (_, members) in enumerate(sorted(sectors.items())):
            if k == 0:
                continue
            for t in members:
                tris[t][mesh.triangles[t] == v] = next_id
            nodes.append(mesh.nodes[v][None, :])
            parent.append(np.array([v]))
            next_id += 1
    nodes = np.vstack(nodes)
    parent = np.concatenate(parent)
    on_crack = np.zeros(len(mesh.nodes), dtype=bool)
    on_crack[crack_vertices] = True
    is_dir = np.zeros(len(mesh.nodes), dtype=bool)
    is_dir[mesh.dirichlet_nodes] = True
    dirichlet = np.flatnonzero(is_dir[parent] & ~on_crack[parent])
    n = len(nodes)
    rows = tris[:, [0, 1, 2, 0, 1, 2]].ravel()
    cols = tris[:, [1, 2, 0, 0, 1, 2]].ravel()
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, comp = connected_components(adj, directed=False)
    return CrackedDiscretization(mesh, K, nodes, tris, parent, dirichlet, comp, int(ncomp))


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------


@dataclass
class SolveResult:
    """Minimiser on a cracked discretisation.

    ``u`` is the flattened dof vector (node-major; two entries per node for the
    plane problem).  ``floating`` flags, per dof component, whether the
    component carried no Dirichlet node and was pinned by regularisation.
    """

    disc: CrackedDiscretization
    u: np.ndarray
    ncomp: int
    bulk_energy: float
    floating: np.ndarray
    residual: float
    stiffness: sp.csr_matrix = field(repr=False)

    @property
    def nodal(self) -> np.ndarray:
        return self.u.reshape(-1, self.ncomp)

    def summary(self) -> dict:
        return {"n_nodes": int(self.disc.n_nodes), "n_duplicated": int(self.disc.n_duplicated),
                "n_components": int(self.disc.n_components), "bulk_energy": float(self.bulk_energy),
                "floating_components": [int(i) for i in np.flatnonzero(self.floating)],
                "residual": float(self.residual), "crack_length": h1_measure(self.disc.crack)}


@lru_cache(maxsize=64)
def _element_matrices(mesh: Mesh, coeff) -> np.ndarray:
    if isinstance(coeff, ScalarCoefficientField):
        return kernels.scalar_stiffness(mesh.nodes, mesh.triangles, coeff.element_values(mesh))
    return kernels.vector_stiffness(mesh.nodes, mesh.triangles, coeff.element_values(mesh))


def _ncomp(coeff) -> int:
    return 1 if isinstance(coeff, ScalarCoefficientField) else 2


def assemble(disc: CrackedDiscretization, coeff) -> sp.csr_matrix:
    """Global stiffness matrix on the cracked discretisation."""
    ke = _element_matrices(disc.mesh, coeff)
    c = _ncomp(coeff)
    if c == 1:
        dofs = disc.triangles
    else:
        dofs = np.empty((len(disc.triangles), 6), dtype=np.int64)
        dofs[:, 0::2] = 2 * disc.triangles
        dofs[:, 1::2] = 2 * disc.triangles + 1
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    n = c * disc.n_nodes
    return sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))


def _rigid_modes(pts: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Infinitesimal rotation about ``center`` at the given nodes, flattened."""
    r = np.zeros((len(pts), 2))
    r[:, 0] = -(pts[:, 1] - center[1])
    r[:, 1] = pts[:, 0] - center[0]
    return r.ravel()


def _solve(disc: CrackedDiscretization, coeff, g: BoundaryDisplacement,
           direct_limit: int = DIRECT_LIMIT) -> SolveResult:
    c = _ncomp(coeff)
    if g.ncomp != c:
        raise ValueError(f"boundary datum has {g.ncomp} components, problem needs {c}")
    K = assemble(disc, coeff)
    diag = K.diagonal()
    if np.any(diag <= 0):
        raise SolverError("assembled system is not SPD (nonpositive diagonal entry)")
    n = c * disc.n_nodes
    gvals = g.on(disc)
    u = np.zeros(n)
    fixed = np.zeros(n, dtype=bool)
    for j in range(c):
        fixed[c * disc.dirichlet_nodes + j] = True
    u[fixed] = gvals[fixed]

    has_dir = np.zeros(disc.n_components, dtype=bool)
    has_dir[np.unique(disc.component[disc.dirichlet_nodes])] = True
    floating = ~has_dir
    node_float = floating[disc.component]
    # floating components carry no load: their minimiser is the zero-mean /
    # rigid-motion-free representative, i.e. identically zero
    fixed |= np.repeat(node_float, c)
    free = np.flatnonzero(~fixed)

    constraints = []
    if c == 2:
        for comp in np.flatnonzero(has_dir):
            dn = disc.dirichlet_nodes[disc.component[disc.dirichlet_nodes] == comp]
            if len(np.unique(disc.nodes[dn], axis=0)) == 1:
                nodes_c = np.flatnonzero(disc.component == comp)
                r = np.zeros(n)
                r[np.repeat(c * nodes_c, 2) + np.tile([0, 1], len(nodes_c))] = \
                    _rigid_modes(disc.nodes[nodes_c], disc.nodes[dn[0]])
                constraints.append(r[free])

    if len(free):
        Kff = K[free][:, free].tocsc()
        rhs = -(K[free][:, np.flatnonzero(fixed)] @ u[fixed])
        if constraints:
            R = sp.csc_matrix(np.column_stack(constraints))
            aug = sp.bmat([[Kff, R], [R.T, None]], format="csc")
            sol = _linear_solve(aug, np.concatenate((rhs, np.zeros(R.shape[1]))), direct_limit, spd=False)
            uf = sol[: len(free)]
        else:
            uf = _linear_solve(Kff, rhs, direct_limit, spd=True)
        scale = max(np.linalg.norm(rhs), np.linalg.norm(Kff @ uf), 1e-300)
        residual = float(np.linalg.norm(Kff @ uf - rhs) / scale) if constraints == [] else \
            float(np.linalg.norm(_project_out(Kff @ uf - rhs, constraints)) / scale)
        if residual > SOLVER_RTOL and np.linalg.norm(rhs) > 0:
            raise SolverError(f"linear solve reached relative residual {residual:.3e} > {SOLVER_RTOL:.0e}")
        u[free] = uf
    else:
        residual = 0.0
    energy = float(u @ (K @ u))
    if energy < -1e-12 * max(1.0, float(np.abs(u).max()) ** 2 * diag.max()):
        raise SolverError("assembled system is not SPD (negative energy at the minimiser)")
    return SolveResult(disc, u, c, max(energy, 0.0), floating, residual, K)


def _project_out(v: np.ndarray, constraints: list[np.ndarray]) -> np.ndarray:
    for r in constraints:
        v = v - (v @ r) / (r @ r) * r
    return v


def _linear_solve(A, b, direct_limit: int, spd: bool) -> np.ndarray:
    if not np.any(b):
        return np.zeros_like(b)
    if A.shape[0] <= direct_limit:
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"sparse factorisation failed: {exc}") from None
        x = lu.solve(b)
        # one refinement step keeps the residual at round-off level
        x += lu.solve(b - A @ x)
        return x
    if not spd:
        x, info = spla.gmres(A, b, rtol=SOLVER_RTOL, atol=0.0, maxiter=5000)
    else:
        import pyamg  # noqa: PLC0415 - optional, only for very large systems
        ml = pyamg.smoothed_aggregation_solver(A.tocsr())
        x, info = spla.cg(A, b, rtol=SOLVER_RTOL, atol=0.0, M=ml.aspreconditioner(), maxiter=5000)
    if info != 0:
        raise SolverError(f"iterative solver did not converge (info={info})")
    return x


def solve_antiplanar(disc: CrackedDiscretization, a: ScalarCoefficientField,
                     g: BoundaryDisplacement, direct_limit: int = DIRECT_LIMIT) -> SolveResult:
    """Minimise ``int a grad v . grad v`` with ``v = g`` on the Dirichlet nodes off the crack."""
    if not isinstance(a, ScalarCoefficientField):
        raise TypeError("anti-plane problem needs a ScalarCoefficientField")
    return _solve(disc, a, g, direct_limit)


def solve_planar(disc: CrackedDiscretization, A: TensorCoefficientField,
                 g: BoundaryDisplacement, direct_limit: int = DIRECT_LIMIT) -> SolveResult:
    """Minimise ``int A Ev : Ev`` with ``v = g`` on the Dirichlet nodes off the crack."""
    if not isinstance(A, TensorCoefficientField):
        raise TypeError("plane problem needs a TensorCoefficientField")
    return _solve(disc, A, g, direct_limit)


def solve(disc, coeff, g, direct_limit: int = DIRECT_LIMIT) -> SolveResult:
    return _solve(disc, coeff, g, direct_limit)


def energy_inner_product(disc: CrackedDiscretization, coeff, u, w) -> float:
    """Energy bilinear form ``(u, w)_a`` (or ``<u, w>_A``) on the cracked discretisation."""
    uu = u.u if isinstance(u, SolveResult) else np.asarray(u, dtype=float).ravel()
    ww = w.on(disc) if isinstance(w, BoundaryDisplacement) else (
        w.u if isinstance(w, SolveResult) else np.asarray(w, dtype=float).ravel())
    n = _ncomp(coeff) * disc.n_nodes
    if uu.shape[0] != n or ww.shape[0] != n:
        raise ValueError(f"dof-length mismatch: expected {n}, got {uu.shape[0]} and {ww.shape[0]}")
    K = u.stiffness if isinstance(u, SolveResult) and u.disc is disc else assemble(disc, coeff)
    return float(uu @ (K @ ww))


# ---------------------------------------------------------------------------
# stability under crack convergence
# ---------------------------------------------------------------------------


@dataclass
class StabilityReport:
    energies: list[float]
    limit_energy: float
    gaps: list[float]
    relative_final_gap: float
    monotone: bool
    within_tolerance: bool

    def to_dict(self) -> dict:
        return {"energies": self.energies, "limit_energy": self.limit_energy, "gaps": self.gaps,
                "relative_final_gap": self.relative_final_gap, "monotone": self.monotone,
                "within_tolerance": self.within_tolerance}


def stability_experiment(mesh: Mesh, coeff, g: BoundaryDisplacement, K_sequence, K_limit: CrackSet,
                         rel_tol: float = 0.01) -> StabilityReport:
    """Bulk energies along a converging crack sequence versus the limit crack.

    ``monotone`` requires the gaps to be strictly decreasing unless they are all
    zero; ``within_tolerance`` compares the last gap with ``rel_tol`` times the
    limit energy.
    """
    energies = [solve(cut_mesh(mesh, K), coeff, g).bulk_energy for K in K_sequence]
    e_lim = solve(cut_mesh(mesh, K_limit), coeff, g).bulk_energy
    gaps = [abs(e - e_lim) for e in energies]
    if all(x == 0 for x in gaps):
        monotone = True
    else:
        monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
    rel = gaps[-1] / e_lim if e_lim > 0 else gaps[-1]
    return StabilityReport(energies, e_lim, gaps, rel, monotone, rel <= rel_tol)
