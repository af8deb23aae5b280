"""Triangle meshes with tagged boundary and an admissible crack-edge set."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .crackgeom import CrackGraph, DomainBox

SIDES = ("bottom", "right", "top", "left")


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 triangulation.

    ``boundary_edges`` maps ``"dirichlet"`` / ``"neumann"`` to ``(k, 2)`` node
    pairs; every boundary edge carries exactly one tag.  ``crack_graph_edges``
    lists the mesh edges (node pairs) that cracks may use.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: dict = field(default_factory=dict)
    crack_graph_edges: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))
    allow_boundary_cracks: bool = False
    domain: DomainBox | None = None

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=np.float64).reshape(-1, 2)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(tris) == 0:
            raise MeshError("mesh has no triangles")
        if tris.min() < 0 or tris.max() >= len(nodes):
            raise MeshError("triangle references a missing node")
        p = nodes[tris]
        det = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
               - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        if np.any(det == 0):
            raise MeshError("degenerate triangle")
        tris[det < 0] = tris[det < 0][:, [0, 2, 1]]
        bnd = {k: np.array(v, dtype=np.int64).reshape(-1, 2) for k, v in self.boundary_edges.items()}
        for k in bnd:
            if k not in ("dirichlet", "neumann"):
                raise MeshError(f"unknown boundary tag {k!r}")
        cg = np.array(self.crack_graph_edges, dtype=np.int64).reshape(-1, 2)
        for a in (nodes, tris, cg, *bnd.values()):
            a.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_edges", bnd)
        object.__setattr__(self, "crack_graph_edges", cg)
        self._check_conformity()

    # -- topology -------------------------------------------------------------

    @cached_property
    def edge_table(self) -> tuple[np.ndarray, dict, np.ndarray]:
        """``(edges, index, counts)``: unique sorted edges, lookup dict, triangle counts."""
        t = self.triangles
        all_e = np.sort(np.vstack((t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]])), axis=1)
        edges, counts = np.unique(all_e, axis=0, return_counts=True)
        index = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
        return edges, index, counts

    @cached_property
    def node_triangles(self) -> list[np.ndarray]:
        order = np.argsort(self.triangles.ravel(), kind="stable")
        owners = order // 3
        bounds = np.searchsorted(self.triangles.ravel()[order], np.arange(len(self.nodes) + 1))
        return [owners[bounds[i]:bounds[i + 1]] for i in range(len(self.nodes))]

    def edge_id(self, a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        try:
            return self.edge_table[1][key]
        except KeyError:
            raise MeshError(f"({a}, {b}) is not a mesh edge") from None

    def _check_conformity(self) -> None:
        edges, index, counts = self.edge_table
        if np.any(counts > 2):
            raise MeshError("non-manifold mesh: an edge is shared by more than two triangles")
        boundary = {tuple(e) for e in edges[counts == 1]}
        tagged = {}
        for tag, arr in self.boundary_edges.items():
            for a, b in arr:
                key = (min(a, b), max(a, b))
                if key not in boundary:
                    raise MeshError(f"{tag} edge ({a}, {b}) is not a boundary edge")
                if key in tagged:
                    raise MeshError(f"boundary edge ({a}, {b}) tagged twice")
                tagged[key] = tag
        if self.boundary_edges and len(tagged) != len(boundary):
            raise MeshError("some boundary edges carry no dirichlet/neumann tag")
        for a, b in self.crack_graph_edges:
            key = (min(a, b), max(a, b))
            if key not in index:
                raise MeshError(f"crack-graph edge ({a}, {b}) is not a mesh edge")
            if key in boundary and not self.allow_boundary_cracks:
                raise MeshError(f"crack-graph edge ({a}, {b}) lies on the boundary "
                                "(set allow_boundary_cracks to permit it)")

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        edges, _, counts = self.edge_table
        return np.unique(edges[counts == 1])

    @cached_property
    def dirichlet_nodes(self) -> np.ndarray:
        d = self.boundary_edges.get("dirichlet")
        if d is None or len(d) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.unique(d)

    def crack_graph(self, m: int = 1) -> CrackGraph:
        cg = self.crack_graph_edges
        segs = np.hstack((self.nodes[cg[:, 0]], self.nodes[cg[:, 1]]))
        return CrackGraph(segs, m=m, node_pairs=cg)

    @property
    def area(self) -> float:
        p = self.nodes[self.triangles]
        det = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
               - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        return float(0.5 * det.sum())

    # -- io ---------------------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_edges": {k: v.tolist() for k, v in sorted(self.boundary_edges.items())},
            "crack_graph_edges": self.crack_graph_edges.tolist(),
            "allow_boundary_cracks": self.allow_boundary_cracks,
        }, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Mesh":
        return cls(np.asarray(d["nodes"], float), np.asarray(d["triangles"], np.int64),
                   d.get("boundary_edges", {}),
                   np.asarray(d.get("crack_graph_edges", []), np.int64).reshape(-1, 2),
                   bool(d.get("allow_boundary_cracks", False)))

    @classmethod
    def from_json(cls, text: str) -> "Mesh":
        return cls.from_dict(json.loads(text))

    def with_crack_graph(self, edges, allow_boundary_cracks: bool | None = None) -> "Mesh":
        return Mesh(self.nodes, self.triangles, self.boundary_edges,
                    np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                    self.allow_boundary_cracks if allow_boundary_cracks is None else allow_boundary_cracks,
                    self.domain)

    def edges_on_segments(self, segments, tol: float = 1e-10) -> np.ndarray:
        """Mesh edges whose both endpoints lie on one of the given segments."""
        segs = np.asarray(segments, dtype=float).reshape(-1, 4)
        edges = self.edge_table[0]
        out = []
        for e in edges:
            pa, pb = self.nodes[e[0]], self.nodes[e[1]]
            for s in segs:
                if _on_segment(pa, s, tol) and _on_segment(pb, s, tol):
                    out.append(e)
                    break
        return np.array(out, dtype=np.int64).reshape(-1, 2)


def _on_segment(p, s, tol):
    a, b = s[:2], s[2:]
    d = b - a
    t = np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0)
    return np.hypot(*(p - (a + t * d))) <= tol


def structured_rectangle(nx: int, ny: int, x0: float = 0.0, y0: float = 0.0, x1: float = 1.0,
                         y1: float = 1.0, dirichlet_sides=SIDES, crack_segments=None,
                         allow_boundary_cracks: bool = False) -> Mesh:
    """``nx`` by ``ny`` cells, each cut along its rising diagonal.

    ``crack_segments`` (rows ``[x1, y1, x2, y2]``) select crack-graph edges:
    every mesh edge lying on one of these segments becomes admissible.
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be positive")
    for s in dirichlet_sides:
        if s not in SIDES:
            raise MeshError(f"unknown side {s!r}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack((gx.ravel(), gy.ravel()))

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    side_edges = {
        "bottom": [(nid(i, 0), nid(i + 1, 0)) for i in range(nx)],
        "right": [(nid(nx, j), nid(nx, j + 1)) for j in range(ny)],
        "top": [(nid(i, ny), nid(i + 1, ny)) for i in range(nx)],
        "left": [(nid(0, j), nid(0, j + 1)) for j in range(ny)],
    }
    bnd = {"dirichlet": [], "neumann": []}
    for s in SIDES:
        bnd["dirichlet" if s in dirichlet_sides else "neumann"].extend(side_edges[s])
    domain = DomainBox.rectangle(x0, y0, x1, y1)
    mesh = Mesh(nodes, np.array(tris), bnd, domain=domain, allow_boundary_cracks=allow_boundary_cracks)
    if crack_segments is not None:
        mesh = mesh.with_crack_graph(mesh.edges_on_segments(crack_segments))
    return mesh
