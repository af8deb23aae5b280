"""Crack sets as finite unions of straight segments.

A :class:`CrackSet` stores its segments as an ``(n, 4)`` array of
``[x1, y1, x2, y2]`` rows plus an optional array of isolated points (degenerate
compact sets, needed for the Hausdorff metric).  Sets drawn from a
:class:`CrackGraph` additionally remember which graph edges they consist of,
which makes containment and set difference exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import cKDTree

from . import kernels

VERTEX_TOL = 1e-12
HAUSDORFF_TOL = 1e-9


class CrackGeometryError(ValueError):
    """Invalid crack geometry or an operation outside its domain."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


def dedup_points(pts: np.ndarray, tol: float = VERTEX_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Merge points closer than ``tol``.

    Returns ``(unique, inverse)`` with ``pts[i] ~ unique[inverse[i]]``; the
    representative of each cluster is its first member.
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return pts.copy(), np.zeros(0, dtype=np.int64)
    pairs = cKDTree(pts).query_pairs(r=tol, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = _cc(g, directed=False)
    # relabel in order of first appearance so results are deterministic
    first = {}
    inverse = np.empty(n, dtype=np.int64)
    for i, lab in enumerate(labels):
        inverse[i] = first.setdefault(lab, len(first))
    reps = np.empty((len(first), 2))
    seen = np.zeros(len(first), dtype=bool)
    for i in range(n):
        k = inverse[i]
        if not seen[k]:
            reps[k] = pts[i]
            seen[k] = True
    return reps, inverse


def _check_no_overlap(segs: np.ndarray, block: int = 256) -> None:
    n = len(segs)
    if n < 2:
        return
    a, b = segs[:, :2], segs[:, 2:]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    u = d / length[:, None]
    for r0 in range(0, n - 1, block):
        i = np.arange(r0, min(r0 + block, n - 1))[:, None]          # rows of this block
        ui = u[i[:, 0]][:, None, :]
        rel_a = a[None, :, :] - a[i[:, 0]][:, None, :]
        rel_b = b[None, :, :] - a[i[:, 0]][:, None, :]
        cross = np.abs(ui[..., 0] * u[None, :, 1] - ui[..., 1] * u[None, :, 0])
        off_a = np.abs(ui[..., 0] * rel_a[..., 1] - ui[..., 1] * rel_a[..., 0])
        off_b = np.abs(ui[..., 0] * rel_b[..., 1] - ui[..., 1] * rel_b[..., 0])
        later = np.arange(n)[None, :] > i
        collinear = later & (cross <= 1e-12) & (off_a <= VERTEX_TOL) & (off_b <= VERTEX_TOL)
        if not collinear.any():
            continue
        pa = (rel_a * ui).sum(-1)
        pb = (rel_b * ui).sum(-1)
        lo = np.maximum(np.minimum(pa, pb), 0.0)
        hi = np.minimum(np.maximum(pa, pb), length[i])
        bad = collinear & (hi - lo > VERTEX_TOL)
        if bad.any():
            r, j = np.argwhere(bad)[0]
            raise CrackGeometryError(f"segments {r0 + r} and {j} overlap along a sub-segment")


@dataclass(frozen=True)
class UnitNormal:
    nx: float
    ny: float

    def __iter__(self):
        yield self.nx
        yield self.ny


@dataclass(frozen=True, eq=False)
class DomainBox:
    """Polygonal domain, vertices listed counterclockwise."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(v) < 3:
            raise CrackGeometryError("domain polygon needs at least 3 vertices")
        x, y = v[:, 0], v[:, 1]
        area2 = float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
        if area2 <= 0:
            raise CrackGeometryError("domain polygon must be counterclockwise with positive area")
        n = len(v)
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise CrackGeometryError("domain polygon is not simple")
        object.__setattr__(self, "vertices", _readonly(v))

    @classmethod
    def rectangle(cls, x0: float = 0.0, y0: float = 0.0, x1: float = 1.0, y1: float = 1.0) -> "DomainBox":
        return cls(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float))

    @cached_property
    def diameter(self) -> float:
        v = self.vertices
        diff = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Closed-polygon membership (boundary counts as inside)."""
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        segs = np.hstack((v, w))
        inside = np.zeros(len(pts), dtype=bool)
        for k, (px, py) in enumerate(pts):
            if kernels.numpy_distances_to_parts(px, py, segs, np.empty((0, 2))).min() <= tol:
                inside[k] = True
                continue
            crosses = (v[:, 1] > py) != (w[:, 1] > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = v[:, 0] + (py - v[:, 1]) * (w[:, 0] - v[:, 0]) / (w[:, 1] - v[:, 1])
            inside[k] = bool(np.count_nonzero(crosses & (px < xint)) % 2)
        return inside


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return bool(o1 * o2 < 0 and o3 * o4 < 0)


@dataclass(frozen=True, eq=False)
class CrackGraph:
    """Finite edge set from which admissible cracks are drawn.

    ``node_pairs`` (optional) maps each edge to mesh node indices; ``m`` is the
    maximum number of connected components an admissible crack may have.
    """

    segments: np.ndarray
    m: int = 1
    node_pairs: np.ndarray | None = None

    def __post_init__(self):
        segs = np.asarray(self.segments, dtype=np.float64).reshape(-1, 4)
        if self.m < 1:
            raise CrackGeometryError("m must be >= 1")
        if np.any(np.hypot(segs[:, 2] - segs[:, 0], segs[:, 3] - segs[:, 1]) <= VERTEX_TOL):
            raise CrackGeometryError("crack graph contains a zero-length edge")
        _check_no_overlap(segs)
        object.__setattr__(self, "segments", _readonly(segs))
        if self.node_pairs is not None:
            np_ = np.array(self.node_pairs, dtype=np.int64).reshape(-1, 2)
            np_.flags.writeable = False
            object.__setattr__(self, "node_pairs", np_)

    def __len__(self) -> int:
        return len(self.segments)

    @cached_property
    def endpoint_ids(self) -> np.ndarray:
        """``(E, 2)`` deduplicated vertex ids of each edge's endpoints."""
        _, inv = dedup_points(self.segments.reshape(-1, 2))
        return inv.reshape(-1, 2)

    @cached_property
    def lengths(self) -> np.ndarray:
        s = self.segments
        return np.hypot(s[:, 2] - s[:, 0], s[:, 3] - s[:, 1])

    def count_components(self, edge_ids: Iterable[int]) -> int:
        """Connected components of the union of the given edges."""
        parent: dict[int, int] = {}

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        n = 0
        ids = self.endpoint_ids
        for e in edge_ids:
            u, v = int(ids[e, 0]), int(ids[e, 1])
            for w in (u, v):
                if w not in parent:
                    parent[w] = w
                    n += 1
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
                n -= 1
        return n

    def crack(self, edge_ids: Iterable[int] = ()) -> "CrackSet":
        ids = frozenset(int(e) for e in edge_ids)
        if ids and (min(ids) < 0 or max(ids) >= len(self)):
            raise CrackGeometryError("edge id outside the crack graph")
        order = sorted(ids)
        return CrackSet(self.segments[order] if order else np.empty((0, 4)),
                        edges=ids, graph=self, _validate=False)


@dataclass(frozen=True, eq=False)
class CrackSet:
    """Compact set made of segments (and possibly isolated points)."""

    segments: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    edges: frozenset | None = None
    graph: CrackGraph | None = None
    _validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        segs = np.asarray(self.segments, dtype=np.float64).reshape(-1, 4)
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if not (np.all(np.isfinite(segs)) and np.all(np.isfinite(pts))):
            raise CrackGeometryError("non-finite coordinates")
        if self._validate:
            if np.any(np.hypot(segs[:, 2] - segs[:, 0], segs[:, 3] - segs[:, 1]) <= VERTEX_TOL):
                raise CrackGeometryError("segment with coincident endpoints")
            _check_no_overlap(segs)
        object.__setattr__(self, "segments", _readonly(segs))
        object.__setattr__(self, "points", _readonly(pts))

    @classmethod
    def from_polyline(cls, pts: Sequence[Sequence[float]]) -> "CrackSet":
        p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        return cls(np.hstack((p[:-1], p[1:])))

    @classmethod
    def point(cls, x: float, y: float) -> "CrackSet":
        return cls(points=np.array([[x, y]], dtype=float))

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def is_empty(self) -> bool:
        return len(self.segments) == 0 and len(self.points) == 0

    @property
    def graph_backed(self) -> bool:
        return self.graph is not None and self.edges is not None

    @cached_property
    def _vertex_table(self) -> tuple[np.ndarray, np.ndarray]:
        allpts = np.vstack((self.segments.reshape(-1, 2), self.points))
        return dedup_points(allpts)

    @property
    def vertices(self) -> np.ndarray:
        return self._vertex_table[0]

    @cached_property
    def _labels(self) -> tuple[int, np.ndarray, np.ndarray]:
        verts, inv = self._vertex_table
        nv = len(verts)
        ns = len(self.segments)
        if nv == 0:
            return 0, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        seg_ends = inv[: 2 * ns].reshape(-1, 2)
        g = coo_matrix((np.ones(ns), (seg_ends[:, 0], seg_ends[:, 1])), shape=(nv, nv))
        ncomp, vlab = _cc(g, directed=False)
        return ncomp, vlab[seg_ends[:, 0]], vlab[inv[2 * ns:]]

    @property
    def component_labels(self) -> np.ndarray:
        """Per-segment component label."""
        return self._labels[1]

    def to_json(self) -> str:
        d: dict = {"segments": self.segments.tolist()}
        if len(self.points):
            d["points"] = self.points.tolist()
        if self.edges is not None:
            d["edges"] = sorted(self.edges)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, graph: CrackGraph | None = None) -> "CrackSet":
        d = json.loads(text)
        if graph is not None and "edges" in d:
            return graph.crack(d["edges"])
        return cls(np.asarray(d.get("segments", []), dtype=float).reshape(-1, 4),
                   np.asarray(d.get("points", []), dtype=float).reshape(-1, 2))


def h1_measure(K: CrackSet) -> float:
    """Total length of ``K``."""
    s = K.segments
    return float(np.hypot(s[:, 2] - s[:, 0], s[:, 3] - s[:, 1]).sum())


def connected_components(K: CrackSet) -> int:
    return int(K._labels[0])


def hausdorff_distance(K1: CrackSet, K2: CrackSet, domain: DomainBox | None = None,
                       tol: float = HAUSDORFF_TOL) -> float:
    """Hausdorff distance with the empty-set conventions ``d(∅,∅)=0``, ``d(∅,K)=diam``."""
    e1, e2 = K1.is_empty, K2.is_empty
    if e1 and e2:
        return 0.0
    if e1 or e2:
        if domain is None:
            raise CrackGeometryError("domain diameter needed for a distance to the empty set")
        return domain.diameter
    if (K1.graph_backed and K2.graph_backed and K1.graph is K2.graph
            and K1.edges == K2.edges):
        return 0.0
    d12 = kernels.directed_hausdorff(K1.segments, K1.points, K2.segments, K2.points, tol)
    d21 = kernels.directed_hausdorff(K2.segments, K2.points, K1.segments, K1.points, tol)
    return max(d12, d21)


def approximate_normal(K: CrackSet, segment_index: int, t: float) -> UnitNormal:
    """Unit normal of a segment at an interior parameter ``t``.

    The tangent is rotated by +90 degrees and the sign flipped so the first
    nonzero coordinate is positive.
    """
    if not 0.0 < t < 1.0:
        raise CrackGeometryError("normal undefined at vertex (t must lie in (0, 1))")
    x1, y1, x2, y2 = K.segments[segment_index]
    return segment_normal(x2 - x1, y2 - y1)


def segment_normal(dx: float, dy: float, flip: bool = False) -> UnitNormal:
    dx, dy = float(dx), float(dy)
    r = math.hypot(dx, dy)
    nx, ny = -dy / r, dx / r
    if nx < 0 or (nx == 0 and ny < 0):
        nx, ny = -nx, -ny
    if flip:
        nx, ny = -nx, -ny
    # avoid -0.0 so outputs compare and serialise identically
    return UnitNormal(nx + 0.0, ny + 0.0)


def is_subset(K1: CrackSet, K2: CrackSet) -> bool:
    """Edge-identity containment for sets drawn from one crack graph."""
    if K1.is_empty:
        return True
    if not (K1.graph_backed and K2.graph_backed):
        raise CrackGeometryError("containment is only decidable for graph-backed crack sets")
    if K1.graph is not K2.graph:
        raise CrackGeometryError("crack sets come from different graphs")
    return K1.edges <= K2.edges


def difference(K: CrackSet, H: CrackSet) -> CrackSet:
    """Edge-identity difference ``K \\ H`` of graph-backed sets."""
    if H.is_empty:
        return K
    if not (K.graph_backed and H.graph_backed) or K.graph is not H.graph:
        raise CrackGeometryError("set difference needs graph-backed sets on a common graph")
    return K.graph.crack(K.edges - H.edges)


def union(K1: CrackSet, K2: CrackSet) -> CrackSet:
    if K1.graph_backed and K2.graph_backed and K1.graph is K2.graph:
        return K1.graph.crack(K1.edges | K2.edges)
    return CrackSet(np.vstack((K1.segments, K2.segments)), np.vstack((K1.points, K2.points)))


_PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


def to_svg(K: CrackSet, domain: DomainBox | None = None, size: int = 400,
           timestamp: str | None = None) -> str:
    """SVG snapshot, one stroke colour per connected component."""
    if domain is not None:
        box = domain.vertices
    elif not K.is_empty:
        box = K.vertices
    else:
        box = np.array([[0.0, 0.0], [1.0, 1.0]])
    lo, hi = box.min(0), box.max(0)
    span = float(max(hi - lo)) or 1.0
    scale = size / span

    def tx(x, y):
        return (x - lo[0]) * scale, (hi[1] - y) * scale

    w = (hi[0] - lo[0]) * scale
    h = (hi[1] - lo[1]) * scale
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.2f}" height="{h:.2f}" '
           f'viewBox="0 0 {w:.2f} {h:.2f}">']
    if timestamp is not None:
        out.append(f"<!-- generated {timestamp} -->")
    if domain is not None:
        pts = " ".join("{:.4f},{:.4f}".format(*tx(x, y)) for x, y in domain.vertices)
        out.append(f'<polygon points="{pts}" fill="none" stroke="#000000" stroke-width="1"/>')
    labels = K.component_labels
    for (x1, y1, x2, y2), lab in zip(K.segments, labels):
        a, b = tx(x1, y1), tx(x2, y2)
        col = _PALETTE[int(lab) % len(_PALETTE)]
        out.append(f'<line x1="{a[0]:.4f}" y1="{a[1]:.4f}" x2="{b[0]:.4f}" y2="{b[1]:.4f}" '
                   f'stroke="{col}" stroke-width="2"/>')
    for (x, y) in K.points:
        a = tx(x, y)
        out.append(f'<circle cx="{a[0]:.4f}" cy="{a[1]:.4f}" r="2" fill="#000000"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
