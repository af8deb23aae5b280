"""Anisotropic, inhomogeneous surface energy on crack sets.

The density ``phi(x, nu)`` is positively 1-homogeneous, even and convex in the
normal ``nu`` and pinched between ``c1 |nu|`` and ``c2 |nu|``.  Three families
are built in:

``euclidean``
    ``phi = |nu|``; the surface energy is the length.
``crystalline``
    ``phi = |p.nu| + |q.nu|`` for two fixed vectors ``p``, ``q``.
``weighted_norm``
    ``phi = sqrt(nu . M(x) nu)`` with ``M`` symmetric positive definite, given
    by three formulas ``m11, m12, m22`` or tabulated on a rectilinear grid and
    bilinearly interpolated (evaluation points are clamped to the grid box).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .crackgeom import (CrackSet, DomainBox, difference, h1_measure, hausdorff_distance,
                        segment_normal)
from .expr import Expression

_GAUSS_S = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])


class AnisotropyError(ValueError):
    """A surface density violates one of the structural hypotheses."""


@dataclass(frozen=True, eq=False)
class AnisotropyField:
    kind: str
    parameters: dict = field(default_factory=dict)
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.kind not in ("euclidean", "crystalline", "weighted_norm"):
            raise AnisotropyError(f"unknown anisotropy kind {self.kind!r}")
        if not (self.c1 > 0 and self.c2 >= self.c1):
            raise AnisotropyError(f"bounds must satisfy 0 < c1 <= c2 (got c1={self.c1}, c2={self.c2})")
        object.__setattr__(self, "_density", self._build())

    # -- constructors -------------------------------------------------------

    @classmethod
    def euclidean(cls) -> "AnisotropyField":
        return cls("euclidean", {}, 1.0, 1.0)

    @classmethod
    def crystalline(cls, p, q, c1: float | None = None, c2: float | None = None) -> "AnisotropyField":
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        lo, hi = crystalline_bounds(p, q)
        if lo <= 0:
            raise AnisotropyError("crystalline density degenerates: p and q are parallel or zero")
        return cls("crystalline", {"p": p.tolist(), "q": q.tolist()},
                   lo if c1 is None else c1, hi if c2 is None else c2)

    @classmethod
    def weighted_norm(cls, m11, m12, m22, c1: float | None = None, c2: float | None = None,
                      domain: DomainBox | None = None) -> "AnisotropyField":
        params = {"m11": m11, "m12": m12, "m22": m22}
        if c1 is None or c2 is None:
            probe = cls("weighted_norm", params, 1.0, 1.0)
            lo, hi = probe._estimate_bounds(domain or DomainBox.rectangle())
            c1 = lo if c1 is None else c1
            c2 = hi if c2 is None else c2
        return cls("weighted_norm", params, c1, c2)

    @classmethod
    def from_config(cls, cfg: dict) -> "AnisotropyField":
        kind = cfg.get("kind", "euclidean")
        par = cfg.get("parameters", {})
        c1, c2 = cfg.get("c1"), cfg.get("c2")
        if kind == "euclidean":
            return cls("euclidean", {}, 1.0 if c1 is None else c1, 1.0 if c2 is None else c2)
        if kind == "crystalline":
            return cls.crystalline(par["p"], par["q"], c1, c2)
        if kind == "weighted_norm":
            if "grid" in par:
                return cls.weighted_norm_grid(par["grid"], c1, c2)
            return cls.weighted_norm(par["m11"], par["m12"], par["m22"], c1, c2)
        raise AnisotropyError(f"unknown anisotropy kind {kind!r}")

    @classmethod
    def weighted_norm_grid(cls, grid: dict, c1=None, c2=None) -> "AnisotropyField":
        params = {"grid": grid}
        if c1 is None or c2 is None:
            m = np.stack([np.asarray(grid[k], float) for k in ("m11", "m12", "m22")], -1)
            mats = np.stack((m[..., [0, 1]], m[..., [1, 2]]), -2).reshape(-1, 2, 2)
            ev = np.linalg.eigvalsh(mats)
            if ev.min() <= 0:
                raise AnisotropyError("tabulated metric is not positive definite at every grid node")
            c1 = math.sqrt(ev.min()) if c1 is None else c1
            c2 = math.sqrt(ev.max()) if c2 is None else c2
        return cls("weighted_norm", params, c1, c2)

    def to_config(self) -> dict:
        return {"kind": self.kind, "parameters": self.parameters, "c1": self.c1, "c2": self.c2}

    # -- evaluation ---------------------------------------------------------

    def _build(self) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        if self.kind == "euclidean":
            return lambda x, n: np.hypot(n[:, 0], n[:, 1])
        if self.kind == "crystalline":
            p = np.asarray(self.parameters["p"], dtype=float)
            q = np.asarray(self.parameters["q"], dtype=float)
            return lambda x, n: np.abs(n @ p) + np.abs(n @ q)
        metric = self._metric()

        def dens(x, n):
            m11, m12, m22 = metric(x)
            with np.errstate(invalid="ignore"):  # indefinite metrics yield nan, caught by validate()
                return np.sqrt(m11 * n[:, 0] ** 2 + 2.0 * m12 * n[:, 0] * n[:, 1]
                               + m22 * n[:, 1] ** 2)
        return dens

    def _metric(self):
        par = self.parameters
        if "grid" in par:
            g = par["grid"]
            gx = np.asarray(g["x"], dtype=float)
            gy = np.asarray(g["y"], dtype=float)
            interps = [RegularGridInterpolator((gx, gy), np.asarray(g[k], dtype=float), method="linear")
                       for k in ("m11", "m12", "m22")]

            def metric(x):
                xc = np.column_stack((np.clip(x[:, 0], gx[0], gx[-1]), np.clip(x[:, 1], gy[0], gy[-1])))
                return tuple(f(xc) for f in interps)
            return metric
        exprs = [Expression(par[k]) for k in ("m11", "m12", "m22")]
        return lambda x: tuple(e(x[:, 0], x[:, 1]) for e in exprs)

    def density(self, x: np.ndarray, nu: np.ndarray) -> np.ndarray:
        """Vectorised ``phi`` for ``(n, 2)`` points and ``(n, 2)`` normals."""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        nu = np.asarray(nu, dtype=float).reshape(-1, 2)
        r = np.hypot(nu[:, 0], nu[:, 1])
        return self._density(x, nu / r[:, None]) * r

    def _estimate_bounds(self, domain: DomainBox, n: int = 64) -> tuple[float, float]:
        lo, hi = domain.vertices.min(0), domain.vertices.max(0)
        gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n))
        x = np.column_stack((gx.ravel(), gy.ravel()))
        m11, m12, m22 = self._metric()(x)
        mats = np.stack((np.stack((m11, m12), -1), np.stack((m12, m22), -1)), -2)
        ev = np.linalg.eigvalsh(mats)
        if ev.min() <= 0:
            raise AnisotropyError("metric field is not positive definite on the domain")
        return math.sqrt(ev.min()), math.sqrt(ev.max())

    def validate(self, domain: DomainBox, rng: np.random.Generator | None = None,
                 n_samples: int = 1000) -> None:
        """Sample the structural hypotheses; raise :class:`AnisotropyError` on violation."""
        rng = np.random.default_rng(0) if rng is None else rng
        lo, hi = domain.vertices.min(0), domain.vertices.max(0)
        x = lo + (hi - lo) * rng.random((n_samples, 2))
        ang = rng.uniform(0, 2 * np.pi, (3, n_samples))
        rad = rng.uniform(0.1, 10.0, (3, n_samples))
        nus = [np.column_stack((r * np.cos(a), r * np.sin(a))) for r, a in zip(rad, ang)]
        nu, nu2, nu3 = nus
        f = self.density(x, nu)
        norm = np.hypot(nu[:, 0], nu[:, 1])
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise AnisotropyError("density must be finite and nonnegative")
        s = rng.uniform(0.1, 10.0, n_samples)
        if not np.allclose(self.density(x, nu * s[:, None]), s * f, rtol=1e-12, atol=0):
            raise AnisotropyError("density is not positively 1-homogeneous in the normal")
        if not np.allclose(self.density(x, -nu), f, rtol=1e-12, atol=0):
            raise AnisotropyError("density is not even in the normal")
        mid = self.density(x, 0.5 * (nu2 + nu3))
        if np.any(mid > 0.5 * (self.density(x, nu2) + self.density(x, nu3)) + 1e-10):
            raise AnisotropyError("density fails midpoint convexity in the normal")
        tol = 1e-12 * norm
        if np.any(f < self.c1 * norm - tol):
            raise AnisotropyError(f"lower bound c1={self.c1} violated")
        if np.any(f > self.c2 * norm + tol):
            raise AnisotropyError(f"upper bound c2={self.c2} violated")


def crystalline_bounds(p: np.ndarray, q: np.ndarray) -> tuple[float, float]:
    """Exact min and max of ``|p.nu| + |q.nu|`` over unit ``nu``.

    The density is the maximum of the four linear forms ``(s1 p + s2 q).nu``, so
    its maximum on the circle is ``max |s1 p + s2 q|``; its minimum sits at a kink,
    i.e. at a direction perpendicular to ``p`` or to ``q``.
    """
    hi = max(float(np.hypot(*(p + q))), float(np.hypot(*(p - q))))
    cands = []
    for v in (p, q):
        r = float(np.hypot(*v))
        if r > 0:
            w = np.array([-v[1], v[0]]) / r
            cands.append(abs(w @ p) + abs(w @ q))
    lo = min(cands) if cands else 0.0
    return lo, hi


def evaluate_phi(phi: AnisotropyField, x, nu) -> float:
    nu = np.asarray(nu, dtype=float)
    if not np.any(nu):
        raise AnisotropyError("phi is evaluated at a zero normal vector")
    return float(phi.density(np.asarray(x, dtype=float)[None, :], nu[None, :])[0])


def surface_energy(K: CrackSet, phi: AnisotropyField, flip_normals: bool = False) -> float:
    """``sum_segments length * mean_gauss phi(x, normal)`` (two Gauss points)."""
    segs = K.segments
    if len(segs) == 0:
        return 0.0
    d = segs[:, 2:] - segs[:, :2]
    length = np.hypot(d[:, 0], d[:, 1])
    normals = np.array([tuple(segment_normal(dx, dy, flip_normals)) for dx, dy in d])
    total = np.zeros(len(segs))
    for s, w in zip(_GAUSS_S, _GAUSS_W):
        xq = segs[:, :2] + s * d
        total += w * phi.density(xq, normals)
    return float(np.dot(length, total))


def edge_surface_energies(segments: np.ndarray, phi: AnisotropyField) -> np.ndarray:
    """Per-segment surface energy, used to price candidate cracks quickly."""
    return np.array([surface_energy(CrackSet(s[None, :], _validate=False), phi) for s in segments])


def surface_energy_outside(K: CrackSet, H: CrackSet, phi: AnisotropyField) -> float:
    """Surface energy of the edge-set difference ``K \\ H``."""
    return surface_energy(difference(K, H), phi)


# ---------------------------------------------------------------------------
# lower-semicontinuity laboratory
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConvergentFamily:
    name: str
    limit: CrackSet
    member: Callable[[int], CrackSet]
    domain: DomainBox = field(default_factory=DomainBox.rectangle)


def staircase(n: int) -> CrackSet:
    """``n``-step axis-aligned staircase from (0,0) to (1,1)."""
    k = np.arange(n + 1) / n
    pts = [(0.0, 0.0)]
    for i in range(n):
        pts.append((k[i + 1], k[i]))
        pts.append((k[i + 1], k[i + 1]))
    return CrackSet.from_polyline(pts)


def zigzag(n: int) -> CrackSet:
    """``n`` teeth of slope +-1 over the unit interval (length sqrt 2)."""
    h = 1.0 / n
    pts = []
    for i in range(n):
        pts.append((i * h, 0.0))
        pts.append(((i + 0.5) * h, 0.5 * h))
    pts.append((1.0, 0.0))
    return CrackSet.from_polyline(pts)


def comb(n: int) -> CrackSet:
    """Unit base segment carrying ``n`` vertical teeth of height ``1/n``."""
    xs = (np.arange(n) + 0.5) / n
    base = CrackSet.from_polyline([(0.0, 0.0)] + [(x, 0.0) for x in xs] + [(1.0, 0.0)]).segments
    teeth = np.column_stack((xs, np.zeros(n), xs, np.full(n, 1.0 / n)))
    return CrackSet(np.vstack((base, teeth)))


def parallel_pair(n: int) -> CrackSet:
    """Two unit segments at distance ``1/n`` (two components merging in the limit)."""
    y = 0.5 / n
    return CrackSet(np.array([[0.0, 0.5 - y, 1.0, 0.5 - y], [0.0, 0.5 + y, 1.0, 0.5 + y]]))


def family(name: str, base: CrackSet | None = None) -> ConvergentFamily:
    """Built-in convergent families, all living in the unit square."""
    if name == "constant":
        K = base if base is not None else CrackSet.from_polyline([(0.0, 0.0), (1.0, 1.0)])
        return ConvergentFamily("constant", K, lambda n: K)
    if name == "staircase":
        return ConvergentFamily(name, CrackSet.from_polyline([(0.0, 0.0), (1.0, 1.0)]), staircase)
    if name == "zigzag":
        return ConvergentFamily(name, CrackSet.from_polyline([(0.0, 0.0), (1.0, 0.0)]), zigzag)
    if name == "comb":
        return ConvergentFamily(name, CrackSet.from_polyline([(0.0, 0.0), (1.0, 0.0)]), comb)
    if name == "parallel_pair":
        return ConvergentFamily(name, CrackSet.from_polyline([(0.0, 0.5), (1.0, 0.5)]), parallel_pair)
    raise KeyError(f"unknown family {name!r}")


FAMILIES = ("constant", "staircase", "zigzag", "comb", "parallel_pair")


@dataclass
class LscReport:
    family: str
    n: list[int]
    distances: list[float]
    energies: list[float]
    tail_infimum: list[float]
    tail_start: int
    limit_energy: float
    distances_nonincreasing: bool

    @property
    def tail_inf(self) -> float:
        return self.tail_infimum[self.n.index(self.tail_start)]

    @property
    def gap(self) -> float:
        return self.tail_inf - self.limit_energy

    @property
    def holds(self) -> bool:
        return self.limit_energy <= self.tail_inf + 1e-9

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "d_H", "F"])
        for n, d, f in zip(self.n, self.distances, self.energies):
            w.writerow([n, f"{d:.17g}", f"{f:.17g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"family": self.family, "n_max": max(self.n), "tail_start": self.tail_start,
                "limit_energy": self.limit_energy, "tail_inf": self.tail_inf, "gap": self.gap,
                "lsc_holds": self.holds, "distances_nonincreasing": self.distances_nonincreasing,
                "final_distance": self.distances[-1]}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)


def lsc_experiment(fam: ConvergentFamily, phi: AnisotropyField, n_max: int = 64,
                   tail_start: int | None = None) -> LscReport:
    """Compare ``F(limit)`` with the infimum of ``F`` over the tail of the family.

    The tail starts at ``n_max // 2`` unless given.
    """
    ns = list(range(1, n_max + 1))
    members = [fam.member(n) for n in ns]
    dist = [hausdorff_distance(K, fam.limit, fam.domain) for K in members]
    energy = [surface_energy(K, phi) for K in members]
    tail = list(np.minimum.accumulate(energy[::-1])[::-1])
    start = tail_start if tail_start is not None else max(1, n_max // 2)
    nonincr = all(b <= a + 1e-9 for a, b in zip(dist, dist[1:]))
    return LscReport(fam.name, ns, dist, energy, [float(t) for t in tail], start,
                     surface_energy(fam.limit, phi), nonincr)


def golab_check(fam: ConvergentFamily, n_max: int = 64) -> bool:
    """Length of the limit never exceeds the tail minimum of member lengths."""
    lengths = [h1_measure(fam.member(n)) for n in range(max(1, n_max // 2), n_max + 1)]
    return h1_measure(fam.limit) <= min(lengths) + 1e-9
