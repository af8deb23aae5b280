"""Scenario files: mesh, coefficients, surface density, load path, initial crack.

A scenario is a JSON object::

    {
      "name": "strip_tearing",
      "problem": "antiplanar",                  # or "planar"
      "mesh": {"generator": "rectangle", "nx": 12, "ny": 8, "box": [0, 0, 3, 1],
               "dirichlet_sides": ["top", "bottom"],
               "crack_segments": [[0, 0.5, 3, 0.5]]},   # or {"file": ...} / inline mesh
      "coefficient": {"a": 1.0, "alpha1": 1.0, "alpha2": 1.0},
      "phi": {"kind": "euclidean"},
      "load": {"times": [0, 1], "values": ["0", "0.5*(2*y-1)"]},
      "K0": [0, 1], "m": 1,
      "delta": 0.0625, "deltas": [0.25, 0.125, 0.0625, 0.03125],
      "strategy": "exhaustive"
    }

Vector load values are two-element lists of formulas.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .anisotropy import AnisotropyError, AnisotropyField, edge_surface_energies
from .crackgeom import CrackGraph, CrackSet, connected_components
from .elastic2d import (BoundaryDisplacement, CoefficientError, ScalarCoefficientField,
                        TensorCoefficientField, cut_mesh, solve)
from .expr import Expression, ExpressionError
from .mesh import Mesh, MeshError, structured_rectangle


class ScenarioError(ValueError):
    """Scenario failed validation; the message names the offending field."""


@dataclass(frozen=True, eq=False)
class LoadPath:
    """Piecewise-linear-in-time boundary displacement.

    ``values[j]`` is the datum at ``times[j]`` as a tuple of formulas (one per
    component).  Between knots the data are interpolated linearly.
    """

    times: tuple
    values: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(t) < 1 or t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ScenarioError("load.times must increase strictly from 0 to 1")
        if len(self.values) != len(t):
            raise ScenarioError("load.values needs one entry per knot")
        widths = {len(v) for v in self.values}
        if len(widths) != 1:
            raise ScenarioError("load.values entries have inconsistent component counts")

    @property
    def ncomp(self) -> int:
        return len(self.values[0])

    def knot_values(self, mesh: Mesh) -> np.ndarray:
        """``(n_knots, N, ncomp)`` nodal values of the knot data."""
        out = np.empty((len(self.times), len(mesh.nodes), self.ncomp))
        for j, comps in enumerate(self.values):
            for c, e in enumerate(comps):
                out[j, :, c] = Expression(e)(mesh.nodes[:, 0], mesh.nodes[:, 1])
        if not np.all(np.isfinite(out)):
            raise ScenarioError("load.values evaluate to non-finite numbers on the mesh")
        return out

    def weights(self, t: float) -> np.ndarray:
        ts = np.asarray(self.times, dtype=float)
        w = np.zeros(len(ts))
        if len(ts) == 1:
            w[0] = 1.0
            return w
        t = min(max(t, 0.0), 1.0)
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        s = (t - ts[k]) / (ts[k + 1] - ts[k])
        w[k] = 1.0 - s
        w[k + 1] = s
        return w


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    problem: str
    mesh: Mesh
    coefficient: object
    phi: AnisotropyField
    load: LoadPath
    graph: CrackGraph
    K0: CrackSet
    m: int
    delta: float = 0.0625
    deltas: tuple = (0.25, 0.125, 0.0625, 0.03125)
    strategy: str = "exhaustive"
    config: dict = field(default_factory=dict, repr=False)

    # -- derived data ---------------------------------------------------------

    @cached_property
    def _knots(self) -> np.ndarray:
        return self.load.knot_values(self.mesh)

    def g_values(self, t: float) -> np.ndarray:
        return np.tensordot(self.load.weights(t), self._knots, axes=1)

    def g(self, t: float) -> BoundaryDisplacement:
        return BoundaryDisplacement.from_base_values(self.g_values(t))

    def g_increment(self, t0: float, t1: float) -> BoundaryDisplacement:
        return BoundaryDisplacement.from_base_values(self.g_values(t1) - self.g_values(t0))

    @property
    def domain(self):
        return self.mesh.domain or _bbox(self.mesh)

    @property
    def starts_unloaded(self) -> bool:
        return not np.any(self.g_values(0.0))

    @cached_property
    def edge_surface(self) -> np.ndarray:
        return edge_surface_energies(self.graph.segments, self.phi)

    def crack(self, edges) -> CrackSet:
        return self.graph.crack(edges)

    def surface(self, K: CrackSet) -> float:
        return float(sum(self.edge_surface[e] for e in sorted(K.edges)))

    def bulk(self, K: CrackSet, g: BoundaryDisplacement):
        res = solve(cut_mesh(self.mesh, K), self.coefficient, g)
        return res.bulk_energy, res

    def feasible(self, edges) -> bool:
        return self.graph.count_components(edges) <= self.m

    # -- io ---------------------------------------------------------------------

    @classmethod
    def from_dict(cls, cfg: dict, base_dir: Path | None = None, refine: int = 1) -> "Scenario":
        return _build(cfg, base_dir, refine)

    @classmethod
    def from_file(cls, path, refine: int = 1) -> "Scenario":
        path = Path(path)
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
        return _build(cfg, path.parent, refine)

    def with_load_scale(self, factor: float) -> "Scenario":
        cfg = json.loads(json.dumps(self.config))
        cfg["load"]["values"] = [[f"({factor!r})*({e})" for e in _as_list(v)]
                                 for v in cfg["load"]["values"]]
        return _build(cfg, None, 1, mesh=self.mesh)


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _field(path: str, exc: Exception) -> ScenarioError:
    return ScenarioError(f"{path}: {exc}")


def _build(cfg: dict, base_dir: Path | None, refine: int, mesh: Mesh | None = None) -> Scenario:
    problem = cfg.get("problem", "antiplanar")
    if problem not in ("antiplanar", "planar"):
        raise ScenarioError(f"problem: must be 'antiplanar' or 'planar', got {problem!r}")
    if mesh is None:
        mesh = _build_mesh(cfg.get("mesh", {}), base_dir, refine)
    try:
        coeff = _build_coefficient(cfg.get("coefficient", {}), problem)
        coeff.element_values(mesh)
    except CoefficientError as exc:
        raise _field("coefficient", exc) from None
    try:
        phi = AnisotropyField.from_config(cfg.get("phi", {"kind": "euclidean"}))
        phi.validate(mesh.domain or _bbox(mesh), np.random.default_rng(cfg.get("seed", 0)))
    except (AnisotropyError, KeyError, ExpressionError) as exc:
        raise _field("phi", exc) from None
    ld = cfg.get("load")
    if ld is None:
        raise ScenarioError("load: missing")
    try:
        load = LoadPath(tuple(ld["times"]), tuple(tuple(str(e) for e in _as_list(v)) for v in ld["values"]))
    except KeyError as exc:
        raise ScenarioError(f"load: missing key {exc}") from None
    want = 1 if problem == "antiplanar" else 2
    if load.ncomp != want:
        raise ScenarioError(f"load.values: {problem} problem needs {want} component(s) per knot")
    try:
        load.knot_values(mesh)
    except ExpressionError as exc:
        raise _field("load.values", exc) from None
    m = int(cfg.get("m", 1))
    if m < 1:
        raise ScenarioError("m: must be >= 1")
    graph = mesh.crack_graph(m)
    k0 = [int(e) for e in cfg.get("K0", [])]
    if any(e < 0 or e >= len(graph) for e in k0):
        raise ScenarioError(f"K0: edge ids must lie in [0, {len(graph)})")
    K0 = graph.crack(k0)
    if connected_components(K0) > m:
        raise ScenarioError(f"K0: has {connected_components(K0)} components, more than m={m}")
    deltas = tuple(float(d) for d in cfg.get("deltas", (0.25, 0.125, 0.0625, 0.03125)))
    delta = float(cfg.get("delta", deltas[-1] if deltas else 0.0625))
    for d in deltas + (delta,):
        if not 0 < d <= 1:
            raise ScenarioError(f"delta: {d} outside (0, 1]")
    strategy = cfg.get("strategy", "exhaustive")
    if strategy not in ("exhaustive", "greedy"):
        raise ScenarioError(f"strategy: unknown {strategy!r}")
    return Scenario(cfg.get("name", "scenario"), problem, mesh, coeff, phi, load, graph, K0, m,
                    delta, deltas, strategy, cfg)


def _bbox(mesh: Mesh):
    from .crackgeom import DomainBox
    lo, hi = mesh.nodes.min(0), mesh.nodes.max(0)
    return DomainBox.rectangle(lo[0], lo[1], hi[0], hi[1])


def _build_mesh(mc: dict, base_dir: Path | None, refine: int) -> Mesh:
    try:
        if "file" in mc:
            p = Path(mc["file"])
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            mesh = Mesh.from_json(p.read_text())
            if refine != 1:
                raise ScenarioError("mesh: refinement override only applies to generated meshes")
            return mesh
        if "nodes" in mc:
            return Mesh.from_dict(mc)
        if mc.get("generator", "rectangle") != "rectangle":
            raise ScenarioError(f"mesh.generator: unknown {mc.get('generator')!r}")
        box = mc.get("box", [0, 0, 1, 1])
        return structured_rectangle(int(mc.get("nx", 8)) * refine, int(mc.get("ny", 8)) * refine, *box,
                                    dirichlet_sides=tuple(mc.get("dirichlet_sides", ("left", "right", "bottom", "top"))),
                                    crack_segments=mc.get("crack_segments"),
                                    allow_boundary_cracks=bool(mc.get("allow_boundary_cracks", False)))
    except (MeshError, OSError) as exc:
        raise _field("mesh", exc) from None


def _build_coefficient(cc: dict, problem: str):
    if problem == "antiplanar":
        return ScalarCoefficientField(cc.get("a", 1.0), cc.get("alpha1", 1.0), cc.get("alpha2", 1.0))
    if "isotropic" in cc:
        iso = cc["isotropic"]
        t = TensorCoefficientField.isotropic(iso["lam"], iso["mu"])
        return TensorCoefficientField(t.C, cc.get("alpha1", t.alpha1), cc.get("alpha2", t.alpha2))
    if "C" in cc:
        return TensorCoefficientField.from_entries(cc["C"], cc.get("alpha1", 1.0), cc.get("alpha2", 1.0))
    return TensorCoefficientField(np.eye(3), cc.get("alpha1", 1.0), cc.get("alpha2", 1.0))


def shipped(name: str) -> Path:
    """Path of a scenario bundled with the package."""
    return Path(str(resources.files("fractura") / "scenarios" / f"{name}.json"))


def load_shipped(name: str, refine: int = 1) -> Scenario:
    return Scenario.from_file(shipped(name), refine)
