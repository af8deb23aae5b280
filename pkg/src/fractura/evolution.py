"""Time-discrete quasi-static crack growth and its verification.

At every time knot ``t_i = i * delta`` the crack is updated to a global
minimiser of ``bulk(g(t_i), K) + F(K)`` among graph cracks ``K`` that contain
the previous crack and have at most ``m`` connected components.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .crackgeom import CrackGraph, CrackSet, h1_measure, hausdorff_distance, is_subset
from .elastic2d import BoundaryDisplacement, SolveResult, energy_inner_product
from .scenario import Scenario

log = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 20
# energies closer than this (relative) count as a tie
TIE_RTOL = 1e-10


class EvolutionError(RuntimeError):
    def __init__(self, msg: str, step: int | None = None):
        super().__init__(msg if step is None else f"step {step}: {msg}")
        self.step = step


def n_steps(delta: float) -> int:
    """Largest ``N`` with ``N * delta <= 1``."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    n = int(math.floor(1.0 / delta))
    while (n + 1) * delta <= 1.0 + 1e-12:
        n += 1
    while n * delta > 1.0 + 1e-12:
        n -= 1
    return n


def _tie(a: float, b: float) -> float:
    return TIE_RTOL * max(1.0, abs(a), abs(b))


@dataclass
class StepOutcome:
    crack: CrackSet
    result: SolveResult
    bulk: float
    surface: float
    candidates: int
    solves: int

    @property
    def total(self) -> float:
        return self.bulk + self.surface


class _Evaluator:
    """Energies of candidate cracks at a fixed datum, with memoisation."""

    def __init__(self, scenario: Scenario, g: BoundaryDisplacement, threads: int = 1):
        self.sc = scenario
        self.g = g
        self.threads = threads
        self.cache: dict[frozenset, tuple[float, SolveResult]] = {}
        # sets the search consulted; speculative prefetches are not counted so
        # the reported statistics do not depend on the thread count
        self.used: set[frozenset] = set()

    def bulk(self, edges: frozenset) -> float:
        self.used.add(edges)
        if edges not in self.cache:
            self.cache[edges] = self.sc.bulk(self.sc.crack(edges), self.g)
        return self.cache[edges][0]

    def prefetch(self, edge_sets) -> None:
        todo = [e for e in edge_sets if e not in self.cache]
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                for e, r in zip(todo, pool.map(lambda s: self.sc.bulk(self.sc.crack(s), self.g), todo)):
                    self.cache[e] = r

    def surface(self, edges) -> float:
        return self.sc.surface(self.sc.crack(edges))

    def outcome(self, edges: frozenset, candidates: int) -> StepOutcome:
        b = self.bulk(edges)
        return StepOutcome(self.sc.crack(edges), self.cache[edges][1], b, self.surface(edges),
                           candidates, len(self.used))


def _exhaustive(ev: _Evaluator, prev: frozenset) -> StepOutcome:
    sc = ev.sc
    free = sorted(set(range(len(sc.graph))) - prev)
    if len(free) > EXHAUSTIVE_LIMIT:
        raise EvolutionError(f"exhaustive search allows at most {EXHAUSTIVE_LIMIT} free edges, "
                             f"{len(free)} remain")
    base_surface = ev.surface(prev)
    # bulk energy only decreases as the crack grows, so the fully cracked
    # graph bounds every candidate's bulk energy from below
    bulk_floor = ev.bulk(prev | frozenset(free))
    cands = []
    for r in range(len(free) + 1):
        for extra in itertools.combinations(free, r):
            edges = prev | frozenset(extra)
            if sc.feasible(edges):
                surf = base_surface + float(sum(sc.edge_surface[e] for e in extra))
                cands.append((edges, surf))
    best_edges, best_total = prev, ev.bulk(prev) + base_surface
    if ev.threads > 1:
        ev.prefetch([e for e, s in cands if s + bulk_floor <= best_total + _tie(best_total, 0)])
    for edges, surf in cands:
        if surf + bulk_floor > best_total + _tie(best_total, surf):
            continue
        tot = ev.bulk(edges) + ev.surface(edges)
        if tot < best_total - _tie(tot, best_total):
            best_edges, best_total = edges, tot
    return ev.outcome(best_edges, len(cands))


def _greedy(ev: _Evaluator, prev: frozenset) -> StepOutcome:
    sc = ev.sc
    cur = prev
    cur_total = ev.bulk(cur) + ev.surface(cur)
    tried = 0
    while True:
        options = [cur | {e} for e in range(len(sc.graph)) if e not in cur and sc.feasible(cur | {e})]
        tried += len(options)
        ev.prefetch(options)
        best, best_total = None, cur_total
        for edges in options:
            tot = ev.bulk(edges) + ev.surface(edges)
            if tot < best_total - _tie(tot, best_total):
                best, best_total = edges, tot
        if best is None:
            return ev.outcome(cur, tried)
        cur, cur_total = best, best_total


def incremental_step(K_prev: CrackSet, g: BoundaryDisplacement, scenario: Scenario,
                     strategy: str = "exhaustive", threads: int = 1) -> StepOutcome:
    """Minimise ``bulk(g, K) + F(K)`` over admissible graph cracks ``K`` containing ``K_prev``.

    Ties are broken towards fewer edges, then towards the lexicographically
    smallest sorted edge tuple.
    """
    if not K_prev.graph_backed or K_prev.graph is not scenario.graph:
        raise EvolutionError("previous crack must be drawn from the scenario's crack graph")
    ev = _Evaluator(scenario, g, threads)
    prev = frozenset(K_prev.edges)
    if strategy == "exhaustive":
        return _exhaustive(ev, prev)
    if strategy == "greedy":
        return _greedy(ev, prev)
    raise ValueError(f"unknown strategy {strategy!r}")


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


@dataclass
class TraceStep:
    step: int
    t: float
    edges: list[int]
    bulk: float
    surface: float
    total: float
    work: float
    h1: float
    n_components: int
    candidates: int = 0
    solves: int = 0


@dataclass
class EvolutionTrace:
    scenario: Scenario | None
    delta: float
    strategy: str
    steps: list[TraceStep] = field(default_factory=list)

    def crack(self, i: int) -> CrackSet:
        return self.scenario.crack(self.steps[i].edges)

    def index_at(self, t: float) -> int:
        """Step whose interval ``[t_i, t_{i+1})`` contains ``t``."""
        return min(int(math.floor(t / self.delta + 1e-9)), len(self.steps) - 1)

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.total for s in self.steps])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "t", "n_edges", "h1", "bulk", "surface", "total", "work_increment"])
        for s in self.steps:
            w.writerow([s.step, f"{s.t:.17g}", len(s.edges), f"{s.h1:.17g}", f"{s.bulk:.17g}",
                        f"{s.surface:.17g}", f"{s.total:.17g}", f"{s.work:.17g}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"scenario": self.scenario.name if self.scenario else None, "delta": self.delta,
                "strategy": self.strategy, "steps": [asdict(s) for s in self.steps]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict, scenario: Scenario | None = None) -> "EvolutionTrace":
        steps = [TraceStep(**{k: v for k, v in s.items() if k in TraceStep.__dataclass_fields__})
                 for s in d["steps"]]
        return cls(scenario, float(d["delta"]), d.get("strategy", "exhaustive"), steps)


def run_evolution(scenario: Scenario, delta: float | None = None, strategy: str | None = None,
                  threads: int = 1) -> EvolutionTrace:
    """Incremental minimisation at ``t_i = i * delta``, ``i = 0..N``, starting from ``K0``."""
    delta = scenario.delta if delta is None else float(delta)
    strategy = strategy or scenario.strategy
    N = n_steps(delta)
    trace = EvolutionTrace(scenario, delta, strategy)
    K = scenario.K0
    for i in range(N + 1):
        t = i * delta
        g = scenario.g(t)
        try:
            out = incremental_step(K, g, scenario, strategy, threads)
        except EvolutionError as exc:
            raise EvolutionError(str(exc), step=i) from None
        except Exception as exc:
            raise EvolutionError(f"{type(exc).__name__}: {exc}", step=i) from exc
        K = out.crack
        work = 0.0
        if i < N:
            dg = scenario.g_increment(t, (i + 1) * delta)
            work = 2.0 * energy_inner_product(out.result.disc, scenario.coefficient, out.result, dg)
        trace.steps.append(TraceStep(i, t, sorted(K.edges), out.bulk, out.surface,
                                     out.bulk + out.surface, work, h1_measure(K),
                                     scenario.graph.count_components(K.edges), out.candidates, out.solves))
        log.debug("step %d t=%.4f |K|=%d total=%.6g", i, t, len(K.edges), out.total)
    return trace


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


@dataclass
class VerificationReport:
    checks: dict = field(default_factory=dict)
    rho: float = 0.0
    rho_pair: tuple = (0, 0)
    balance_defect: float = 0.0
    balance_constant: float = 0.0
    minimality_violations: list = field(default_factory=list)
    monotonicity_violations: list = field(default_factory=list)
    feasibility_violations: list = field(default_factory=list)
    forward_violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rho_pair"] = list(self.rho_pair)
        d["ok"] = self.ok
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def _superset_candidates(sc: Scenario, edges: frozenset, limit: int, rng: np.random.Generator,
                         n_random: int = 256):
    free = sorted(set(range(len(sc.graph))) - edges)
    if len(free) <= limit:
        for r in range(1, len(free) + 1):
            for extra in itertools.combinations(free, r):
                cand = edges | frozenset(extra)
                if sc.feasible(cand):
                    yield cand
        return
    for e in free:
        cand = edges | {e}
        if sc.feasible(cand):
            yield cand
    for _ in range(n_random):
        mask = rng.random(len(free)) < rng.random()
        cand = edges | frozenset(np.asarray(free)[mask].tolist())
        if sc.feasible(cand):
            yield cand


def verify_trace(trace: EvolutionTrace, sample_steps=None, candidate_limit: int = 12,
                 seed: int = 0) -> VerificationReport:
    """Check irreversibility, feasibility, step minimality and the energy inequality.

    Energies are recomputed from the scenario; the stored trace values are only
    cross-checked.  Failures are recorded in the report, never raised.
    """
    sc = trace.scenario
    if sc is None:
        raise ValueError("trace has no scenario attached")
    rng = np.random.default_rng(seed)
    rep = VerificationReport()
    steps = trace.steps
    N = len(steps) - 1
    edge_sets = [frozenset(s.edges) for s in steps]

    # (i) irreversibility, K0 included
    prev = frozenset(sc.K0.edges)
    for i, e in enumerate(edge_sets):
        if not prev <= e:
            rep.monotonicity_violations.append(i)
        prev = e
    rep.checks["monotone"] = not rep.monotonicity_violations
    for i, e in enumerate(edge_sets):
        if sc.graph.count_components(e) > sc.m:
            rep.feasibility_violations.append(i)
    rep.checks["feasible"] = not rep.feasibility_violations

    # recompute energies and work increments
    bulk, surf, work, results = [], [], [], []
    for i, s in enumerate(steps):
        b, res = sc.bulk(sc.crack(edge_sets[i]), sc.g(s.t))
        bulk.append(b)
        surf.append(sc.surface(sc.crack(edge_sets[i])))
        results.append(res)
        if i < N:
            dg = sc.g_increment(s.t, steps[i + 1].t)
            work.append(2.0 * energy_inner_product(res.disc, sc.coefficient, res, dg))
    total = np.array(bulk) + np.array(surf)
    rep.checks["stored_energies_consistent"] = bool(all(
        abs(s.total - total[i]) <= 1e-9 * max(1.0, abs(total[i])) for i, s in enumerate(steps)))
    rep.checks["decomposition"] = bool(all(
        abs(s.total - (s.bulk + s.surface)) <= 1e-12 * max(1.0, abs(s.total)) for s in steps))

    # admissible datum bound: bulk_i <= (g_i, g_i)_a
    bound_ok = True
    for i, s in enumerate(steps):
        gi = sc.g(s.t)
        gg = energy_inner_product(results[i].disc, sc.coefficient, gi.on(results[i].disc), gi)
        if bulk[i] > gg + 1e-12 * max(1.0, gg):
            bound_ok = False
    rep.checks["bulk_bounded_by_datum"] = bound_ok

    if sc.starts_unloaded and steps:
        rep.checks["initial_energy"] = bool(edge_sets[0] == frozenset(sc.K0.edges)
                                            and abs(total[0] - sc.surface(sc.K0)) <= 1e-12)

    # (ii) step minimality against supersets
    idx = range(len(steps)) if sample_steps is None else sample_steps
    for i in idx:
        g = sc.g(steps[i].t)
        for cand in _superset_candidates(sc, edge_sets[i], candidate_limit, rng):
            b, _ = sc.bulk(sc.crack(cand), g)
            tot = b + sc.surface(sc.crack(cand))
            if tot < total[i] - _tie(tot, total[i]):
                rep.minimality_violations.append({"step": i, "edges": sorted(cand),
                                                  "energy": tot, "trace_energy": float(total[i])})
                break
    rep.checks["step_minimality"] = not rep.minimality_violations

    # (iv) forward minimality E(g_i, K_{i+1}) >= E(g_i, K_i)
    for i in range(N):
        g = sc.g(steps[i].t)
        b, _ = sc.bulk(sc.crack(edge_sets[i + 1]), g)
        tot = b + surf[i + 1]
        if tot < total[i] - _tie(tot, total[i]):
            rep.forward_violations.append(i)
    rep.checks["forward_minimality"] = not rep.forward_violations

    # (iii) discrete energy inequality E_j <= E_i + sum work + rho
    d = np.array([total[k + 1] - total[k] - work[k] for k in range(N)])
    c = np.concatenate(([0.0], np.cumsum(d)))
    worst, pair = 0.0, (0, 0)
    for i in range(N + 1):
        j = i + int(np.argmax(c[i:]))
        if c[j] - c[i] > worst:
            worst, pair = float(c[j] - c[i]), (i, j)
    rep.rho, rep.rho_pair = worst, pair
    rep.balance_defect = float(c[-1]) if N else 0.0
    rep.balance_constant = abs(rep.balance_defect) / trace.delta
    return rep


# ---------------------------------------------------------------------------
# delta convergence
# ---------------------------------------------------------------------------


@dataclass
class DeltaStudy:
    deltas: list[float]
    times: list[float]
    hausdorff_gap: list[list[float]]
    bulk_gap: list[list[float]]
    surface_gap: list[list[float]]
    traces: list[EvolutionTrace] = field(repr=False, default_factory=list)

    def _nonincreasing(self, table, tol=1e-12) -> bool:
        for col in range(len(self.times)):
            seq = [row[col] for row in table]
            if any(b > a + tol * max(1.0, abs(a)) for a, b in zip(seq, seq[1:])):
                return False
        return True

    @property
    def monotone(self) -> dict:
        return {"hausdorff": self._nonincreasing(self.hausdorff_gap),
                "bulk": self._nonincreasing(self.bulk_gap),
                "surface": self._nonincreasing(self.surface_gap)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "t", "d_H_gap", "bulk_gap", "surface_gap"])
        for k, dl in enumerate(self.deltas):
            for j, t in enumerate(self.times):
                w.writerow([f"{dl:.17g}", f"{t:.17g}", f"{self.hausdorff_gap[k][j]:.17g}",
                            f"{self.bulk_gap[k][j]:.17g}", f"{self.surface_gap[k][j]:.17g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"deltas": self.deltas, "times": self.times, "monotone": self.monotone}


def delta_convergence_study(scenario: Scenario, deltas=None, strategy: str | None = None,
                            times=None, threads: int = 1) -> DeltaStudy:
    """Gaps of each run against the finest-delta run at common sample times.

    Sample times default to the knots of the finest delta; coarser runs are read
    through their piecewise-constant interpolation ``K(t) = K_i`` on
    ``[t_i, t_{i+1})``.
    """
    deltas = list(scenario.deltas if deltas is None else deltas)
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    if not scenario.starts_unloaded:
        raise ValueError("delta convergence study needs a load path with g(0) = 0")
    traces = [run_evolution(scenario, d, strategy, threads) for d in deltas]
    if times is None:
        times = [k * deltas[-1] for k in range(n_steps(deltas[-1]) + 1)]
    ref = traces[-1]
    bulk_cache: dict = {}

    def bulk_at(edges, t):
        # every run is charged with the exact datum g(t) of the sample time
        key = (frozenset(edges), t)
        if key not in bulk_cache:
            bulk_cache[key] = scenario.bulk(scenario.crack(edges), scenario.g(t))[0]
        return bulk_cache[key]

    domain = scenario.domain
    dh, bg, sg = [], [], []
    for tr in traces:
        row_d, row_b, row_s = [], [], []
        for t in times:
            a, b = tr.steps[tr.index_at(t)], ref.steps[ref.index_at(t)]
            Ka, Kb = tr.crack(a.step), ref.crack(b.step)
            row_d.append(hausdorff_distance(Ka, Kb, domain))
            row_b.append(abs(bulk_at(a.edges, t) - bulk_at(b.edges, t)))
            row_s.append(abs(a.surface - b.surface))
        dh.append(row_d)
        bg.append(row_b)
        sg.append(row_s)
    return DeltaStudy(deltas, list(times), dh, bg, sg, traces)
