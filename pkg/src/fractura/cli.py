"""Command-line front end: ``fractura {solve,evolve,verify,lsc,study}``.

Exit status: 0 success, 2 scenario validation failure, 3 solver failure,
4 verification failure under ``--strict``.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import platform
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend
from .anisotropy import FAMILIES, AnisotropyError, AnisotropyField, family, lsc_experiment
from .crackgeom import to_svg
from .elastic2d import CoefficientError, SolverError, cut_mesh, solve
from .evolution import (EvolutionError, EvolutionTrace, delta_convergence_study, run_evolution,
                        verify_trace)
from .expr import ExpressionError
from .mesh import MeshError
from .scenario import Scenario, ScenarioError

log = logging.getLogger("fractura")

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4


def _deltas(text: str) -> list[float]:
    try:
        return [float(Fraction(p.strip())) for p in text.split(",") if p.strip()]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"cannot parse delta list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fractura", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", type=Path, help="scenario JSON file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--delta", type=_deltas, help="comma-separated time steps, e.g. 1/8,1/16")
    common.add_argument("--strategy", choices=("exhaustive", "greedy"))
    common.add_argument("--strict", action="store_true", help="exit 4 when a verification check fails")
    common.add_argument("--reproducible", action="store_true",
                        help="omit timings and timestamps so outputs are byte-identical")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--refine", type=int, default=1, help="mesh refinement factor for generated meshes")
    sub.add_parser("solve", parents=[common], help="bulk solve for the initial crack").add_argument(
        "--time", type=float, default=1.0)
    sub.add_parser("evolve", parents=[common], help="run the incremental evolution")
    v = sub.add_parser("verify", parents=[common], help="verify a trace (or a fresh run)")
    v.add_argument("--trace", type=Path, help="trace JSON written by 'evolve'")
    lsc = sub.add_parser("lsc", parents=[common], help="lower-semicontinuity experiments")
    lsc.add_argument("--family", choices=FAMILIES, action="append")
    lsc.add_argument("--n-max", type=int, default=64)
    sub.add_parser("study", parents=[common], help="delta-convergence study")
    return p


def _write(path: Path, text: str, outputs: list, root: Path | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    outputs.append(path.name if root is None else str(path.relative_to(root)))


def _dtag(d: float) -> str:
    f = Fraction(d).limit_denominator(1 << 20)
    return f"{f.numerator}_{f.denominator}"


def _versions() -> dict:
    import numba
    import scipy
    return {"fractura": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "kernel_backend": backend()}


def _load(args) -> Scenario:
    if args.scenario is None:
        raise ScenarioError("--scenario: required for this command")
    return Scenario.from_file(args.scenario, refine=args.refine)


def _cmd_solve(args, out, outputs, info) -> int:
    sc = _load(args)
    res = solve(cut_mesh(sc.mesh, sc.K0), sc.coefficient, sc.g(args.time))
    summ = res.summary()
    summ.update({"time": args.time, "surface_energy": sc.surface(sc.K0), "seed": args.seed})
    _write(out / "solve.json", json.dumps(summ, sort_keys=True, indent=1) + "\n", outputs)
    rows = ["node,x,y," + ",".join(f"u{c}" for c in range(res.ncomp))]
    for k, (xy, val) in enumerate(zip(res.disc.nodes, res.nodal)):
        rows.append(",".join([str(k), f"{xy[0]:.17g}", f"{xy[1]:.17g}", *(f"{v:.17g}" for v in val)]))
    _write(out / "dofs.csv", "\n".join(rows) + "\n", outputs)
    return EXIT_OK


def _trace_outputs(tr: EvolutionTrace, out: Path, outputs, stamp) -> None:
    tag = _dtag(tr.delta)
    _write(out / f"trace_{tag}.csv", tr.to_csv(), outputs)
    _write(out / f"trace_{tag}.json", tr.to_json() + "\n", outputs)
    snap = out / f"snapshots_{tag}"
    for s in tr.steps:
        svg = to_svg(tr.crack(s.step), tr.scenario.domain, timestamp=stamp)
        _write(snap / f"step_{s.step:04d}.svg", svg, outputs, out)


def _cmd_evolve(args, out, outputs, info) -> int:
    sc = _load(args)
    stamp = None if args.reproducible else _dt.datetime.now(_dt.timezone.utc).isoformat()
    for d in args.delta or [sc.delta]:
        tr = run_evolution(sc, d, args.strategy, args.threads)
        _trace_outputs(tr, out, outputs, stamp)
    return EXIT_OK


def _cmd_verify(args, out, outputs, info) -> int:
    sc = _load(args)
    if args.trace is not None:
        try:
            d = json.loads(args.trace.read_text())
            traces = [EvolutionTrace.from_dict(d, sc)]
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ScenarioError(f"--trace: cannot read trace ({exc})") from None
        for s in traces[0].steps:
            if any(e < 0 or e >= len(sc.graph) for e in s.edges):
                raise ScenarioError(f"--trace: step {s.step} references an edge outside the crack graph")
    else:
        traces = [run_evolution(sc, d, args.strategy, args.threads) for d in args.delta or [sc.delta]]
    ok = True
    for tr in traces:
        rep = verify_trace(tr, seed=args.seed)
        doc = rep.to_dict()
        doc.update({"delta": tr.delta, "seed": args.seed, "scenario": sc.name})
        _write(out / f"verification_{_dtag(tr.delta)}.json", json.dumps(doc, sort_keys=True, indent=1) + "\n",
               outputs)
        ok &= rep.ok
        for name, passed in sorted(rep.checks.items()):
            log.info("delta=%g %-28s %s", tr.delta, name, "pass" if passed else "FAIL")
    info["verification_ok"] = ok
    return EXIT_VERIFY if (args.strict and not ok) else EXIT_OK


def _cmd_lsc(args, out, outputs, info) -> int:
    if args.scenario is not None:
        sc = _load(args)
        phi = sc.phi
    else:
        phi = AnisotropyField.euclidean()
    ok = True
    for name in args.family or FAMILIES:
        rep = lsc_experiment(family(name), phi, args.n_max)
        _write(out / f"lsc_{name}.csv", rep.to_csv(), outputs)
        summ = rep.summary()
        summ["seed"] = args.seed
        _write(out / f"lsc_{name}.json", json.dumps(summ, sort_keys=True, indent=1) + "\n", outputs)
        ok &= rep.holds
    info["lsc_ok"] = ok
    return EXIT_VERIFY if (args.strict and not ok) else EXIT_OK


def _cmd_study(args, out, outputs, info) -> int:
    sc = _load(args)
    st = delta_convergence_study(sc, args.delta, args.strategy, threads=args.threads)
    _write(out / "study.csv", st.to_csv(), outputs)
    summ = st.summary()
    summ["seed"] = args.seed
    _write(out / "study.json", json.dumps(summ, sort_keys=True, indent=1) + "\n", outputs)
    ok = all(st.monotone.values())
    info["study_ok"] = ok
    return EXIT_VERIFY if (args.strict and not ok) else EXIT_OK


COMMANDS = {"solve": _cmd_solve, "evolve": _cmd_evolve, "verify": _cmd_verify,
            "lsc": _cmd_lsc, "study": _cmd_study}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("FRACTURA_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    out: Path = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: --out: cannot create {out} ({exc})", file=sys.stderr)
        return EXIT_VALIDATION
    outputs: list[str] = []
    info: dict = {}
    t0 = time.perf_counter()
    try:
        status = COMMANDS[args.command](args, out, outputs, info)
    except (ScenarioError, CoefficientError, AnisotropyError, MeshError, ExpressionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_VALIDATION
    except (SolverError, EvolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_SOLVER
    manifest = {
        "command": args.command,
        "config": {"scenario": str(args.scenario) if args.scenario else None,
                   "delta": args.delta, "strategy": args.strategy, "strict": args.strict,
                   "threads": args.threads, "seed": args.seed, "refine": args.refine},
        "exit_status": status,
        "outputs": sorted(outputs),
        "versions": _versions(),
        **info,
    }
    if args.scenario is not None and args.scenario.exists():
        try:
            manifest["scenario"] = json.loads(args.scenario.read_text())
        except json.JSONDecodeError:
            manifest["scenario"] = None
    if not args.reproducible:
        manifest["timings"] = {"wall_seconds": time.perf_counter() - t0}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return status


def main() -> None:  # pragma: no cover - console entry point
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
