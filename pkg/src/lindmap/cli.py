"""Command-line front end: run scenarios, verify mappings, solve steady states.

Verbs
-----
run       simulate q1 (and the partner q2) and write CSV time series
verify    dual-simulation mapping check plus the exact moment-algebra audit
steady    steady-state observable summary and correspondence residual
converge  Fock-cutoff sweep for bosonic scenarios

Exit codes: 0 success, 2 configuration problem, 3 physics/verification
failure, 4 file I/O failure.  Output files are written to --out, the
LINDMAP_OUT directory, or the working directory, in that order; writes go
through a temp file and an atomic rename so failures never leave partial
files behind.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .lindblad import (
    ConvergenceError,
    DegenerateSteadyStateError,
    InvariantViolationError,
    SteadyStateError,
    convergence_check,
    evolve,
    steady_state,
)
from .mapping import MappingRefusedError, map_model, verify_mapping
from .models import build_dimer
from .moments import eom_consistency_check
from .scenario import ConfigError, ScenarioConfig, load_config, observable_operator

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_IO = 4

OUT_DIR_ENV = "LINDMAP_OUT"
EOM_TOL = 1e-10


def _float_repr(x: float) -> str:
    # %.17g round-trips doubles exactly
    return format(float(x), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError:
        try:
            tmp.unlink()
        except OSError:
            pass
        raise


def _write_csv(path: Path, times, names, values) -> None:
    """Time series as `t,<name>_re,<name>_im,...` with %.15e cells."""
    header = "t," + ",".join(f"{n}_re,{n}_im" for n in names)
    lines = [header]
    for k, t in enumerate(times):
        cells = [f"{t:.15e}"]
        for j in range(len(names)):
            v = values[k, j]
            cells.append(f"{v.real:.15e}")
            cells.append(f"{v.imag:.15e}")
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def _manifest_lines(cfg: ScenarioConfig, deterministic: bool) -> list:
    lines = [
        f"scenario = {cfg.name}",
        f"toolkit_version = {__version__}",
        f"kind = {cfg.kind}",
    ]
    if cfg.kind == "dimer":
        p = cfg.dimer
        lines += [
            f"model.U = {_float_repr(p.U)}",
            f"model.delta_omega = {_float_repr(p.delta_omega)}",
            f"model.epsilon = {_float_repr(p.epsilon)}",
            f"model.J = {_float_repr(p.J)}",
            f"model.gamma = {_float_repr(p.gamma)}",
            f"model.n_sites = {p.n_sites}",
            f"cutoff = {p.cutoff}",
        ]
    else:
        p = cfg.spin
        lines += [
            f"model.delta_Omega = {_float_repr(p.delta_Omega)}",
            f"model.drives = {','.join(_float_repr(x) for x in p.drives)}",
            f"model.J = {_float_repr(p.J)}",
            f"model.Gamma = {_float_repr(p.Gamma)}",
            f"model.n_sites = {p.graph.n_sites}",
            f"model.edges = {';'.join(f'{a}-{b}' for a, b in p.graph.edges)}",
        ]
    lines += [
        f"initial_state = {cfg.initial_kind}",
    ]
    if cfg.occupations is not None:
        lines.append(f"occupations = {','.join(str(x) for x in cfg.occupations)}")
    lines += [
        f"grid.t_max = {_float_repr(cfg.t_max)}",
        f"grid.n_points = {cfg.n_points}",
        f"observables = {','.join(cfg.observables)}",
        f"mapping.run_partner = {str(cfg.mapping.run_partner).lower()}",
        f"mapping.apply_gauge = {str(cfg.mapping.apply_gauge).lower()}",
        f"mapping.tolerance = {_float_repr(cfg.mapping.tolerance)}",
        f"integrator.method = {'fixed' if deterministic else cfg.integrator.method}",
        f"integrator.rtol = {_float_repr(cfg.integrator.rtol)}",
        f"integrator.atol = {_float_repr(cfg.integrator.atol)}",
        f"deterministic = {str(deterministic).lower()}",
    ]
    return lines


def _evolve_kwargs(cfg: ScenarioConfig, deterministic: bool) -> dict:
    return {
        "method": "fixed" if deterministic else cfg.integrator.method,
        "rtol": cfg.integrator.rtol,
        "atol": cfg.integrator.atol,
    }


def cmd_run(cfg: ScenarioConfig, args, out_dir: Path) -> int:
    t_start = time.perf_counter()
    space = cfg.space()
    q1 = cfg.build_model()
    named = cfg.observable_ops(space)
    names = [n for n, _ in named]
    ops = [op for _, op in named]
    grid = cfg.time_grid()
    kwargs = _evolve_kwargs(cfg, args.deterministic)

    jobs = [("q1", q1, cfg.initial_state(space))]
    if cfg.mapping.run_partner:
        jobs.append(("q2", cfg.partner_model(q1), cfg.partner_initial_state(space)))

    def one(job):
        label, model, rho0 = job
        traj = evolve(model, rho0, grid, observables=ops, **kwargs)
        return label, traj

    # partner runs are independent; overlap them when both are requested
    if len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(jobs[0])]

    files = []
    for label, traj in results:
        path = out_dir / f"{cfg.name}_{label}.csv"
        _write_csv(path, traj.times, names, traj.expectations)
        files.append(path.name)
        print(f"wrote {path}")

    lines = _manifest_lines(cfg, args.deterministic)
    lines.append(f"files = {','.join(files)}")
    lines.append(f"wall_seconds = {time.perf_counter() - t_start:.3f}")
    manifest = out_dir / f"{cfg.name}_manifest.txt"
    _atomic_write(manifest, "\n".join(lines) + "\n")
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_verify(cfg: ScenarioConfig, args, out_dir: Path) -> int:
    space = cfg.space()
    q1 = cfg.build_model()
    rho0 = cfg.initial_state(space)
    named = cfg.observable_ops(space)
    grid = cfg.time_grid()
    kwargs = _evolve_kwargs(cfg, args.deterministic)

    report = verify_mapping(
        q1, rho0, named, grid, tol=cfg.mapping.tolerance, **kwargs
    )
    ok = report.passed
    for check in report.checks:
        verdict = "PASS" if check.passed else "FAIL"
        print(
            f"mapping {check.name}: max deviation {check.max_deviation:.3e} "
            f"(tolerance {check.tolerance:g}, worst t={check.worst_time:.6g}): "
            f"{verdict}"
        )

    if cfg.kind == "dimer":
        try:
            eom = eom_consistency_check(cfg.dimer, rho0, max_order=3)
        except ValueError as exc:
            print(f"moment algebra: skipped ({exc})")
        else:
            passed = eom.max_residual < EOM_TOL
            ok = ok and passed
            print(
                f"moment algebra: max residual {eom.max_residual:.3e} "
                f"(tolerance {EOM_TOL:g}, worst index "
                f"{tuple(eom.worst_index)}): {'PASS' if passed else 'FAIL'}"
            )

    print(
        "state audit: every snapshot of both runs passed trace/Hermiticity/"
        "positivity enforcement"
    )
    _atomic_write(out_dir / f"{cfg.name}_verify.json", report.to_json() + "\n")
    print(f"wrote {out_dir / f'{cfg.name}_verify.json'}")
    if not ok:
        print("verification FAILED")
        return EXIT_INVARIANT
    print("verification passed")
    return EXIT_OK


def cmd_steady(cfg: ScenarioConfig, args, out_dir: Path) -> int:
    space = cfg.space()
    q1 = cfg.build_model()
    named = cfg.observable_ops(space)
    tol = args.tol if args.tol is not None else 1e-10

    rho1 = steady_state(q1, tol=tol)
    lines = [f"scenario = {cfg.name}", f"tolerance = {_float_repr(tol)}"]
    for name, op in named:
        v = rho1.expectation(op)
        lines.append(f"q1.{name}_re = {v.real:.15e}")
        lines.append(f"q1.{name}_im = {v.imag:.15e}")
        print(f"q1 <{name}> = {v.real:+.9e} {v.imag:+.9e}j")

    if cfg.mapping.run_partner:
        q2 = cfg.partner_model(q1)
        rho2 = steady_state(q2, tol=tol)
        for name, op in named:
            v = rho2.expectation(op)
            lines.append(f"q2.{name}_re = {v.real:.15e}")
            lines.append(f"q2.{name}_im = {v.imag:.15e}")
            print(f"q2 <{name}> = {v.real:+.9e} {v.imag:+.9e}j")
        expected = cfg.transform_state(rho1)
        residual = float(np.abs(rho2.matrix - expected.matrix).max())
        lines.append(f"correspondence_residual = {residual:.15e}")
        print(f"steady-state correspondence residual = {residual:.3e}")

    path = out_dir / f"{cfg.name}_steady.txt"
    _atomic_write(path, "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_converge(cfg: ScenarioConfig, args, out_dir: Path) -> int:
    if cfg.kind != "dimer":
        raise ConfigError("converge applies to bosonic scenarios only")
    tol = args.tol if args.tol is not None else 1e-6
    ceiling = args.cutoff if args.cutoff is not None else 24
    base = cfg.dimer

    def family(cutoff: int):
        sub = replace(cfg, dimer=replace(base, cutoff=cutoff))
        return sub.build_model(), sub.initial_state(sub.space())

    def observable(space):
        return observable_operator(space, cfg.observables[0])

    result = convergence_check(
        family,
        observable,
        cfg.time_grid(),
        ceiling=ceiling,
        tol=tol,
        rtol=cfg.integrator.rtol,
        atol=cfg.integrator.atol,
    )
    lines = [
        f"scenario = {cfg.name}",
        f"observable = {cfg.observables[0]}",
        f"tolerance = {_float_repr(tol)}",
        f"cutoff = {result.cutoff}",
    ]
    for low, high, delta in result.deltas:
        lines.append(f"delta.{low}.{high} = {delta:.15e}")
        print(f"cutoff {low} vs {high}: max change {delta:.3e}")
    print(f"converged cutoff = {result.cutoff}")
    path = out_dir / f"{cfg.name}_converge.txt"
    _atomic_write(path, "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lindmap",
        description="Driven-dissipative Lindblad simulations with "
        "sign-inverted partner verification.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "run": (cmd_run, "simulate and write CSV time series"),
        "verify": (cmd_verify, "dual-simulation and algebra checks"),
        "steady": (cmd_steady, "steady-state summary"),
        "converge": (cmd_converge, "Fock-cutoff sweep"),
    }
    for name, (handler, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario file (TOML)")
        p.add_argument(
            "--out",
            default=None,
            help=f"output directory (default: ${OUT_DIR_ENV} or the "
            "working directory)",
        )
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="fixed-step integration for byte-identical reruns",
        )
        p.add_argument(
            "--tol",
            type=float,
            default=None,
            help="override the verb's tolerance (mapping/steady/converge)",
        )
        p.add_argument(
            "--cutoff",
            type=int,
            default=None,
            help="override the Fock cutoff (for converge: the sweep ceiling)",
        )
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.cutoff is not None and args.command != "converge":
            cfg = cfg.with_cutoff(args.cutoff)
        if args.tol is not None:
            if args.tol <= 0:
                raise ConfigError("--tol must be positive")
            cfg = cfg.with_tolerance(args.tol)
        out_dir = Path(
            args.out
            if args.out is not None
            else os.environ.get(OUT_DIR_ENV, ".")
        )
        out_dir.mkdir(parents=True, exist_ok=True)
        return args.handler(cfg, args, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateSteadyStateError as exc:
        print(f"degenerate steady state: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (
        InvariantViolationError,
        MappingRefusedError,
        SteadyStateError,
        ConvergenceError,
    ) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
