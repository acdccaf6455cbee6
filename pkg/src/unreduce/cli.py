"""Command-line front end: ``unreduce {run,compare,check,list}``.

Exit codes: 0 ok, 2 usage or configuration error, 3 domain exit, 4 check failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .bundle import QuasiState
from .errors import DomainError, UnknownSystemError, UnreductionError, ValidationError
from .integrate import (
    Trajectory,
    _describe,
    atomic_write,
    integrate,
    project_trajectory,
    subsample,
    time_grid,
    trajectory_error,
    write_trajectory,
)
from .sode import BaseSODE
from .systems import SYSTEM_IDS, SystemBundle, get_system
from .verify import DEFAULT_SEED, TOLERANCES, report_json, run_all

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_CHECK = 0, 2, 3, 4


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    system_id: str
    sode: str = "primary"
    coords: object = None
    velocities: object = None
    horizontal_lift: bool = False
    t_end: float = 1.0
    h: float = 1e-3
    seed: int = DEFAULT_SEED
    out: str | None = None
    format: str = "csv"

    def validate(self) -> None:
        if not (self.h > 0 and math.isfinite(self.h)):
            raise UsageError("h must be a positive finite number")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise UsageError("t_end must be a positive finite number")
        if self.format not in ("csv", "json"):
            raise UsageError(f"unknown format {self.format!r}")


_CONFIG_KEYS = {"system", "sode", "coords", "velocities", "horizontal_lift", "t_end", "h", "seed", "out", "format"}


def _load_config(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key in ("system", "sode", "coords", "velocities", "t_end", "h", "out", "format"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "horizontal_lift", False):
        data["horizontal_lift"] = True
    if "system" not in data:
        raise UsageError("no system given (use --system or a config file)")
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = data.get("seed")
    if seed is None:
        env = os.environ.get("UNREDUCE_SEED")
        try:
            seed = int(env) if env is not None else DEFAULT_SEED
        except ValueError:
            raise UsageError(f"UNREDUCE_SEED is not an integer: {env!r}") from None
    try:
        cfg = RunConfig(
            system_id=str(data["system"]),
            sode=str(data.get("sode", "primary")),
            coords=data.get("coords"),
            velocities=data.get("velocities"),
            horizontal_lift=bool(data.get("horizontal_lift", False)),
            t_end=float(data.get("t_end", 1.0)),
            h=float(data.get("h", 1e-3)),
            seed=int(seed),
            out=data.get("out"),
            format=str(data.get("format", "csv")),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config value: {exc}") from None
    cfg.validate()
    return cfg


def _parse_values(raw, names: tuple[str, ...], what: str) -> np.ndarray:
    """Values from a list, a ``{name: value}`` mapping or a ``"a=1,b=2"`` / ``"1,2"`` string."""
    if isinstance(raw, str):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if parts and all("=" in p for p in parts):
            raw = dict(p.split("=", 1) for p in parts)
        else:
            raw = parts
    if isinstance(raw, dict):
        unknown = set(raw) - set(names)
        missing = [n for n in names if n not in raw]
        if unknown or missing:
            raise UsageError(f"{what}: expected names {list(names)}, unknown {sorted(unknown)}, missing {missing}")
        raw = [raw[n] for n in names]
    try:
        values = np.array([float(v) for v in raw], dtype=float)
    except (TypeError, ValueError):
        raise UsageError(f"{what}: could not parse {raw!r}") from None
    if values.shape != (len(names),):
        raise UsageError(f"{what}: expected {len(names)} values {list(names)}, got {values.shape[0]}")
    return values


def initial_state(system: SystemBundle, cfg: RunConfig) -> QuasiState:
    """Total-space initial state from the config, or a seeded sample when none is given."""
    chart = system.chart
    if cfg.coords is None and cfg.velocities is None:
        s = system.samples(1, cfg.seed)[0]
        if cfg.horizontal_lift:
            s = QuasiState(s.x, s.v_base, np.zeros(chart.fiber_dim))
        return s
    if cfg.coords is None:
        raise UsageError("velocities given without coords")
    x = _parse_values(cfg.coords, chart.coord_names, "coords")
    if cfg.horizontal_lift:
        vb = _parse_values(cfg.velocities if cfg.velocities is not None else [0.0] * chart.base_dim, chart.base_names, "base velocity")
        return QuasiState(x, vb, np.zeros(chart.fiber_dim))
    v = _parse_values(cfg.velocities if cfg.velocities is not None else [0.0] * chart.quasi_dim, chart.velocity_names, "velocities")
    return QuasiState(x, v[: chart.base_dim], v[chart.base_dim :])


def _base_state(system: SystemBundle, s: QuasiState) -> QuasiState:
    return QuasiState(system.chart.projection(s.x), s.v_base, [])


def _output_paths(cfg: RunConfig) -> tuple[Path, Path]:
    out = Path(cfg.out or f"{cfg.system_id}-{cfg.sode.replace(':', '_')}.{cfg.format}")
    return out, out.with_name(f"{out.stem}.base{out.suffix}")


def _empty_trajectory(field, system_id, cfg, message) -> Trajectory:
    dim, k, coords, vels = _describe(field)
    n = len(vels) - k
    return Trajectory(
        times=np.zeros(0),
        x=np.zeros((0, dim)),
        v_base=np.zeros((0, n)),
        v_vert=np.zeros((0, k)),
        coord_names=coords,
        velocity_names=vels,
        step=cfg.h,
        system_id=system_id,
        t_end=cfg.t_end,
        metadata={"error": message},
    )


def cmd_run(cfg: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    system = get_system(cfg.system_id)
    field = system.sode(cfg.sode)
    out, base_out = _output_paths(cfg)
    is_base = isinstance(field, BaseSODE)
    try:
        s0 = initial_state(system, cfg)
        if is_base:
            s0 = _base_state(system, s0)
        traj = integrate(field, s0, cfg.t_end, cfg.h, system_id=system.id)
    except DomainError as exc:
        write_trajectory(_empty_trajectory(field, system.id, cfg, str(exc)), out, cfg.format, cfg.seed)
        print(f"domain error at initial state: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    write_trajectory(traj, out, cfg.format, cfg.seed)
    written = [str(out)]
    if not is_base:
        write_trajectory(project_trajectory(system.chart, traj), base_out, cfg.format, cfg.seed)
        written.append(str(base_out))
    summary = {"completed": traj.completed, "files": written, "samples": len(traj), "step": traj.step}
    print(json.dumps(summary, sort_keys=True), file=stdout)
    if not traj.completed:
        print(f"domain exit at t={traj.domain_exit.time!r}: {traj.domain_exit.message}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def _error_table(proj: Trajectory, base: Trajectory) -> tuple[str, float, float]:
    diff = proj.stacked() - base.stacked()
    names = [*base.coord_names, *base.velocity_names]
    lines = [",".join(["t", *(f"err_{n}" for n in names), "err_norm"])]
    for t, row in zip(base.times, diff):
        lines.append(",".join([repr(float(t)), *(repr(float(abs(v))) for v in row), repr(float(np.linalg.norm(row)))]))
    return "\n".join(lines) + "\n", trajectory_error(proj, base, "max"), trajectory_error(proj, base, "l2")


def cmd_compare(cfg: RunConfig, stdout=None) -> int:
    """Project a total-space run and compare it with the base run on the same grid."""
    stdout = stdout or sys.stdout
    system = get_system(cfg.system_id)
    field = system.sode(cfg.sode)
    if isinstance(field, BaseSODE):
        raise UsageError("compare needs a total-space SODE selector")
    out, _ = _output_paths(cfg)
    s0 = initial_state(system, cfg)
    up = integrate(field, s0, cfg.t_end, cfg.h, system_id=system.id)
    down = integrate(system.base_sode, _base_state(system, s0), cfg.t_end, cfg.h, system_id=system.id)
    m = min(len(up), len(down))
    proj, down_m = _truncate(project_trajectory(system.chart, up), m), _truncate(down, m)
    table, err_max, err_l2 = _error_table(proj, down_m)
    atomic_write(out, table)
    completed = up.completed and down.completed
    print(json.dumps({"max": err_max, "l2": err_l2, "completed": completed, "file": str(out)}, sort_keys=True), file=stdout)
    return EXIT_OK if completed else EXIT_DOMAIN


def _truncate(traj: Trajectory, m: int) -> Trajectory:
    return replace(traj, times=traj.times[:m], x=traj.x[:m], v_base=traj.v_base[:m], v_vert=traj.v_vert[:m])


def convergence_sweep(system: SystemBundle, selector: str, s0: QuasiState, t_end: float, h: float, levels: int = 3, refine: int = 16) -> dict:
    """Errors of RK4 runs at ``h, h/2, ...`` against a reference on the coarsest grid.

    The reference is the closed-form flow when the system has one and the
    selector is ``primary``; otherwise an RK4 run ``refine`` times finer than
    the finest level.  Orders are ``log2(e_k / e_{k+1})``.
    """
    field = system.sode(selector)
    steps = [h / 2**k for k in range(levels)]
    coarse_times, _ = time_grid(0.0, t_end, h)
    N = len(coarse_times) - 1
    if system.exact is not None and selector == "primary":
        ref = np.array([system.exact(s0, t).as_vector() for t in coarse_times])
        reference = "closed_form"
    else:
        fine = integrate(field, s0, t_end, steps[-1] / refine)
        if not fine.completed:
            raise DomainError(f"reference run left the domain: {fine.domain_exit.message}")
        ref = subsample(fine, refine * 2 ** (levels - 1)).stacked()
        reference = f"rk4(h/{refine * 2 ** (levels - 1)})"
    errors = []
    for k, hk in enumerate(steps):
        traj = integrate(field, s0, t_end, hk)
        if not traj.completed:
            raise DomainError(f"sweep run at h={hk!r} left the domain: {traj.domain_exit.message}")
        coarse = subsample(traj, 2**k).stacked()
        if len(coarse) != N + 1:
            raise ValidationError("sweep grids do not nest")
        errors.append(float(np.max(np.abs(coarse - ref))))
    orders = [math.log2(errors[k] / errors[k + 1]) if errors[k + 1] > 0 else math.inf for k in range(levels - 1)]
    return {
        "system_id": system.id,
        "sode": selector,
        "steps": steps,
        "errors": errors,
        "orders": orders,
        "observed_order": orders[-1],
        "reference": reference,
        "t_end": t_end,
    }


def cmd_sweep(cfg: RunConfig, args, stdout=None) -> int:
    stdout = stdout or sys.stdout
    system = get_system(cfg.system_id)
    system.sode(cfg.sode)
    explicit_ic = cfg.coords is not None or cfg.velocities is not None
    if explicit_ic or system.scenario is None:
        s0, t_end = initial_state(system, cfg), cfg.t_end
    else:
        s0, t_end = system.scenario.state, (args.t_end if args.t_end is not None else system.scenario.t_end)
    h = args.h if args.h is not None else 1e-2
    result = convergence_sweep(system, cfg.sode, s0, t_end, h, levels=args.levels)
    line = json.dumps(result, sort_keys=True)
    if cfg.out:
        atomic_write(cfg.out, line + "\n")
    print(line, file=stdout)
    return EXIT_OK


def _parse_tolerances(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--tol expects id=value, got {item!r}")
        key, value = item.split("=", 1)
        if key not in TOLERANCES:
            raise UsageError(f"unknown check id {key!r}; known: {sorted(TOLERANCES)}")
        try:
            out[key] = float(value)
        except ValueError:
            raise UsageError(f"--tol {key}: not a number: {value!r}") from None
    return out


def cmd_check(args, stdout=None) -> int:
    stdout = stdout or sys.stdout
    tols = _parse_tolerances(args.tol)
    seed = args.seed
    if seed is None:
        env = os.environ.get("UNREDUCE_SEED")
        seed = int(env) if env is not None else DEFAULT_SEED
    reports = run_all(tols, seed=seed, check_filter=args.filter, system_filter=args.system)
    if not reports:
        raise UsageError("filter matched no checks")
    text = report_json(reports)
    if args.out:
        atomic_write(args.out, text)
    stdout.write(text)
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.check_id} {r.system_id} residual={r.max_residual:.3e} tol={r.tolerance:.1e}", file=sys.stderr)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK


def cmd_list(stdout=None) -> int:
    stdout = stdout or sys.stdout
    descriptors = [get_system(i).descriptor() for i in SYSTEM_IDS]
    stdout.write(json.dumps(descriptors, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="JSON config file")
    p.add_argument("--system", help=f"system ID ({', '.join(SYSTEM_IDS)})")
    p.add_argument("--sode", help="base, primary or an extras key such as wong_spray")
    p.add_argument("--coords", help="initial coordinates: 'name=value,...' or 'v1,v2,...'")
    p.add_argument("--velocities", help="initial quasi-velocities (base velocities with --horizontal-lift)")
    p.add_argument("--horizontal-lift", action="store_true", help="zero vertical quasi-velocities")
    p.add_argument("--h", type=float, help="step size")
    p.add_argument("--t-end", dest="t_end", type=float, help="final time")
    p.add_argument("--out", help="output path")
    p.add_argument("--seed", type=int, help="seed for sampled initial states (falls back to UNREDUCE_SEED)")
    p.add_argument("--format", choices=("csv", "json"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unreduce", description="Un-reduced SODEs on principal bundles.")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_options(sub.add_parser("run", help="integrate a SODE and write the trajectory"))
    cmp = sub.add_parser("compare", help="projection error of a total-space run against the base run")
    _add_run_options(cmp)
    cmp.add_argument("--sweep", action="store_true", help="step-halving sweep reporting observed order")
    cmp.add_argument("--levels", type=int, default=3, help="number of step sizes in the sweep")
    chk = sub.add_parser("check", help="run the verification suite")
    chk.add_argument("--filter", help="substring of check IDs to run")
    chk.add_argument("--system", help="substring of system IDs to run")
    chk.add_argument("--tol", action="append", metavar="ID=VALUE", help="tolerance override")
    chk.add_argument("--seed", type=int)
    chk.add_argument("--out", help="also write the JSON report here")
    sub.add_parser("list", help="print registry descriptors")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        if args.command == "list":
            return cmd_list()
        if args.command == "check":
            return cmd_check(args)
        cfg = _load_config(args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.sweep:
            if args.levels < 2:
                raise UsageError("--levels must be at least 2")
            return cmd_sweep(cfg, args)
        return cmd_compare(cfg)
    except (UsageError, UnknownSystemError, ValidationError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except UnreductionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
