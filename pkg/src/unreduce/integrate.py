"""Fixed-step integration, fiber reconstruction and trajectory utilities."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .bundle import BundleChart, QuasiState, _vec
from .errors import CapabilityError, DomainError, GridMismatchError, ValidationError
from .sode import BaseSODE, evaluate


@dataclass(frozen=True)
class DomainExit:
    """Where an integration left the chart domain."""

    time: float
    state: QuasiState
    message: str

    def to_dict(self) -> dict:
        return {"time": self.time, "state": self.state.to_dict(), "message": self.message}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniform-grid samples of ``(x, v^i, v^a)``."""

    times: np.ndarray
    x: np.ndarray
    v_base: np.ndarray
    v_vert: np.ndarray
    coord_names: tuple[str, ...]
    velocity_names: tuple[str, ...]
    method: str = "rk4"
    step: float = 0.0
    system_id: str = ""
    t_end: float | None = None
    domain_exit: DomainExit | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def completed(self) -> bool:
        return self.domain_exit is None

    def state(self, k: int) -> QuasiState:
        return QuasiState(self.x[k], self.v_base[k], self.v_vert[k])

    def stacked(self) -> np.ndarray:
        """Rows ``[x, v^i, v^a]`` per time."""
        return np.hstack([self.x, self.v_base, self.v_vert])

    @property
    def columns(self) -> list[str]:
        return ["t", *self.coord_names, *self.velocity_names]


def time_grid(t0: float, t_end: float, h: float) -> tuple[np.ndarray, float]:
    """Uniform grid from ``t0`` to ``t_end`` with ``round((t_end - t0) / h)`` steps.

    The step is adjusted to ``(t_end - t0) / N`` so the grid ends exactly at ``t_end``.
    """
    if not h > 0:
        raise ValidationError("step h must be positive")
    span = t_end - t0
    if not span > 0:
        raise ValidationError("t_end must exceed t0")
    N = max(1, int(round(span / h)))
    return t0 + span * (np.arange(N + 1) / N), span / N


def _describe(field_obj) -> tuple[int, int, tuple[str, ...], tuple[str, ...]]:
    if isinstance(field_obj, BaseSODE):
        names = field_obj.coord_names
        return field_obj.base_dim, 0, names, tuple(f"{c}_dot" for c in names)
    chart: BundleChart = field_obj.chart
    return chart.coord_dim, chart.fiber_dim, chart.coord_names, chart.velocity_names


def integrate(field_obj, s0: QuasiState, t_end: float, h: float, t0: float = 0.0, system_id: str = "") -> Trajectory:
    """Classical RK4 on the quasi-velocity evolution rule.

    ``field_obj`` is a ``TotalSODE``, ``RawField`` or ``BaseSODE`` (for the
    latter ``s0.x`` holds base coordinates and ``s0.v_vert`` is empty).  If a
    Runge-Kutta stage leaves the chart domain the integration stops and the
    accepted prefix is returned with ``domain_exit`` set.
    """
    dim, k, coord_names, vel_names = _describe(field_obj)
    evaluate(field_obj, s0)  # validates the initial point; raises DomainError
    y0 = s0.as_vector()
    n = len(s0.v_base)
    times, step = time_grid(t0, t_end, h)

    def rhs(y):
        return evaluate(field_obj, QuasiState.from_vector(y, dim, n)).as_vector()

    ys = np.empty((len(times), len(y0)))
    ys[0] = y0
    exit_info = None
    y = y0
    accepted = 1
    for m in range(len(times) - 1):
        stage_y = y
        try:
            k1 = rhs(y)
            stage_y = y + 0.5 * step * k1
            k2 = rhs(stage_y)
            stage_y = y + 0.5 * step * k2
            k3 = rhs(stage_y)
            stage_y = y + step * k3
            k4 = rhs(stage_y)
            y_next = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            stage_y = y_next
            if isinstance(field_obj, BaseSODE):
                field_obj.check_domain(y_next[:dim])
            else:
                field_obj.chart.check_domain(y_next[:dim])
        except DomainError as exc:
            exit_info = DomainExit(float(times[m]), QuasiState.from_vector(stage_y, dim, n), str(exc))
            break
        y = y_next
        ys[m + 1] = y
        accepted += 1

    ys = ys[:accepted]
    return Trajectory(
        times=times[:accepted],
        x=ys[:, :dim],
        v_base=ys[:, dim : dim + n],
        v_vert=ys[:, dim + n :],
        coord_names=coord_names,
        velocity_names=vel_names,
        method="rk4",
        step=step,
        system_id=system_id,
        t_end=t_end,
        domain_exit=exit_info,
    )


def horizontal_lift_ic(chart: BundleChart, x0, vbar0) -> QuasiState:
    """Horizontal lift of the base velocity ``vbar0`` to the point ``x0``."""
    x0 = chart.check_domain(x0)
    vbar0 = _vec(vbar0)
    if vbar0.shape != (chart.base_dim,):
        raise ValidationError(f"base velocity must have {chart.base_dim} entries")
    return QuasiState(x0, vbar0, np.zeros(chart.fiber_dim))


@dataclass(frozen=True)
class FiberCurve:
    times: np.ndarray
    values: np.ndarray
    method: str


def reconstruct_fiber(chart: BundleChart, v_vert_history: Callable[[float], np.ndarray], g0, h: float, t_end: float, t0: float = 0.0) -> FiberCurve:
    """Solve the reconstruction equation ``(g^-1 gdot)^a = v^a(t)``.

    Matrix groups: Lie-Euler steps ``g <- g exp(h [xi(t + h/2)])``, exact for
    constant ``xi``.  Abelian groups without a realization (angles and
    translations): ``g(t) = g0 + integral of v`` by Simpson's rule per step.
    """
    group = chart.group
    times, step = time_grid(t0, t_end, h)
    if group.realization is not None:
        g = np.array(g0, dtype=float)
        out = [g]
        for t in times[:-1]:
            g = g @ group.realization.exp(step * _vec(v_vert_history(t + 0.5 * step)))
            out.append(g)
        return FiberCurve(times, np.array(out), "lie_euler_reconstruction")
    if group.is_abelian:
        g = _vec(g0).copy()
        out = [g.copy()]
        for t in times[:-1]:
            g = g + (step / 6.0) * (
                _vec(v_vert_history(t)) + 4.0 * _vec(v_vert_history(t + 0.5 * step)) + _vec(v_vert_history(t + step))
            )
            out.append(g.copy())
        return FiberCurve(times, np.array(out), "simpson")
    raise CapabilityError(f"group {group.name!r} has neither a matrix realization nor an abelian structure")


def project_trajectory(chart: BundleChart, traj: Trajectory) -> Trajectory:
    """Map every point through ``pi`` and keep ``v^i`` (which equals ``d xbar / dt``)."""
    xbar = np.array([chart.projection(x) for x in traj.x]).reshape(len(traj), chart.base_dim)
    return replace(
        traj,
        x=xbar,
        v_vert=np.zeros((len(traj), 0)),
        coord_names=chart.base_names,
        velocity_names=tuple(f"{c}_dot" for c in chart.base_names),
        metadata={**traj.metadata, "projected": True},
    )


def trajectory_error(a: Trajectory, b: Trajectory, norm: str = "max") -> float:
    """Pointwise state-difference norm on a shared grid.

    ``max``: largest absolute entry difference over all times.
    ``l2``: root mean square over times of the Euclidean state difference.
    """
    if len(a) != len(b) or not np.array_equal(a.times, b.times):
        raise GridMismatchError("trajectories do not share a time grid")
    da, db = a.stacked(), b.stacked()
    if da.shape != db.shape:
        raise ValidationError(f"state shapes differ: {da.shape} vs {db.shape}")
    diff = da - db
    if norm == "max":
        return float(np.max(np.abs(diff), initial=0.0))
    if norm == "l2":
        return float(np.sqrt(np.mean(np.sum(diff**2, axis=1))))
    raise ValidationError(f"unknown norm {norm!r}")


def subsample(traj: Trajectory, stride: int) -> Trajectory:
    """Every ``stride``-th sample (used to put a fine reference on a coarse grid)."""
    sl = slice(None, None, stride)
    return replace(traj, times=traj.times[sl], x=traj.x[sl], v_base=traj.v_base[sl], v_vert=traj.v_vert[sl])


def _fmt(value: float) -> str:
    return repr(float(value))


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(traj.columns)
    for t, row in zip(traj.times, traj.stacked()):
        writer.writerow([_fmt(t), *(_fmt(v) for v in row)])
    return buf.getvalue()


def trajectory_json(traj: Trajectory, seed: int | None = None) -> str:
    meta = {
        "system_id": traj.system_id,
        "method": traj.method,
        "step": traj.step,
        "t_end": traj.t_end,
        "seed": seed,
        "completed": traj.completed,
    }
    if traj.domain_exit is not None:
        meta["domain_exit"] = traj.domain_exit.to_dict()
    meta.update(traj.metadata)
    payload = {
        "metadata": meta,
        "columns": traj.columns,
        "rows": [[float(t), *map(float, row)] for t, row in zip(traj.times, traj.stacked())],
    }
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temporary sibling file, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectory(traj: Trajectory, path, fmt: str = "csv", seed: int | None = None) -> None:
    if fmt == "csv":
        atomic_write(path, trajectory_csv(traj))
    elif fmt == "json":
        atomic_write(path, trajectory_json(traj, seed))
    else:
        raise ValidationError(f"unknown output format {fmt!r}")


def read_trajectory_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(len(rows) - 1, len(header))
    return header, data
