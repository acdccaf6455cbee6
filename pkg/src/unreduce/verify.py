"""Executable property checks with pass/fail reports.

Every check samples states (or initial conditions) deterministically from
``(system_id, seed)`` and reports the worst residual against a tolerance.
Tolerances only absorb numerical method error:

* ``1e-12`` for purely algebraic identities (a few ulps of O(1) quantities).
* ``1e-10`` for quantities that RK4 propagates exactly in exact arithmetic
  (conserved quasi-velocities, horizontal slices); accumulated round-off over
  1000 steps stays far below this.
* ``1e-8`` for central differences at ``fd_step = 1e-5`` (truncation
  ``O(h^2) ~ 1e-10`` times derivative scale, round-off ``eps/h ~ 1e-11``).
* ``1e-7`` for trajectory comparisons at ``h = 1e-3`` over unit time
  (RK4 global error ``O(h^4)``).
* ``1e-6`` for Euler-Lagrange residuals that use second differences
  (measured relative to the largest term).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .bundle import QuasiState, coords_to_quasi, verify_curvature, verify_vertical_brackets
from .errors import UnreductionError
from .integrate import integrate, project_trajectory
from .sode import (
    TotalSODE,
    eval_sode,
    evaluate,
    relative_lagrangian_residual,
    sode_condition_check,
    submersive_check,
)
from .systems import SystemBundle, all_systems, curvature_distortion

DEFAULT_SEED = 20240601
DEFAULT_H = 1e-3

TOLERANCES = {
    "curvature_fd": 1e-8,
    "field_identity": 1e-12,
    "frame_brackets_fd": 1e-8,
    "g_invariance": 1e-8,
    "horizontal_lift": 1e-10,
    "lagrangian_residual": 1e-6,
    "momentum": 1e-10,
    "projection_commutation": 1e-12,
    "sode_condition": 1e-12,
    "submersive": 1e-8,
    "zero_momentum_shooting": 1e-7,
}

FIELD_SAMPLES = 100
TRAJECTORY_SAMPLES = 5


@dataclass(frozen=True)
class CheckReport:
    check_id: str
    system_id: str
    samples_used: int
    max_residual: float
    tolerance: float
    worst_state: QuasiState | None
    seed: int
    h: float | None = None
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.max_residual <= self.tolerance)

    def to_dict(self) -> dict:
        finite = bool(np.isfinite(self.max_residual))
        out = {
            "check_id": self.check_id,
            "system_id": self.system_id,
            "pass": self.passed,
            "max_residual": float(self.max_residual) if finite else None,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "h": self.h,
            "samples_used": self.samples_used,
            "worst_state": None if self.worst_state is None else self.worst_state.to_dict(),
        }
        if self.error is not None:
            out["error"] = self.error
        return out


def _tol(check_id: str, tol: float | None) -> float:
    return TOLERANCES[check_id] if tol is None else float(tol)


def _report(check_id, system, values: Iterable[tuple[float, QuasiState]], tol, seed, h=None) -> CheckReport:
    """Worst of ``(residual, state)`` pairs; a domain or conditioning failure counts as an infinite residual."""
    worst, worst_state, count, error = 0.0, None, 0, None
    try:
        for value, s in values:
            count += 1
            if worst_state is None or not value <= worst:
                worst, worst_state = float(value), s
                if np.isnan(worst):
                    break
    except UnreductionError as exc:
        worst, error = float("inf"), f"{type(exc).__name__}: {exc}"
    return CheckReport(check_id, system.id, count, worst, _tol(check_id, tol), worst_state, seed, h, error)


def _max_abs(a) -> float:
    return float(np.max(np.abs(a), initial=0.0))


# --- field-level checks ----------------------------------------------------------


def check_projection_commutation(system: SystemBundle, n_samples: int = FIELD_SAMPLES, seed: int = DEFAULT_SEED, field=None, tol=None) -> CheckReport:
    """``T tau (field) = Gammabar`` at the projected state, plus the SODE condition.

    The base slots compare ``T pi (xdot)`` with ``v^i`` and ``vdot^i`` with
    ``f^i(pi(x), v^i)``.  Because every horizontal-frame field projects onto a
    base coordinate field, these slots cannot see a missing ``X_omega``; the
    vertical SODE condition (``E~_a^C`` coefficients equal ``v^a``) is
    therefore part of the residual.
    """
    field = system.primary if field is None else field
    chart = system.chart

    def values():
        for s in system.samples(n_samples, seed):
            d = evaluate(field, s)
            xbar = chart.projection(s.x)
            base = system.base_sode(xbar, s.v_base)
            res = max(
                _max_abs(chart.projection_jacobian(s.x) @ d.xdot - s.v_base),
                _max_abs(d.vdot_base - base),
            )
            vb, vv = coords_to_quasi(chart, s.x, d.xdot)
            res = max(res, _max_abs(vb - s.v_base), _max_abs(vv - s.v_vert))
            yield res, s

    return _report("projection_commutation", system, values(), tol, seed)


def check_sode_condition(system: SystemBundle, field=None, n_samples: int = FIELD_SAMPLES, seed: int = DEFAULT_SEED, tol=None) -> CheckReport:
    field = system.primary if field is None else field

    def values():
        res = sode_condition_check(field, system.samples(n_samples, seed))
        yield res.max_residual, res.worst_state

    rep = _report("sode_condition", system, values(), tol, seed)
    return CheckReport(rep.check_id, rep.system_id, n_samples, rep.max_residual, rep.tolerance, rep.worst_state, seed, None, rep.error)


def check_curvature_fd(system: SystemBundle, n_samples: int = 20, seed: int = DEFAULT_SEED, fd_step: float = 1e-5, tol=None) -> CheckReport:
    chart = system.chart

    def values():
        for s in system.samples(n_samples, seed):
            yield verify_curvature(chart, s.x, fd_step), s

    return _report("curvature_fd", system, values(), tol, seed)


def check_frame_brackets_fd(system: SystemBundle, n_samples: int = 20, seed: int = DEFAULT_SEED, fd_step: float = 1e-5, tol=None) -> CheckReport:
    """``[E~_a, E~_b] = K^c_ab E~_c`` and ``[X_i, E~_a] = 0`` by finite differences."""
    chart = system.chart

    def values():
        for s in system.samples(n_samples, seed):
            yield verify_vertical_brackets(chart, s.x, fd_step), s

    return _report("frame_brackets_fd", system, values(), tol, seed)


def check_submersive(system: SystemBundle, field: TotalSODE | None = None, n_samples: int = FIELD_SAMPLES, seed: int = DEFAULT_SEED, fd_step: float = 1e-5, tol=None, invariance_only: bool = False) -> CheckReport:
    """Both sufficient conditions for ``field`` to project (``invariance_only`` drops the second)."""
    field = system.primary if field is None else field
    check_id = "g_invariance" if invariance_only else "submersive"

    def values():
        samples = system.samples(n_samples, seed)
        rep = submersive_check(field, samples, fd_step)
        if invariance_only:
            yield rep.invariance.max_residual, rep.invariance.worst_state
        else:
            worst = rep.invariance if rep.invariance.max_residual >= rep.vertical.max_residual else rep.vertical
            yield rep.max_residual, worst.worst_state

    rep = _report(check_id, system, values(), tol, seed)
    return CheckReport(rep.check_id, rep.system_id, n_samples, rep.max_residual, rep.tolerance, rep.worst_state, seed, None, rep.error)


def check_field_identity(system: SystemBundle, n_samples: int = FIELD_SAMPLES, seed: int = DEFAULT_SEED, field: TotalSODE | None = None, tol=None) -> CheckReport:
    """``eval(Gamma_g) - eval(Gamma_1)`` equals ``(A, 0)`` with ``A`` the curvature distortion."""
    field = system.extras["wong_spray"] if field is None else field
    lag = system.lagrangian

    def values():
        for s in system.samples(n_samples, seed):
            d = eval_sode(field, s).as_vector() - eval_sode(system.primary, s).as_vector()
            A = curvature_distortion(system.chart, lag.base_metric, lag.vertical_form, s)
            dim = system.chart.coord_dim
            expected = np.concatenate([np.zeros(dim), A, np.zeros(system.chart.fiber_dim)])
            yield _max_abs(d - expected), s

    return _report("field_identity", system, values(), tol, seed)


def check_lagrangian_residual(system: SystemBundle, field=None, n_samples: int = FIELD_SAMPLES, seed: int = DEFAULT_SEED, fd_step: float = 1e-5, tol=None) -> CheckReport:
    """Horizontal Euler-Lagrange residual, relative to the size of its terms."""
    field = system.primary if field is None else field

    def values():
        for s in system.samples(n_samples, seed):
            yield relative_lagrangian_residual(field, system.lagrangian, s, fd_step), s

    return _report("lagrangian_residual", system, values(), tol, seed)


# --- trajectory-level checks -------------------------------------------------------


def _horizontal(s: QuasiState) -> QuasiState:
    return QuasiState(s.x, s.v_base, np.zeros_like(s.v_vert))


def check_horizontal_lift(system: SystemBundle, n_samples: int = TRAJECTORY_SAMPLES, seed: int = DEFAULT_SEED, h: float = DEFAULT_H, t_end: float = 1.0, field=None, tol=None) -> CheckReport:
    """From horizontal ICs, ``v^a(t)`` stays zero and ``xdot`` stays horizontal."""
    field = system.primary if field is None else field
    chart = system.chart

    def values():
        for s in system.samples(n_samples, seed):
            s0 = _horizontal(s)
            traj = integrate(field, s0, t_end, h)
            if traj.domain_exit is not None:
                yield float("inf"), traj.domain_exit.state
                continue
            res = _max_abs(traj.v_vert)
            for k in range(len(traj)):
                st = traj.state(k)
                _, vv = coords_to_quasi(chart, st.x, evaluate(field, st).xdot)
                res = max(res, _max_abs(vv))
            yield res, s0

    return _report("horizontal_lift", system, values(), tol, seed, h)


def _momentum(system: SystemBundle, v_vert: np.ndarray) -> np.ndarray:
    return np.atleast_2d(v_vert) @ system.lagrangian.vertical_form.T


def check_momentum(system: SystemBundle, n_samples: int = TRAJECTORY_SAMPLES, seed: int = DEFAULT_SEED, h: float = DEFAULT_H, t_end: float = 1.0, field=None, tol=None) -> CheckReport:
    """Drift of ``B_ab v^b`` along the invariant-metric geodesic spray."""
    field = system.extras["wong_spray"] if field is None else field

    def values():
        for s in system.samples(n_samples, seed):
            traj = integrate(field, s, t_end, h)
            if traj.domain_exit is not None:
                yield float("inf"), traj.domain_exit.state
                continue
            mu = _momentum(system, traj.v_vert)
            yield _max_abs(mu - mu[0]), s

    return _report("momentum", system, values(), tol, seed, h)


def check_zero_momentum_shooting(system: SystemBundle, n_samples: int = TRAJECTORY_SAMPLES, seed: int = DEFAULT_SEED, h: float = DEFAULT_H, t_end: float = 1.0, field=None, tol=None) -> CheckReport:
    """Horizontal geodesics upstairs project onto base geodesics."""
    field = system.extras["wong_spray"] if field is None else field
    chart = system.chart

    def values():
        for s in system.samples(n_samples, seed):
            s0 = _horizontal(s)
            up = integrate(field, s0, t_end, h)
            base_ic = QuasiState(chart.projection(s0.x), s0.v_base, [])
            down = integrate(system.base_sode, base_ic, t_end, h)
            if up.domain_exit is not None or down.domain_exit is not None:
                yield float("inf"), s0
                continue
            proj = project_trajectory(chart, up)
            yield _max_abs(proj.stacked() - down.stacked()), s0

    return _report("zero_momentum_shooting", system, values(), tol, seed, h)


# --- suite ---------------------------------------------------------------------------

def _projecting_fields(system: SystemBundle) -> list:
    """Primary SODE plus extras that are un-reductions of the same base SODE."""
    fields = [system.primary]
    for key, f in system.extras.items():
        if f is system.primary:
            continue
        if f.kind == "gamma2" or key == "canonical":
            fields.append(f)
    return fields


def _suite(system: SystemBundle, seed: int, tols: dict) -> list[tuple[str, Callable[[], CheckReport]]]:
    """Lazy ``(check_id, thunk)`` pairs applicable to ``system``."""
    t = tols.get
    fields = _projecting_fields(system)
    sode_fields = [system.primary, *(f for f in system.extras.values() if f is not system.primary)]
    suite = [
        ("curvature_fd", lambda: check_curvature_fd(system, seed=seed, tol=t("curvature_fd"))),
        ("frame_brackets_fd", lambda: check_frame_brackets_fd(system, seed=seed, tol=t("frame_brackets_fd"))),
        ("horizontal_lift", lambda: check_horizontal_lift(system, seed=seed, tol=t("horizontal_lift"))),
        ("submersive", lambda: check_submersive(system, seed=seed, tol=t("submersive"))),
        (
            "projection_commutation",
            lambda: _worst_of(
                check_projection_commutation(system, seed=seed, field=f, tol=t("projection_commutation")) for f in fields
            ),
        ),
        (
            "sode_condition",
            lambda: _worst_of(check_sode_condition(system, field=f, seed=seed, tol=t("sode_condition")) for f in sode_fields),
        ),
    ]
    if system.lagrangian is not None:
        lag_fields = [f for f in fields if f.kind in ("primary", "gamma2")]
        suite.append(
            (
                "lagrangian_residual",
                lambda: _worst_of(
                    check_lagrangian_residual(system, field=f, seed=seed, tol=t("lagrangian_residual")) for f in lag_fields
                ),
            )
        )
    if "wong_spray" in system.extras:
        wong = system.extras["wong_spray"]
        suite += [
            ("field_identity", lambda: check_field_identity(system, seed=seed, tol=t("field_identity"))),
            ("momentum", lambda: check_momentum(system, seed=seed, tol=t("momentum"))),
            ("zero_momentum_shooting", lambda: check_zero_momentum_shooting(system, seed=seed, tol=t("zero_momentum_shooting"))),
            (
                "g_invariance",
                lambda: check_submersive(system, field=wong, seed=seed, tol=t("g_invariance"), invariance_only=True),
            ),
        ]
    return suite


def _worst_of(reports: Iterable[CheckReport]) -> CheckReport:
    reports = list(reports)
    failing = [r for r in reports if not r.passed]
    pool = failing or reports
    return max(pool, key=lambda r: (r.max_residual if np.isfinite(r.max_residual) else np.inf))


def run_all(
    tolerance_overrides: dict[str, float] | None = None,
    seed: int = DEFAULT_SEED,
    check_filter: str | None = None,
    system_filter: str | None = None,
) -> list[CheckReport]:
    """Every check on every applicable shipped system, sorted by ``(check_id, system_id)``.

    ``check_filter`` keeps checks whose ID contains the substring;
    ``system_filter`` does the same for system IDs.
    """
    tols = dict(tolerance_overrides or {})
    unknown = set(tols) - set(TOLERANCES)
    if unknown:
        raise KeyError(f"unknown check IDs in tolerance overrides: {sorted(unknown)}")
    reports = []
    for system in all_systems():
        if system_filter and system_filter not in system.id:
            continue
        reports += [run() for cid, run in _suite(system, seed, tols) if not check_filter or check_filter in cid]
    return sorted(reports, key=lambda r: (r.check_id, r.system_id))


def report_json(reports: list[CheckReport]) -> str:
    payload = {
        "all_passed": all(r.passed for r in reports),
        "reports": [r.to_dict() for r in reports],
    }
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"
