"""Second-order fields in quasi-velocity form and their defining properties.

A SODE on the total space is stored through its coefficients only,

    Gamma = v^i X_i^C + v^a E~_a^C + F^i X_i^V + F^a E~_a^V,

and integrated with the single evolution rule

    xdot = Z(x) (v^i, v^a),    vdot^i = F^i(x, v),    vdot^a = F^a(x, v).

The term ``v^a E~_a^C`` (the field ``X_omega``) is therefore built into
:func:`eval_sode`; every SODE on the total space contains it.

Lagrangian conditions are expressed through ``L^H = ell(pi(x), v^i)``.
Because the horizontal frame fields project onto the base coordinate
fields, ``X_i^V(L^H)`` is ``d ell / d vbar^i`` and ``X_i^C(L^H)`` is
``d ell / d xbar^i`` evaluated at the projected state; the horizontal
Euler-Lagrange condition of a total-space SODE reduces to

    d/dt (d ell / d vbar^i) - d ell / d xbar^i = 0

along its flow, with ``d/dt xbar = T pi (xdot)`` and ``d/dt vbar = F^i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .bundle import BundleChart, QuasiState, _vec, coords_to_quasi
from .errors import ConditioningError, DomainError, NonFiniteError, ValidationError

Coefficient = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

KINDS = ("primary", "gamma2", "gamma3", "geodesic_spray", "custom")


class StateDerivative(NamedTuple):
    xdot: np.ndarray
    vdot_base: np.ndarray
    vdot_vert: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.xdot, self.vdot_base, self.vdot_vert])


@dataclass(frozen=True, eq=False)
class BaseSODE:
    """SODE ``xddot^i = f^i(xbar, vbar)`` on the quotient manifold."""

    base_dim: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    coord_names: tuple[str, ...] = ()
    domain: Callable[[np.ndarray], "str | None"] | None = None
    name: str = "base"

    def __post_init__(self):
        names = tuple(self.coord_names) or tuple(f"x{i + 1}" for i in range(self.base_dim))
        if len(names) != self.base_dim:
            raise ValidationError("coord_names length must equal base_dim")
        object.__setattr__(self, "coord_names", names)

    def check_domain(self, xbar) -> np.ndarray:
        xbar = _vec(xbar)
        if xbar.shape != (self.base_dim,):
            raise ValidationError(f"expected {self.base_dim} base coordinates, got {xbar.shape[0]}")
        if not np.all(np.isfinite(xbar)):
            raise DomainError(f"{self.name}: non-finite coordinates {xbar}")
        if self.domain is not None:
            problem = self.domain(xbar)
            if problem:
                raise DomainError(f"{self.name}: {problem}")
        return xbar

    def __call__(self, xbar, vbar) -> np.ndarray:
        xbar = self.check_domain(xbar)
        out = _vec(self.f(xbar, _vec(vbar))) if self.base_dim else np.zeros(0)
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"{self.name}: non-finite coefficients at x={xbar}")
        return out


def eval_base(sode: BaseSODE, s: QuasiState) -> StateDerivative:
    """Derivative of a base state: ``(vbar, f(xbar, vbar), [])``."""
    return StateDerivative(s.v_base.copy(), sode(s.x, s.v_base), np.zeros(0))


@dataclass(frozen=True, eq=False)
class TotalSODE:
    """SODE on the total space given by its coefficients ``F^i`` and ``F^a``."""

    chart: BundleChart
    F_base: Coefficient
    F_vert: Coefficient
    kind: str = "custom"
    name: str = ""
    base_sode: BaseSODE | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown SODE kind {self.kind!r}; expected one of {KINDS}")


@dataclass(frozen=True, eq=False)
class RawField:
    """Arbitrary vector field on the tangent bundle, not necessarily a SODE."""

    chart: BundleChart
    rhs: Callable[[QuasiState], StateDerivative]
    name: str = "raw"


def eval_sode(sode: TotalSODE, s: QuasiState) -> StateDerivative:
    """Evolution rule ``(Z(x) v, F^i, F^a)`` at the state ``s``."""
    chart = sode.chart
    x = chart.check_domain(s.x)
    xdot = chart.frame(x) @ s.v
    fb = _vec(sode.F_base(x, s.v_base, s.v_vert)) if chart.base_dim else np.zeros(0)
    fv = _vec(sode.F_vert(x, s.v_base, s.v_vert)) if chart.fiber_dim else np.zeros(0)
    if fb.shape != (chart.base_dim,) or fv.shape != (chart.fiber_dim,):
        raise ValidationError(f"{sode.name or sode.kind}: coefficient shapes {fb.shape}, {fv.shape} do not match chart")
    if not (np.all(np.isfinite(fb)) and np.all(np.isfinite(fv))):
        raise NonFiniteError(f"{sode.name or sode.kind}: non-finite coefficients at {s.to_dict()}")
    return StateDerivative(xdot, fb, fv)


def evaluate(field, s: QuasiState) -> StateDerivative:
    """Evaluate a ``TotalSODE``, ``RawField`` or ``BaseSODE`` at ``s``."""
    if isinstance(field, TotalSODE):
        return eval_sode(field, s)
    if isinstance(field, RawField):
        field.chart.check_domain(s.x)
        return field.rhs(s)
    if isinstance(field, BaseSODE):
        return eval_base(field, s)
    raise TypeError(f"cannot evaluate {type(field).__name__}")


def x_omega(chart: BundleChart, s: QuasiState) -> np.ndarray:
    """Base-point part of ``X_omega = v^a E~_a^C``: the vector ``v^a E~_a(x)``."""
    x = chart.check_domain(s.x)
    return chart.vertical_frame(x) @ s.v_vert


def omega_part(field, s: QuasiState) -> np.ndarray:
    """Coordinate vector ``c^a E~_a`` where ``c^a`` is the ``E~_a^C`` coefficient of ``field``.

    This is the base-point part of ``Omega(field)``; for every SODE it equals
    :func:`x_omega` regardless of the field.
    """
    chart = field.chart
    d = evaluate(field, s)
    _, c = coords_to_quasi(chart, s.x, d.xdot)
    return chart.vertical_frame(s.x) @ c


def vilms_horizontal_lift(base: BaseSODE, chart: BundleChart) -> RawField:
    """``Gammabar^H = v^i X_i^C + f^i X_i^V``: projects correctly but is not a SODE on M."""
    _check_dims(base, chart)

    def rhs(s: QuasiState) -> StateDerivative:
        x = s.x
        xdot = chart.horizontal_frame(x) @ s.v_base
        return StateDerivative(xdot, base(chart.projection(x), s.v_base), np.zeros(chart.fiber_dim))

    return RawField(chart, rhs, name="vilms_horizontal_lift")


def _check_dims(base: BaseSODE, chart: BundleChart) -> None:
    if base.base_dim != chart.base_dim:
        raise ValidationError(f"base SODE has dimension {base.base_dim}, chart base has {chart.base_dim}")


def primary_unreduction(base: BaseSODE, chart: BundleChart) -> TotalSODE:
    """Primary un-reduced SODE ``Gamma_1 = Gammabar^H + X_omega``.

    ``F^i(x, v) = f^i(pi(x), v^i)`` and ``F^a = 0``.
    """
    _check_dims(base, chart)
    k = chart.fiber_dim

    def F_base(x, vb, vv):
        return base(chart.projection(x), vb)

    def F_vert(x, vb, vv):
        return np.zeros(k)

    return TotalSODE(chart, F_base, F_vert, kind="primary", name="primary", base_sode=base)


def gamma2(primary: TotalSODE, V: Coefficient, name: str = "gamma2") -> TotalSODE:
    """``Gamma_2 = Gamma_1 + V^a E~_a^V``: same base coefficients, vertical ones set to ``V``."""
    if primary.kind != "primary":
        raise ValidationError(f"gamma2 needs a primary SODE, got kind {primary.kind!r}")
    return TotalSODE(primary.chart, primary.F_base, V, kind="gamma2", name=name, base_sode=primary.base_sode)


def gamma3(
    chart: BundleChart,
    base: BaseSODE,
    F_base: Coefficient,
    F_vert: Coefficient,
    samples: Iterable[QuasiState],
    tol: float = 1e-12,
    name: str = "gamma3",
) -> TotalSODE:
    """SODE agreeing with the primary one on the horizontal distribution.

    Validates on ``samples`` (with ``v^a`` zeroed) that ``F^a = 0`` and
    ``F^i = f^i``; raises ``ValidationError`` naming the worst sample otherwise.
    """
    _check_dims(base, chart)
    worst, worst_state = 0.0, None
    count = 0
    for s in samples:
        h = QuasiState(s.x, s.v_base, np.zeros(chart.fiber_dim))
        x = chart.check_domain(h.x)
        fb = _vec(F_base(x, h.v_base, h.v_vert)) if chart.base_dim else np.zeros(0)
        fv = _vec(F_vert(x, h.v_base, h.v_vert)) if chart.fiber_dim else np.zeros(0)
        ref = base(chart.projection(x), h.v_base)
        dev = max(np.max(np.abs(fb - ref), initial=0.0), np.max(np.abs(fv), initial=0.0))
        count += 1
        if worst_state is None or dev > worst:
            worst, worst_state = float(dev), h
    if count == 0:
        raise ValidationError("gamma3 needs at least one sample state")
    if worst > tol:
        raise ValidationError(
            f"horizontal-slice mismatch {worst:.3e} > {tol:.1e} at {worst_state.to_dict()}"
        )
    return TotalSODE(chart, F_base, F_vert, kind="gamma3", name=name, base_sode=base)


@dataclass(frozen=True)
class Residual:
    """Worst-case deviation of a sampled check."""

    max_residual: float
    worst_state: QuasiState | None
    samples_used: int

    def passed(self, tol: float) -> bool:
        return self.max_residual <= tol


def _worst(values: Iterable[tuple[float, QuasiState]]) -> Residual:
    worst, worst_state, count = 0.0, None, 0
    for value, s in values:
        count += 1
        if worst_state is None or value > worst or np.isnan(value):
            worst, worst_state = float(value), s
    return Residual(worst, worst_state, count)


def sode_condition_check(field, samples: Iterable[QuasiState]) -> Residual:
    """Deviation of the ``(Z_A^C)`` coefficients of ``field`` from ``v^A``.

    The coefficients are recovered from the evaluated ``xdot`` with
    :func:`coords_to_quasi`; a SODE reproduces the quasi-velocities of the
    state, so the vertical part is exactly the ``Omega``-condition.
    """
    chart = field.chart

    def deviations():
        for s in samples:
            d = evaluate(field, s)
            vb, vv = coords_to_quasi(chart, s.x, d.xdot)
            dev = max(np.max(np.abs(vb - s.v_base), initial=0.0), np.max(np.abs(vv - s.v_vert), initial=0.0))
            yield float(dev), s

    return _worst(deviations())


@dataclass(frozen=True, eq=False)
class LagrangianData:
    """Base Lagrangian ``ell`` with optional vertical form ``B_ab`` and base metric."""

    ell: Callable[[np.ndarray, np.ndarray], float]
    base_dim: int
    vertical_form: np.ndarray | None = None
    base_metric: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.vertical_form is not None:
            B = np.atleast_2d(np.asarray(self.vertical_form, dtype=float))
            if B.shape[0] != B.shape[1] or not np.array_equal(B, B.T):
                raise ValidationError("vertical form B must be a symmetric square matrix")
            object.__setattr__(self, "vertical_form", B)


def _second_step(fd_step: float) -> float:
    # Richardson-extrapolated second differences have truncation O(h^4) and
    # round-off O(eps/h^2); the two balance near h = eps**(1/6).
    return max(fd_step, np.finfo(float).eps ** (1.0 / 6.0))


def _second_difference(fun, z: np.ndarray, p: np.ndarray, q: np.ndarray, h: float) -> float:
    """``d2 fun / dp dq`` at ``z``: four-point central difference, one Richardson step."""

    def d2(step):
        return (
            fun(z + step * (p + q)) - fun(z + step * (p - q)) - fun(z - step * (p - q)) + fun(z - step * (p + q))
        ) / (4.0 * step * step)

    return (4.0 * d2(h) - d2(2.0 * h)) / 3.0


def lagrangian_derivatives(lag: LagrangianData, xbar, vbar, fd_step: float = 1e-5):
    """Finite-difference ``(d ell/d x, d2 ell/d v d v, d2 ell/d v d x)``.

    ``H_vx[i, j] = d2 ell / d v^i d x^j``.  First derivatives use central
    differences at ``fd_step``; second derivatives use Richardson-extrapolated
    central differences at ``max(fd_step, eps**(1/6))``.
    """
    xbar, vbar = _vec(xbar), _vec(vbar)
    n = lag.base_dim
    h1, h2 = fd_step, _second_step(fd_step)
    eye = np.eye(2 * n)
    z = np.concatenate([xbar, vbar])

    def fun(y):
        return float(lag.ell(y[:n], y[n:]))

    g_x = np.array([(fun(z + h1 * eye[j]) - fun(z - h1 * eye[j])) / (2 * h1) for j in range(n)])
    H_vv = np.empty((n, n))
    H_vx = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            H_vv[i, j] = _second_difference(fun, z, eye[n + i], eye[n + j], h2)
            H_vx[i, j] = _second_difference(fun, z, eye[n + i], eye[j], h2)
    return g_x, 0.5 * (H_vv + H_vv.T), H_vx


def base_sode_from_lagrangian(
    lag: LagrangianData,
    fd_step: float = 1e-5,
    coord_names: Sequence[str] = (),
    domain=None,
    max_condition: float = 1e12,
) -> BaseSODE:
    """Normal form of the Euler-Lagrange equations of ``ell``.

    Solves ``H_vv f = d ell/d x - H_vx vbar`` at every evaluation.
    """

    def f(xbar, vbar):
        g_x, H_vv, H_vx = lagrangian_derivatives(lag, xbar, vbar, fd_step)
        cond = float(np.linalg.cond(H_vv))
        if not np.isfinite(cond) or cond > max_condition:
            raise ConditioningError(f"Lagrangian is not regular at x={xbar}, v={vbar}", cond)
        return np.linalg.solve(H_vv, g_x - H_vx @ vbar)

    return BaseSODE(lag.base_dim, f, tuple(coord_names), domain, name="euler_lagrange")


def lagrangian_residual(sode, lag: LagrangianData, s: QuasiState, fd_step: float = 1e-5) -> np.ndarray:
    """Horizontal Euler-Lagrange residual of ``L^H`` along ``sode`` at ``s``.

    Returns ``H_vx xbardot + H_vv vbardot - d ell/d x`` with ``xbardot``
    obtained by pushing the evaluated ``xdot`` through ``T pi``.
    """
    chart = sode.chart
    d = evaluate(sode, s)
    xbar = chart.projection(s.x)
    xbar_dot = chart.projection_jacobian(s.x) @ d.xdot
    g_x, H_vv, H_vx = lagrangian_derivatives(lag, xbar, s.v_base, fd_step)
    return H_vx @ xbar_dot + H_vv @ d.vdot_base - g_x


def relative_lagrangian_residual(sode, lag: LagrangianData, s: QuasiState, fd_step: float = 1e-5) -> float:
    """Max-norm of :func:`lagrangian_residual` divided by ``max(1, size of its largest term)``.

    Finite-difference Hessians are accurate relative to the magnitude of
    ``ell``; this normalization makes the residual comparable across systems
    with large potentials or accelerations.
    """
    chart = sode.chart
    d = evaluate(sode, s)
    xbar = chart.projection(s.x)
    xbar_dot = chart.projection_jacobian(s.x) @ d.xdot
    g_x, H_vv, H_vx = lagrangian_derivatives(lag, xbar, s.v_base, fd_step)
    terms = (H_vx @ xbar_dot, H_vv @ d.vdot_base, g_x)
    scale = max([1.0] + [float(np.max(np.abs(t), initial=0.0)) for t in terms])
    return float(np.max(np.abs(terms[0] + terms[1] - terms[2]), initial=0.0)) / scale


@dataclass(frozen=True)
class SubmersiveReport:
    """Violations of G-invariance and of ``E~_b^V(F^i) = 0``."""

    invariance: Residual
    vertical: Residual

    @property
    def max_residual(self) -> float:
        return max(self.invariance.max_residual, self.vertical.max_residual)

    def passed(self, tol: float) -> bool:
        return self.invariance.max_residual <= tol and self.vertical.max_residual <= tol


def invariance_residual(sode: TotalSODE, s: QuasiState, fd_step: float = 1e-5) -> float:
    """Max violation of ``E~_a^C(F^i) = 0`` and ``E~_a^C(F^b) = -K^b_ac F^c``.

    ``E~_a^C`` moves ``x`` along ``E~_a`` and the vertical quasi-velocities by
    ``-K^b_ac v^c`` (base quasi-velocities are unchanged).  With ``K = -C``
    for a left action this is the familiar ``E~_a^C(F^b) = F^c C^b_ac``.
    """
    chart = sode.chart
    x = chart.check_domain(s.x)
    E = chart.vertical_frame(x)
    K = chart.vertical_brackets
    Fv = _vec(sode.F_vert(x, s.v_base, s.v_vert)) if chart.fiber_dim else np.zeros(0)
    worst = 0.0
    for a in range(chart.fiber_dim):
        dx = fd_step * E[:, a]
        dv = -fd_step * (K[:, a, :] @ s.v_vert)
        plus, minus = x + dx, x - dx
        chart.check_domain(plus)
        chart.check_domain(minus)
        dFb = (_vec(sode.F_base(plus, s.v_base, s.v_vert + dv)) - _vec(sode.F_base(minus, s.v_base, s.v_vert - dv))) / (
            2 * fd_step
        ) if chart.base_dim else np.zeros(0)
        dFv = (_vec(sode.F_vert(plus, s.v_base, s.v_vert + dv)) - _vec(sode.F_vert(minus, s.v_base, s.v_vert - dv))) / (
            2 * fd_step
        )
        worst = max(
            worst,
            float(np.max(np.abs(dFb), initial=0.0)),
            float(np.max(np.abs(dFv + K[:, a, :] @ Fv), initial=0.0)),
        )
    return worst


def vertical_dependence_residual(sode: TotalSODE, s: QuasiState, fd_step: float = 1e-5) -> float:
    """Max of ``|dF^i / dv^b|`` by central differences in the vertical quasi-velocities."""
    chart = sode.chart
    x = chart.check_domain(s.x)
    worst = 0.0
    if not chart.base_dim:
        return worst
    for b in range(chart.fiber_dim):
        e = np.zeros(chart.fiber_dim)
        e[b] = fd_step
        d = (_vec(sode.F_base(x, s.v_base, s.v_vert + e)) - _vec(sode.F_base(x, s.v_base, s.v_vert - e))) / (2 * fd_step)
        worst = max(worst, float(np.max(np.abs(d))))
    return worst


def submersive_check(sode: TotalSODE, samples: Sequence[QuasiState], fd_step: float = 1e-5) -> SubmersiveReport:
    """Sampled check of the two sufficient conditions for ``sode`` to project to a base SODE.

    (1) G-invariance of the coefficients; (2) ``F^i`` independent of ``v^a``.
    """
    samples = list(samples)
    return SubmersiveReport(
        invariance=_worst((invariance_residual(sode, s, fd_step), s) for s in samples),
        vertical=_worst((vertical_dependence_residual(sode, s, fd_step), s) for s in samples),
    )
