"""Shipped bundles, connections and SODEs, resolvable by string ID.

Registered IDs: ``so3-sphere``, ``wong-so3``, ``glplus-2``, ``glplus-3``,
``canonical-so3`` and ``flat-product``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import groups
from .bundle import BundleChart, QuasiState, _vec, coords_to_quasi
from .errors import CapabilityError, ConditioningError, UnknownSystemError, ValidationError
from .sode import (
    BaseSODE,
    LagrangianData,
    TotalSODE,
    eval_sode,
    gamma2,
    primary_unreduction,
)

Sampler = Callable[[np.random.Generator], QuasiState]


@dataclass(frozen=True, eq=False)
class Scenario:
    """Initial state and horizon used for sweeps and CLI defaults."""

    state: QuasiState
    t_end: float


@dataclass(frozen=True, eq=False)
class SystemBundle:
    id: str
    chart: BundleChart
    base_sode: BaseSODE
    primary: TotalSODE
    sampler: Sampler
    default_box: dict
    extras: dict[str, TotalSODE] = field(default_factory=dict)
    lagrangian: LagrangianData | None = None
    exact: Callable[[QuasiState, float], QuasiState] | None = None
    scenario: Scenario | None = None
    references: tuple[str, ...] = ()

    def sode(self, selector: str):
        """Resolve a selector (``base``, ``primary`` or an extras key)."""
        if selector == "base":
            return self.base_sode
        if selector == "primary":
            return self.primary
        if selector in self.extras:
            return self.extras[selector]
        choices = ["base", "primary", *self.extras]
        raise ValidationError(f"system {self.id!r} has no SODE {selector!r}; choose from {choices}")

    @property
    def selectors(self) -> list[str]:
        return ["base", "primary", *self.extras]

    def samples(self, n: int, seed: int = 0) -> list[QuasiState]:
        rng = np.random.default_rng(seed)
        return [self.sampler(rng) for _ in range(n)]

    def descriptor(self) -> dict:
        c = self.chart
        return {
            "id": self.id,
            "base_dim": c.base_dim,
            "fiber_dim": c.fiber_dim,
            "coord_dim": c.coord_dim,
            "group": c.group.name,
            "coord_names": list(c.coord_names),
            "base_names": list(c.base_names),
            "velocity_names": list(c.velocity_names),
            "sodes": self.selectors,
            "default_box": self.default_box,
            "has_exact_solution": self.exact is not None,
            "references": list(self.references),
        }


def _theta_domain(theta_min: float, index: int):
    def check(x):
        theta = x[index]
        if not theta_min <= theta <= np.pi - theta_min:
            return f"theta={theta:.6g} outside [{theta_min:.3g}, pi-{theta_min:.3g}]"
        return None

    return check


# --- SO(3) -> S^2 with connection d psi + cos(theta) d phi ------------------


def so3_sphere_chart(theta_min: float = 1e-3) -> BundleChart:
    """Euler-angle chart ``(psi, theta, phi)`` of SO(3) as a circle bundle over S^2.

    Frame: ``X_1 = d/dtheta``, ``X_2 = d/dphi - cos(theta) d/dpsi``,
    ``E~ = d/dpsi``; quasi-velocities ``(v1, v2, w)`` with
    ``w = psidot + cos(theta) phidot``.
    """

    def frame(x):
        c = np.cos(x[1])
        return np.array([[0.0, -c, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])

    def curvature(x):
        s = np.sin(x[1])
        return np.array([[[0.0, s], [-s, 0.0]]])

    proj_jac = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return BundleChart(
        name="so3-sphere",
        base_dim=2,
        group=groups.abelian(("w",), name="circle"),
        coord_names=("psi", "theta", "phi"),
        base_names=("theta", "phi"),
        velocity_names=("v1", "v2", "w"),
        frame=frame,
        curvature=curvature,
        projection=lambda x: np.array([x[1], x[2]]),
        projection_jacobian=lambda x: proj_jac,
        action=lambda alpha, x: _vec(x) + np.array([float(np.ravel(alpha)[0]), 0.0, 0.0]),
        domain=_theta_domain(theta_min, 1),
        vertical_brackets=np.zeros((1, 1, 1)),
        base_domain=_theta_domain(theta_min, 0),
    )


def sphere_geodesic_sode(theta_min: float = 1e-3) -> BaseSODE:
    """Geodesic spray of the round metric ``dtheta^2 + sin^2(theta) dphi^2``."""

    def f(xb, vb):
        th = xb[0]
        v1, v2 = vb
        return np.array([np.sin(th) * np.cos(th) * v2 * v2, -2.0 * v1 * v2 / np.tan(th)])

    return BaseSODE(2, f, ("theta", "phi"), _theta_domain(theta_min, 0), name="sphere_geodesic")


def sphere_lagrangian(B: float | None = None) -> LagrangianData:
    return LagrangianData(
        ell=lambda xb, vb: 0.5 * (vb[0] ** 2 + np.sin(xb[0]) ** 2 * vb[1] ** 2),
        base_dim=2,
        vertical_form=None if B is None else np.array([[B]]),
        base_metric=lambda xb: np.diag([1.0, np.sin(xb[0]) ** 2]),
    )


def _sphere_sampler(theta_margin: float = 0.3, speed: float = 2.0, pole_clearance: float = 0.05) -> Sampler:
    # Rejects states whose base great circle comes within pole_clearance of a pole.
    def sample(rng):
        while True:
            psi, phi = rng.uniform(-np.pi, np.pi, size=2)
            theta = rng.uniform(theta_margin, np.pi - theta_margin)
            v1, v2, w = rng.uniform(-speed, speed, size=3)
            norm = np.hypot(v1, np.sin(theta) * v2)
            if norm == 0.0 or abs(np.sin(theta) ** 2 * v2) / norm > np.sin(pole_clearance):
                return QuasiState([psi, theta, phi], [v1, v2], [w])

    return sample


_SPHERE_BOX = {
    "psi": [-np.pi, np.pi],
    "theta": [0.3, np.pi - 0.3],
    "phi": [-np.pi, np.pi],
    "velocities": [-2.0, 2.0],
    "rejected": "states whose base geodesic passes within 0.05 rad of a pole",
}


def make_so3_sphere(theta_min: float = 1e-3) -> SystemBundle:
    chart = so3_sphere_chart(theta_min)
    base = sphere_geodesic_sode(theta_min)
    primary = primary_unreduction(base, chart)
    damped = gamma2(primary, lambda x, vb, vv: -vv, name="damped")
    return SystemBundle(
        id="so3-sphere",
        chart=chart,
        base_sode=base,
        primary=primary,
        sampler=_sphere_sampler(),
        default_box=_SPHERE_BOX,
        extras={"gamma2:damped": damped},
        lagrangian=sphere_lagrangian(),
        scenario=Scenario(QuasiState([0.0, np.pi / 2, 0.0], [0.5, 8.0], [1.0]), 1.0),
        references=(
            "principal circle bundle SO(3) -> S^2, (psi, theta, phi) -> (theta, phi)",
            "connection form d psi + cos(theta) d phi",
            "curvature [X_theta, X_phi] = sin(theta) E~",
        ),
    )


def wong_spray(chart: BundleChart, B: float) -> TotalSODE:
    """Geodesic spray of ``theta'^2 + sin^2 theta phi'^2 + B (psi' + cos theta phi')^2``.

    Written in quasi-velocities; the vertical coefficient vanishes, i.e. the
    momentum ``B w`` is conserved.
    """

    def F_base(x, vb, vv):
        th = x[1]
        v1, v2 = vb
        w = vv[0]
        s, c = np.sin(th), np.cos(th)
        return np.array([s * c * v2 * v2 - B * s * v2 * w, -2.0 * (c / s) * v1 * v2 + (B / s) * v1 * w])

    return TotalSODE(chart, F_base, lambda x, vb, vv: np.zeros(1), kind="geodesic_spray", name="wong_spray")


def make_wong_so3(B: float = 1.0, theta_min: float = 1e-3) -> SystemBundle:
    if not B > 0:
        raise ValidationError("Wong coupling B must be positive")
    base_system = make_so3_sphere(theta_min)
    chart = base_system.chart
    return SystemBundle(
        id="wong-so3",
        chart=chart,
        base_sode=base_system.base_sode,
        primary=base_system.primary,
        sampler=base_system.sampler,
        default_box=_SPHERE_BOX,
        extras={"wong_spray": wong_spray(chart, B)},
        lagrangian=sphere_lagrangian(B),
        scenario=base_system.scenario,
        references=base_system.references + (f"bi-invariant fiber metric B = {B}",),
    )


def curvature_distortion(chart: BundleChart, metric: Callable[[np.ndarray], np.ndarray], B, s: QuasiState) -> np.ndarray:
    """``A^k = -gbar^{ik} B_ab R^a_ij v^b v^j``: the difference between the Wong spray and the primary SODE."""
    x = chart.check_domain(s.x)
    g = np.atleast_2d(metric(chart.projection(x)))
    cond = float(np.linalg.cond(g))
    if not np.isfinite(cond) or cond > chart.max_condition:
        raise ConditioningError("base metric is singular", cond)
    ginv = np.linalg.inv(g)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    R = chart.curvature(x)
    return -np.einsum("ik,ab,aij,b,j->k", ginv, B, R, s.v_vert, s.v_base)


# --- GL+(n) -> R+ via the determinant ---------------------------------------


def glplus_chart(n: int, det_min: float = 1e-8) -> BundleChart:
    """Matrix-entry chart of GL+(n) as an SL(n)-bundle over R+ (``pi = det``).

    Frame: ``X = A / (n det A)`` (horizontal lift of ``d/dx``) and the
    left-invariant fields ``A E_a`` of the sl(n) basis.  SL(n) acts on the
    right, so ``[E~_a, E~_b] = C^c_ab E~_c``.
    """
    if n < 2:
        raise ValidationError("GL+(n) bundle needs n >= 2")
    group = groups.sl(n)
    basis = group.realization.basis

    def frame(a):
        A = a.reshape(n, n)
        cols = [(A / (n * np.linalg.det(A))).ravel()] + [(A @ E).ravel() for E in basis]
        return np.array(cols).T

    def domain(a):
        d = np.linalg.det(a.reshape(n, n))
        if not d > det_min:
            return f"det(A)={d:.6g} not above {det_min:.1e}"
        return None

    def proj_jac(a):
        A = a.reshape(n, n)
        return (np.linalg.det(A) * np.linalg.inv(A).T).reshape(1, n * n)

    k = group.fiber_dim
    return BundleChart(
        name=f"glplus-{n}",
        base_dim=1,
        group=group,
        coord_names=tuple(f"a{i + 1}{j + 1}" for i in range(n) for j in range(n)),
        base_names=("x",),
        velocity_names=("xdot",) + group.basis_names,
        frame=frame,
        curvature=lambda a: np.zeros((k, 1, 1)),
        projection=lambda a: np.array([np.linalg.det(a.reshape(n, n))]),
        projection_jacobian=proj_jac,
        action=lambda g, a: (a.reshape(n, n) @ np.asarray(g)).ravel(),
        domain=domain,
        vertical_brackets=group.structure_constants,
        base_domain=lambda xb: None if xb[0] > 0 else f"x={xb[0]:.6g} not positive",
    )


def rplus_canonical_sode() -> BaseSODE:
    """Canonical spray of the multiplicative group: ``xddot = xdot^2 / x``."""
    return BaseSODE(
        1,
        lambda xb, vb: np.array([vb[0] ** 2 / xb[0]]),
        ("x",),
        lambda xb: None if xb[0] > 0 else f"x={xb[0]:.6g} not positive",
        name="rplus_canonical",
    )


def glplus_canonical_spray(chart: BundleChart) -> TotalSODE:
    """Canonical spray of GL+(n), derived from ``d/dt (A^-1 Adot) = 0`` and re-expressed in the bundle frame.

    Independent of the un-reduction construction: the coordinate
    acceleration ``Addot = Adot A^-1 Adot`` is converted to quasi-velocity
    rates by removing the frame-variation term and solving with ``Z``.
    """
    n = int(round(np.sqrt(chart.coord_dim)))
    basis = chart.group.realization.basis

    def rates(a, vb, vv):
        A = a.reshape(n, n)
        Z = chart.frame(a)
        Adot = (Z @ np.concatenate([vb, vv])).reshape(n, n)
        Ainv = np.linalg.inv(A)
        Addot = Adot @ Ainv @ Adot
        det = np.linalg.det(A)
        S = np.tensordot(vv, basis, axes=1)
        # d/dt of Z(A(t)) u with u held fixed
        frame_rate = (vb[0] / n) * (Adot / det - A * np.trace(Ainv @ Adot) / det) + Adot @ S
        ub, uv = coords_to_quasi(chart, a, (Addot - frame_rate).ravel())
        return ub, uv

    return TotalSODE(
        chart,
        lambda a, vb, vv: rates(a, vb, vv)[0],
        lambda a, vb, vv: rates(a, vb, vv)[1],
        kind="geodesic_spray",
        name="canonical",
    )


def glplus_exact(n: int) -> Callable[[QuasiState, float], QuasiState]:
    """Closed-form primary flow: ``A(t) = A0 expm(t xi)``, ``xi = (xdot/(n x)) Id + v^a E_a``."""
    group = groups.sl(n)

    def exact(s0: QuasiState, t: float) -> QuasiState:
        A0 = s0.x.reshape(n, n)
        x0 = np.linalg.det(A0)
        rate = s0.v_base[0] / x0
        xi = (rate / n) * np.eye(n) + group.realization.hat(s0.v_vert)
        A = A0 @ _expm(t * xi)
        return QuasiState(A.ravel(), [s0.v_base[0] * np.exp(rate * t)], s0.v_vert)

    return exact


def _expm(M):
    import scipy.linalg

    return scipy.linalg.expm(M)


def _glplus_sampler(n: int) -> Sampler:
    def sample(rng):
        A = _expm(rng.uniform(-0.4, 0.4, size=(n, n)))
        v = rng.uniform(-2.0, 2.0, size=n * n)
        return QuasiState(A.ravel(), v[:1], v[1:])

    return sample


def make_glplus(n: int) -> SystemBundle:
    if n < 2:
        raise ValidationError("make_glplus needs n >= 2")
    chart = glplus_chart(n)
    base = rplus_canonical_sode()
    primary = primary_unreduction(base, chart)
    k = chart.fiber_dim
    return SystemBundle(
        id=f"glplus-{n}",
        chart=chart,
        base_sode=base,
        primary=primary,
        sampler=_glplus_sampler(n),
        default_box={"A": "expm(M), M entries in [-0.4, 0.4]", "velocities": [-2.0, 2.0]},
        extras={"canonical": glplus_canonical_spray(chart)},
        lagrangian=LagrangianData(ell=lambda xb, vb: 0.5 * vb[0] ** 2 / xb[0] ** 2, base_dim=1),
        exact=glplus_exact(n),
        scenario=Scenario(QuasiState(np.eye(n).ravel(), [5.0], np.linspace(-1.0, 1.0, k)), 1.0),
        references=(
            "principal SL(n)-bundle det: GL+(n) -> R+",
            "splitting gl(n) = sl(n) + <Id> orthogonal for trace(A B^T)",
            "horizontal lift of lambda at A is (lambda / (n det A)) A",
        ),
    )


# --- canonical spray on a matrix Lie group -----------------------------------


def group_chart(group: groups.GroupModel, det_min: float = 1e-8) -> BundleChart:
    """Matrix-entry chart of a matrix group viewed as a bundle over a point.

    The frame consists of the left-invariant fields ``A E_a``; the group acts
    on itself on the right.  For groups of lower dimension than ``m^2`` the
    chart is embedded.
    """
    if group.realization is None:
        raise CapabilityError(f"group {group.name!r} has no matrix realization")
    m = group.realization.dim
    basis = group.realization.basis
    k = group.fiber_dim

    def frame(a):
        A = a.reshape(m, m)
        return np.array([(A @ E).ravel() for E in basis]).T

    def domain(a):
        d = np.linalg.det(a.reshape(m, m))
        if not d > det_min:
            return f"det={d:.6g} not above {det_min:.1e}"
        return None

    return BundleChart(
        name=f"group-{group.name}",
        base_dim=0,
        group=group,
        coord_names=tuple(f"a{i + 1}{j + 1}" for i in range(m) for j in range(m)),
        base_names=(),
        velocity_names=group.basis_names,
        frame=frame,
        curvature=lambda a: np.zeros((k, 0, 0)),
        projection=lambda a: np.zeros(0),
        projection_jacobian=lambda a: np.zeros((0, m * m)),
        action=lambda g, a: (a.reshape(m, m) @ np.asarray(g)).ravel(),
        domain=domain,
        vertical_brackets=group.structure_constants,
    )


POINT_SODE = BaseSODE(0, lambda xb, vb: np.zeros(0), (), name="point")


def make_canonical_spray(group: groups.GroupModel) -> TotalSODE:
    """Canonical spray ``Gamma_G`` of a matrix group over its matrix-entry chart.

    Its connection coefficients in the left-invariant frame are skew, so all
    quasi-velocity rates vanish and base curves are ``g exp(t zeta)``.  It is
    the primary un-reduction of the (trivial) spray on ``G / G``.
    """
    chart = group_chart(group)
    return primary_unreduction(POINT_SODE, chart)


def make_canonical_so3() -> SystemBundle:
    group = groups.so3()
    primary = make_canonical_spray(group)
    chart = primary.chart

    def exact(s0, t):
        A = s0.x.reshape(3, 3) @ groups.rodrigues(t * s0.v_vert)
        return QuasiState(A.ravel(), [], s0.v_vert)

    def sample(rng):
        A = groups.rodrigues(rng.uniform(-np.pi / 2, np.pi / 2, size=3))
        return QuasiState(A.ravel(), [], rng.uniform(-2.0, 2.0, size=3))

    return SystemBundle(
        id="canonical-so3",
        chart=chart,
        base_sode=POINT_SODE,
        primary=primary,
        sampler=sample,
        default_box={"A": "rodrigues(r), r in [-pi/2, pi/2]^3", "velocities": [-2.0, 2.0]},
        extras={"canonical": primary},
        exact=exact,
        scenario=Scenario(QuasiState(np.eye(3).ravel(), [], [3.0, -6.0, 9.0]), 1.0),
        references=("canonical connection nabla_X Y = [X, Y] / 2 on left-invariant fields",),
    )


# --- flat product bundle -------------------------------------------------------


def make_flat_product(omega: float = 2.0 * np.pi) -> SystemBundle:
    """Trivial bundle ``R^2 x R -> R^2`` with the flat connection and an isotropic oscillator."""
    group = groups.abelian(("w",), name="line")
    eye = np.eye(3)
    chart = BundleChart(
        name="flat-product",
        base_dim=2,
        group=group,
        coord_names=("x1", "x2", "s"),
        base_names=("x1", "x2"),
        velocity_names=("v1", "v2", "w"),
        frame=lambda x: eye,
        curvature=lambda x: np.zeros((1, 2, 2)),
        projection=lambda x: np.array([x[0], x[1]]),
        projection_jacobian=lambda x: eye[:2],
        action=lambda a, x: _vec(x) + np.array([0.0, 0.0, float(np.ravel(a)[0])]),
        domain=lambda x: None,
        vertical_brackets=np.zeros((1, 1, 1)),
    )
    base = BaseSODE(2, lambda xb, vb: -(omega**2) * xb, ("x1", "x2"), name="oscillator")
    primary = primary_unreduction(base, chart)

    def exact(s0, t):
        c, s = np.cos(omega * t), np.sin(omega * t)
        xb0, vb0 = s0.x[:2], s0.v_base
        xb = xb0 * c + vb0 * s / omega
        vb = -xb0 * omega * s + vb0 * c
        return QuasiState([xb[0], xb[1], s0.x[2] + s0.v_vert[0] * t], vb, s0.v_vert)

    def sample(rng):
        return QuasiState(rng.uniform(-2, 2, size=3), rng.uniform(-2, 2, size=2), rng.uniform(-2, 2, size=1))

    return SystemBundle(
        id="flat-product",
        chart=chart,
        base_sode=base,
        primary=primary,
        sampler=sample,
        default_box={"coordinates": [-2.0, 2.0], "velocities": [-2.0, 2.0]},
        extras={"gamma2:drift": gamma2(primary, lambda x, vb, vv: np.array([0.5]), name="drift")},
        lagrangian=LagrangianData(
            ell=lambda xb, vb: 0.5 * float(vb @ vb) - 0.5 * omega**2 * float(xb @ xb),
            base_dim=2,
            base_metric=lambda xb: np.eye(2),
        ),
        exact=exact,
        scenario=Scenario(QuasiState([1.0, 0.0, 0.0], [0.0, 2.0], [1.0]), 1.0),
        references=("flat connection on a product bundle: zero curvature",),
    )


# --- registry --------------------------------------------------------------------

_FACTORIES: dict[str, Callable[[], SystemBundle]] = {
    "so3-sphere": make_so3_sphere,
    "wong-so3": make_wong_so3,
    "glplus-2": lambda: make_glplus(2),
    "glplus-3": lambda: make_glplus(3),
    "canonical-so3": make_canonical_so3,
    "flat-product": make_flat_product,
}

SYSTEM_IDS = tuple(_FACTORIES)


def check_registration(system: SystemBundle, n_samples: int = 100, seed: int = 12345) -> None:
    """Re-derive the primary SODE from ``(base_sode, chart)`` and compare on samples."""
    rederived = primary_unreduction(system.base_sode, system.chart)
    for s in system.samples(n_samples, seed):
        a = eval_sode(system.primary, s).as_vector()
        b = eval_sode(rederived, s).as_vector()
        if not np.array_equal(a, b):
            raise ValidationError(f"{system.id}: registered primary differs from re-derived one at {s.to_dict()}")


@functools.lru_cache(maxsize=None)
def get_system(system_id: str) -> SystemBundle:
    try:
        factory = _FACTORIES[system_id]
    except KeyError:
        raise UnknownSystemError(f"unknown system {system_id!r}; registered: {', '.join(SYSTEM_IDS)}") from None
    system = factory()
    check_registration(system)
    return system


def all_systems() -> list[SystemBundle]:
    return [get_system(i) for i in SYSTEM_IDS]
