"""Coordinate model of a principal bundle chart.

A chart carries an invariant frame ``{X_i, E~_a}``: the ``X_i`` are the
horizontal lifts of the base coordinate fields and the ``E~_a`` are the
fundamental vector fields of the group action.  The connection is encoded
implicitly as the horizontal/vertical split of this frame.  Coordinate
velocities and quasi-velocities are related by ``xdot = Z(x) @ v`` where the
columns of ``Z(x)`` are the frame fields.

Charts whose coordinates are the entries of a matrix group (``coord_dim``
larger than ``base_dim + fiber_dim``) are *embedded*: ``Z`` is then a tall
matrix of full column rank and conversions back to quasi-velocities use a
least-squares solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .errors import ConditioningError, DomainError, NonFiniteError, ValidationError
from .groups import GroupModel

DomainCheck = Callable[[np.ndarray], "str | None"]


def _vec(a) -> np.ndarray:
    return np.atleast_1d(np.asarray(a, dtype=float)).ravel()


@dataclass(frozen=True, eq=False)
class QuasiState:
    """Point ``x`` on the total space plus quasi-velocities ``(v^i, v^a)``."""

    x: np.ndarray
    v_base: np.ndarray
    v_vert: np.ndarray

    def __post_init__(self):
        for name in ("x", "v_base", "v_vert"):
            arr = _vec(getattr(self, name))
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"state component {name} is not finite: {arr}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def v(self) -> np.ndarray:
        return np.concatenate([self.v_base, self.v_vert])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.v_base, self.v_vert])

    @classmethod
    def from_vector(cls, y, dim: int, n: int) -> "QuasiState":
        y = np.asarray(y, dtype=float)
        return cls(y[:dim], y[dim : dim + n], y[dim + n :])

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "v_base": self.v_base.tolist(), "v_vert": self.v_vert.tolist()}


@dataclass(frozen=True, eq=False)
class BundleChart:
    """Concrete chart of a principal bundle ``M -> M/G``.

    ``vertical_brackets[c, a, b]`` are the constants ``K`` in
    ``[E~_a, E~_b] = K^c_ab E~_c``; they equal ``-C`` for a left action and
    ``+C`` for a right action realized by left-invariant fields.
    """

    name: str
    base_dim: int
    group: GroupModel
    coord_names: tuple[str, ...]
    base_names: tuple[str, ...]
    velocity_names: tuple[str, ...]
    frame: Callable[[np.ndarray], np.ndarray]
    curvature: Callable[[np.ndarray], np.ndarray]
    projection: Callable[[np.ndarray], np.ndarray]
    projection_jacobian: Callable[[np.ndarray], np.ndarray]
    action: Callable[[Any, np.ndarray], np.ndarray]
    domain: DomainCheck
    vertical_brackets: np.ndarray
    base_domain: DomainCheck | None = None
    max_condition: float = 1e12

    def __post_init__(self):
        for attr in ("coord_names", "base_names", "velocity_names"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        K = np.asarray(self.vertical_brackets, dtype=float)
        object.__setattr__(self, "vertical_brackets", K)
        k = self.fiber_dim
        if len(self.base_names) != self.base_dim:
            raise ValidationError("base_names length must equal base_dim")
        if len(self.velocity_names) != self.base_dim + k:
            raise ValidationError("velocity_names length must equal base_dim + fiber_dim")
        if self.coord_dim < self.base_dim + k:
            raise ValidationError("fewer coordinates than frame fields")
        if K.shape != (k, k, k):
            raise ValidationError(f"vertical_brackets must have shape {(k, k, k)}")

    @property
    def fiber_dim(self) -> int:
        return self.group.fiber_dim

    @property
    def coord_dim(self) -> int:
        return len(self.coord_names)

    @property
    def quasi_dim(self) -> int:
        return self.base_dim + self.fiber_dim

    @property
    def embedded(self) -> bool:
        return self.coord_dim > self.quasi_dim

    def check_domain(self, x) -> np.ndarray:
        x = _vec(x)
        if x.shape != (self.coord_dim,):
            raise ValidationError(f"{self.name}: expected {self.coord_dim} coordinates, got {x.shape[0]}")
        if not np.all(np.isfinite(x)):
            raise DomainError(f"{self.name}: non-finite coordinates {x}")
        problem = self.domain(x)
        if problem:
            raise DomainError(f"{self.name}: {problem}")
        return x

    def horizontal_frame(self, x) -> np.ndarray:
        return self.frame(x)[:, : self.base_dim]

    def vertical_frame(self, x) -> np.ndarray:
        return self.frame(x)[:, self.base_dim :]


def frame_condition(chart: BundleChart, x) -> float:
    """2-norm condition number of ``Z(x)`` (ratio of extreme singular values)."""
    return float(np.linalg.cond(chart.frame(_vec(x))))


def quasi_to_coords(chart: BundleChart, s: QuasiState) -> np.ndarray:
    """Coordinate velocity ``xdot = Z(x) (v^i, v^a)``."""
    x = chart.check_domain(s.x)
    return chart.frame(x) @ s.v


def coords_to_quasi(chart: BundleChart, x, xdot) -> tuple[np.ndarray, np.ndarray]:
    """Quasi-velocities ``(v^i, v^a)`` of the coordinate velocity ``xdot`` at ``x``."""
    x = chart.check_domain(x)
    xdot = _vec(xdot)
    Z = chart.frame(x)
    cond = float(np.linalg.cond(Z))
    if not np.isfinite(cond) or cond > chart.max_condition:
        raise ConditioningError(f"{chart.name}: frame matrix is ill-conditioned at {x}", cond)
    if chart.embedded:
        v, *_ = np.linalg.lstsq(Z, xdot, rcond=None)
    else:
        v = np.linalg.solve(Z, xdot)
    return v[: chart.base_dim], v[chart.base_dim :]


def _frame_derivatives(chart: BundleChart, x: np.ndarray, fd_step: float) -> np.ndarray:
    """dZ[B] = dZ/dx^B by central differences, shape (coord_dim, coord_dim, quasi_dim)."""
    dim = chart.coord_dim
    out = np.empty((dim, dim, chart.quasi_dim))
    for B in range(dim):
        e = np.zeros(dim)
        e[B] = fd_step
        for sign in (2.0, -2.0):
            chart.check_domain(x + sign * e)
        out[B] = (chart.frame(x + e) - chart.frame(x - e)) / (2.0 * fd_step)
    return out


def fd_bracket(chart: BundleChart, x, p: int, q: int, fd_step: float = 1e-5) -> np.ndarray:
    """Coordinate components of ``[Z_p, Z_q](x)`` from finite differences of the frame."""
    x = chart.check_domain(x)
    Z = chart.frame(x)
    dZ = _frame_derivatives(chart, x, fd_step)
    # [Y, W]^A = Y^B d_B W^A - W^B d_B Y^A
    return np.einsum("b,ba->a", Z[:, p], dZ[:, :, q]) - np.einsum("b,ba->a", Z[:, q], dZ[:, :, p])


def verify_curvature(chart: BundleChart, x, fd_step: float = 1e-5) -> float:
    """Max residual of ``[X_i, X_j] = R^a_ij E~_a`` over all pairs ``i < j``."""
    x = chart.check_domain(x)
    n = chart.base_dim
    if n < 2:
        return 0.0
    Z = chart.frame(x)
    dZ = _frame_derivatives(chart, x, fd_step)
    R = chart.curvature(x)
    E = Z[:, n:]
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            fd = np.einsum("b,ba->a", Z[:, i], dZ[:, :, j]) - np.einsum("b,ba->a", Z[:, j], dZ[:, :, i])
            worst = max(worst, float(np.max(np.abs(fd - E @ R[:, i, j]))))
    return worst


def verify_vertical_brackets(chart: BundleChart, x, fd_step: float = 1e-5) -> float:
    """Max residual of ``[E~_a, E~_b] = K^c_ab E~_c`` and ``[X_i, E~_a] = 0``."""
    x = chart.check_domain(x)
    n, k = chart.base_dim, chart.fiber_dim
    Z = chart.frame(x)
    dZ = _frame_derivatives(chart, x, fd_step)
    E = Z[:, n:]

    def bracket(p, q):
        return np.einsum("b,ba->a", Z[:, p], dZ[:, :, q]) - np.einsum("b,ba->a", Z[:, q], dZ[:, :, p])

    worst = 0.0
    for a in range(k):
        for b in range(k):
            expected = E @ chart.vertical_brackets[:, a, b]
            worst = max(worst, float(np.max(np.abs(bracket(n + a, n + b) - expected))))
        for i in range(n):
            worst = max(worst, float(np.max(np.abs(bracket(i, n + a)))))
    return worst


def ad_invariance_check(group: GroupModel, B) -> float:
    """Max over ``(a, b, c)`` of ``|sum_d B_db C^d_ca + B_ad C^d_cb|``.

    Zero exactly when ``B`` is infinitesimally Ad-invariant:
    ``B([xi, eta], zeta) + B(eta, [xi, zeta]) = 0``.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    k = group.fiber_dim
    if B.shape != (k, k):
        raise ValidationError(f"bilinear form must be {k}x{k}")
    if not np.array_equal(B, B.T):
        raise ValidationError("bilinear form is not symmetric")
    C = group.structure_constants
    res = np.einsum("db,dca->abc", B, C) + np.einsum("ad,dcb->abc", B, C)
    return float(np.max(np.abs(res), initial=0.0))
