"""Lie algebra data: bases, structure constants and matrix realizations.

Structure constants are stored as an array ``C[c, a, b]`` holding the
coefficient of ``E_c`` in ``[E_a, E_b]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import CapabilityError, ValidationError


def hat_so3(omega) -> np.ndarray:
    """Skew matrix ``[omega]`` with ``[omega] @ u == cross(omega, u)``."""
    w1, w2, w3 = np.asarray(omega, dtype=float)
    return np.array([[0.0, -w3, w2], [w3, 0.0, -w1], [-w2, w1, 0.0]])


def rodrigues(omega) -> np.ndarray:
    """Closed-form exponential of ``[omega]`` (rotation by ``|omega|`` about ``omega``)."""
    omega = np.asarray(omega, dtype=float)
    angle = float(np.linalg.norm(omega))
    K = hat_so3(omega)
    if angle < 1e-4:
        # Taylor series; the next omitted terms are below 1e-18.
        a = 1.0 - angle**2 / 6.0 + angle**4 / 120.0
        b = 0.5 - angle**2 / 24.0 + angle**4 / 720.0
    else:
        a = np.sin(angle) / angle
        b = 2.0 * (np.sin(0.5 * angle) / angle) ** 2
    return np.eye(3) + a * K + b * (K @ K)


def gl_inner(a, b) -> float:
    """Inner product ``trace(a b^T)`` on square matrices."""
    return float(np.trace(np.asarray(a) @ np.asarray(b).T))


def structure_constants_from_basis(basis: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Expand every commutator ``[E_a, E_b]`` in the given matrix basis.

    Raises ``ValidationError`` if the span of ``basis`` is not closed under
    the commutator or the basis is linearly dependent.
    """
    basis = np.asarray(basis, dtype=float)
    k, m, _ = basis.shape
    flat = basis.reshape(k, m * m).T
    if np.linalg.matrix_rank(flat) < k:
        raise ValidationError("matrix basis is linearly dependent")
    C = np.zeros((k, k, k))
    for a in range(k):
        for b in range(k):
            comm = basis[a] @ basis[b] - basis[b] @ basis[a]
            coeffs, *_ = np.linalg.lstsq(flat, comm.ravel(), rcond=None)
            if np.max(np.abs(flat @ coeffs - comm.ravel()), initial=0.0) > atol:
                raise ValidationError(f"span is not closed under [E_{a}, E_{b}]")
            C[:, a, b] = coeffs
    # Integer-valued bases produce integer constants; strip lstsq round-off.
    rounded = np.round(C)
    return np.where(np.abs(C - rounded) < 1e-12, rounded, C)


@dataclass(frozen=True, eq=False)
class MatrixRealization:
    """Faithful matrix representation ``xi -> [xi] = sum_a xi^a E_a``.

    ``exp_fn`` overrides the generic Pade scaling-and-squaring exponential
    (used for the closed-form rotation exponential on so(3)).
    """

    basis: np.ndarray
    exp_fn: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def hat(self, xi) -> np.ndarray:
        return np.tensordot(np.asarray(xi, dtype=float), self.basis, axes=1)

    def vee(self, mat) -> np.ndarray:
        k = self.basis.shape[0]
        flat = self.basis.reshape(k, -1).T
        coeffs, *_ = np.linalg.lstsq(flat, np.asarray(mat, dtype=float).ravel(), rcond=None)
        return coeffs

    def exp(self, xi) -> np.ndarray:
        if self.exp_fn is not None:
            return self.exp_fn(np.asarray(xi, dtype=float))
        return scipy.linalg.expm(self.hat(xi))


@dataclass(frozen=True, eq=False)
class GroupModel:
    """A Lie algebra with basis labels and optional matrix realization."""

    name: str
    structure_constants: np.ndarray
    basis_names: tuple[str, ...]
    realization: MatrixRealization | None = None

    def __post_init__(self):
        C = np.asarray(self.structure_constants, dtype=float)
        object.__setattr__(self, "structure_constants", C)
        object.__setattr__(self, "basis_names", tuple(self.basis_names))
        k = len(self.basis_names)
        if C.shape != (k, k, k):
            raise ValidationError(f"structure constants must have shape {(k, k, k)}, got {C.shape}")
        if self.realization is not None and self.realization.basis.shape[0] != k:
            raise ValidationError("matrix realization basis size differs from fiber_dim")

    @property
    def fiber_dim(self) -> int:
        return len(self.basis_names)

    @property
    def is_abelian(self) -> bool:
        return not np.any(self.structure_constants)

    def bracket(self, xi, eta) -> np.ndarray:
        return np.einsum("cab,a,b->c", self.structure_constants, xi, eta)

    def antisymmetry_residual(self) -> float:
        C = self.structure_constants
        return float(np.max(np.abs(C + C.transpose(0, 2, 1)), initial=0.0))

    def jacobi_residual(self) -> float:
        C = self.structure_constants
        # J[e,a,b,c] = C^d_ab C^e_dc + C^d_bc C^e_da + C^d_ca C^e_db
        J = (
            np.einsum("dab,edc->eabc", C, C)
            + np.einsum("dbc,eda->eabc", C, C)
            + np.einsum("dca,edb->eabc", C, C)
        )
        return float(np.max(np.abs(J), initial=0.0))

    def exp(self, xi) -> np.ndarray:
        if self.realization is None:
            raise CapabilityError(f"group {self.name!r} has no matrix realization")
        return self.realization.exp(xi)

    def random_element(self, rng: np.random.Generator, scale: float = 1.0):
        """Random group element: a matrix when realized, else an additive vector."""
        xi = rng.uniform(-scale, scale, size=self.fiber_dim)
        if self.realization is None:
            if not self.is_abelian:
                raise CapabilityError(f"group {self.name!r} has no matrix realization")
            return xi
        return self.realization.exp(xi)


def _from_matrix_basis(name, basis, names, exp_fn=None) -> GroupModel:
    basis = np.asarray(basis, dtype=float)
    return GroupModel(
        name=name,
        structure_constants=structure_constants_from_basis(basis),
        basis_names=tuple(names),
        realization=MatrixRealization(basis, exp_fn),
    )


def so3() -> GroupModel:
    """so(3) with the cross-product basis; ``C^c_ab = eps_abc``."""
    basis = np.array([hat_so3(e) for e in np.eye(3)])
    return _from_matrix_basis("so3", basis, ("e1", "e2", "e3"), exp_fn=rodrigues)


def sl_basis(n: int) -> tuple[np.ndarray, tuple[str, ...]]:
    """Basis of traceless n x n matrices.

    Order: off-diagonal units ``E_ij`` (i != j) in row-major order, then the
    diagonal differences ``H_k = E_kk - E_(k+1)(k+1)`` for k = 1..n-1.
    """
    if n < 2:
        raise ValidationError("sl(n) needs n >= 2")
    mats, names = [], []
    for i in range(n):
        for j in range(n):
            if i != j:
                E = np.zeros((n, n))
                E[i, j] = 1.0
                mats.append(E)
                names.append(f"e{i + 1}{j + 1}")
    for k in range(n - 1):
        H = np.zeros((n, n))
        H[k, k], H[k + 1, k + 1] = 1.0, -1.0
        mats.append(H)
        names.append(f"h{k + 1}")
    return np.array(mats), tuple(names)


def sl(n: int) -> GroupModel:
    basis, names = sl_basis(n)
    return _from_matrix_basis(f"sl{n}", basis, names)


def gl(n: int) -> GroupModel:
    """gl(n) with basis ``sl_basis(n)`` followed by the identity matrix."""
    basis, names = sl_basis(n) if n >= 2 else (np.zeros((0, 1, 1)), ())
    basis = np.concatenate([basis, np.eye(n)[None]], axis=0)
    return _from_matrix_basis(f"gl{n}", basis, names + ("id",))


def positive_reals() -> GroupModel:
    """The multiplicative group R+ realized as 1x1 matrices."""
    return _from_matrix_basis("rplus", np.ones((1, 1, 1)), ("one",), exp_fn=lambda xi: np.exp(xi).reshape(1, 1))


def abelian(names: Sequence[str], name: str = "abelian") -> GroupModel:
    """Additive abelian group (circle or line fibers) without a matrix realization."""
    k = len(names)
    return GroupModel(name=name, structure_constants=np.zeros((k, k, k)), basis_names=tuple(names))
