"""Truncated Fock-basis operators and states for a single oscillator mode.

Units are fixed with hbar = 1 throughout; mass and angular frequency are
carried by :class:`FockSpace` so that the length scale
``sigma = sqrt(1 / (2 m omega))`` is always consistent with the model.

Operators and states are plain dense ``numpy`` arrays.  A state vector is a
1-D complex array of length ``dim``; a density matrix is a ``(dim, dim)``
complex array.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10


@dataclass(frozen=True)
class FockSpace:
    """Fock levels ``0 .. dim-1`` of an oscillator with the given mass and frequency."""

    dim: int
    mass: float = 1.0
    omega: float = 1.0

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dim must be an integer >= 2, got {self.dim!r}")
        if not self.mass > 0 or not self.omega > 0:
            raise ValueError("mass and omega must be positive")

    @property
    def sigma(self) -> float:
        return float(np.sqrt(1.0 / (2.0 * self.mass * self.omega)))

    # Operators are cached; callers must not mutate the returned arrays.
    @cached_property
    def a(self) -> np.ndarray:
        n = np.arange(1, self.dim)
        op = np.zeros((self.dim, self.dim), dtype=complex)
        op[n - 1, n] = np.sqrt(n)
        op.setflags(write=False)
        return op

    @cached_property
    def adag(self) -> np.ndarray:
        op = self.a.conj().T.copy()
        op.setflags(write=False)
        return op

    @cached_property
    def number(self) -> np.ndarray:
        op = np.diag(np.arange(self.dim).astype(complex))
        op.setflags(write=False)
        return op

    @cached_property
    def identity(self) -> np.ndarray:
        op = np.eye(self.dim, dtype=complex)
        op.setflags(write=False)
        return op

    @cached_property
    def q(self) -> np.ndarray:
        op = self.sigma * (self.a + self.adag)
        op.setflags(write=False)
        return op

    @cached_property
    def p(self) -> np.ndarray:
        # a = (m w / 2)^(1/2) (q + i p / m w)  =>  p = -i m w sigma (a - a^dag)
        op = -1j * self.mass * self.omega * self.sigma * (self.a - self.adag)
        op.setflags(write=False)
        return op

    def x1(self, t: float) -> np.ndarray:
        """Rotating-frame quadrature ``X1(t) = sigma (a e^{i w t} + a^dag e^{-i w t})``."""
        ph = np.exp(1j * self.omega * t)
        return self.sigma * (self.a * ph + self.adag * np.conj(ph))

    def x2(self, t: float) -> np.ndarray:
        """Rotating-frame quadrature ``X2(t) = -i sigma (a e^{i w t} - a^dag e^{-i w t})``."""
        ph = np.exp(1j * self.omega * t)
        return -1j * self.sigma * (self.a * ph - self.adag * np.conj(ph))

    # -- states ---------------------------------------------------------

    def basis(self, n: int) -> np.ndarray:
        if not 0 <= n < self.dim:
            raise ValueError(f"Fock level {n} outside 0..{self.dim - 1}")
        psi = np.zeros(self.dim, dtype=complex)
        psi[n] = 1.0
        return psi

    def vacuum(self) -> np.ndarray:
        return self.basis(0)

    def coherent(self, z: complex, normalize: bool = True) -> np.ndarray:
        """Coherent state ``|z>`` projected on the retained levels.

        With ``normalize=False`` the exact Poisson amplitudes
        ``e^{-|z|^2/2} z^n / sqrt(n!)`` are returned, so the norm falls short
        of one by the weight discarded above level ``dim-1``.
        """
        n = np.arange(self.dim)
        log_fact = np.array([np.log(float(factorial(k))) for k in n])
        z = complex(z)
        if z == 0:
            psi = self.vacuum()
        else:
            mag = np.exp(n * np.log(abs(z)) - 0.5 * log_fact - 0.5 * abs(z) ** 2)
            psi = mag * np.exp(1j * n * np.angle(z))
        if normalize:
            psi = psi / np.linalg.norm(psi)
        return psi.astype(complex)

    def projector(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        self._check_vector(psi)
        return np.outer(psi, psi.conj())

    def _check_vector(self, psi: np.ndarray) -> None:
        if psi.shape != (self.dim,):
            raise ValueError(f"state has shape {psi.shape}, space has dim {self.dim}")


def ladder_and_quadrature_operators(space: FockSpace, t: float = 0.0) -> dict[str, np.ndarray]:
    """All single-mode operators used by the package, with quadratures evaluated at ``t``."""
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    return {
        "a": space.a,
        "adag": space.adag,
        "N": space.number,
        "q": space.q,
        "p": space.p,
        "X1": space.x1(t),
        "X2": space.x2(t),
    }


def is_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(op - op.conj().T)) <= tol)


def expectation_value(op: np.ndarray, state: np.ndarray) -> complex:
    """``<psi|B|psi>`` for a state vector or ``Tr(rho B)`` for a density matrix."""
    op = np.asarray(op)
    state = np.asarray(state)
    d = op.shape[0]
    if op.shape != (d, d):
        raise ValueError(f"operator must be square, got shape {op.shape}")
    if state.ndim == 1:
        if state.shape[0] != d:
            raise ValueError(f"dimension mismatch: operator {d}, state {state.shape[0]}")
        return complex(np.vdot(state, op @ state))
    if state.shape != (d, d):
        raise ValueError(f"dimension mismatch: operator {op.shape}, density {state.shape}")
    # Tr(rho B) without forming the product
    return complex(np.sum(state * op.T))


def truncation_leakage(state: np.ndarray, guard: int) -> float:
    """Probability weight carried by the top ``guard`` Fock levels."""
    state = np.asarray(state)
    d = state.shape[0]
    if not 0 < guard < d:
        raise ValueError(f"guard must satisfy 0 < guard < dim ({d}), got {guard}")
    if state.ndim == 1:
        return float(np.sum(np.abs(state[d - guard:]) ** 2))
    return float(np.sum(np.real(np.diag(state)[d - guard:])))
