"""Expansion of the pure-state density matrix in powers of ``sqrt(eta)``.

For a single unraveling ``rho = |psi><psi|`` obeys

    d rho = -i[H, rho] dt - (eta/2)[q, [q, rho]] dt + sqrt(eta) [rho, [rho, q]] dW.

Writing ``rho = rho0 + sqrt(eta) rho_half + eta rho_one + ...`` gives, with
``U(t, s)`` the drive propagator and ``q_H(s) = U(s)^dag q U(s)``,

    rho0(t)      = U(t) rho(0) U(t)^dag
    rho_half(t)  = int_0^t P(s, t) dW_s,   P(s, t) = U(t) [rho(0), [rho(0), q_H(s)]] U(t)^dag
    E[rho_one]   = -1/2 U(t) int_0^t [q_H(s), [q_H(s), rho(0)]] ds U(t)^dag.

Every quantity is first formed in the frame rotating with ``w (N + 1/2)``
and then mapped back.  The Ito isometry turns the order-``eta`` reduction of
the mean pure-state variance into ``eta * int_0^t (Tr P(s, t) B)^2 ds``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .master import evolve_master
from .model import (DEFAULT_QUAD_STEP, DriveIntegrals, OscillatorModel, displacement_propagator,
                    drive_integral_series, quadrature_grid)
from .trajectory import NoiseStream

CONVERGENCE_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """Halving the quadrature grid changed the result by more than the tolerance."""


def to_interaction(rho: np.ndarray, omega: float, t: float) -> np.ndarray:
    """``exp(i w N t) rho exp(-i w N t)``."""
    ph = np.exp(1j * omega * t * np.arange(rho.shape[0]))
    return ph[:, None] * rho * ph.conj()[None, :]


def from_interaction(rho: np.ndarray, omega: float, t: float) -> np.ndarray:
    """Inverse of :func:`to_interaction`."""
    return to_interaction(rho, omega, -t)


def _commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


@dataclass(frozen=True)
class NoiseKernel:
    """``P(s, t)`` on a uniform grid ``s`` covering ``[0, t]`` (Schrodinger picture)."""

    t: float
    s: np.ndarray
    P: np.ndarray  # (len(s), dim, dim)
    omega: float

    @property
    def ds(self) -> float:
        return float(self.s[1] - self.s[0])


@dataclass(frozen=True)
class PerturbativeDensity:
    t: float
    rho0: np.ndarray
    rho_one_mean: np.ndarray
    kernel: NoiseKernel
    rho_half: np.ndarray | None = None  # (M, dim, dim) samples, when requested

    def first_order(self, eta: float) -> np.ndarray:
        """``rho0 + eta E[rho_one]``, the expansion of the ensemble density matrix."""
        return self.rho0 + eta * self.rho_one_mean


def _uniform_grid(t: float, ds: float) -> np.ndarray:
    if t <= 0:
        raise ValueError("t must be > 0")
    n = max(4, math.ceil(t / ds - 1e-9))
    n += (-n) % 4  # divisible by 4 so the half grid also has an even interval count
    return np.linspace(0.0, t, n + 1)


def _interaction_propagators(model: OscillatorModel, s: np.ndarray, guard: int) -> np.ndarray:
    """``U^I(s_k)`` at every grid node."""
    dim = model.dim
    if model.drive.is_zero:
        return np.broadcast_to(np.eye(dim, dtype=complex), (len(s), dim, dim))
    fine = quadrature_grid(model, float(s[-1]), step=float(s[1] - s[0]), extra=s)
    series = drive_integral_series(model, fine)[np.searchsorted(fine, s)]
    out = np.empty((len(s), dim, dim), dtype=complex)
    for k, (sk, (D, Db, ph)) in enumerate(zip(s, series)):
        out[k] = displacement_propagator(model.space, DriveIntegrals(float(sk), D, Db, ph), guard)
    return out


def _heisenberg_q(model: OscillatorModel, s: np.ndarray, UI: np.ndarray) -> np.ndarray:
    """``U(s)^dag q U(s)`` built from the rotating-frame position and ``U^I``."""
    sp = model.space
    out = np.empty((len(s), model.dim, model.dim), dtype=complex)
    for k, sk in enumerate(s):
        qI = to_interaction(np.asarray(sp.q, dtype=complex), model.omega, float(sk))
        out[k] = UI[k].conj().T @ qI @ UI[k]
    return out


def _setup(model: OscillatorModel, rho0_initial: np.ndarray, t: float, ds: float, guard: int):
    rho_init = np.asarray(rho0_initial, dtype=complex)
    if rho_init.shape != (model.dim, model.dim):
        raise ValueError(f"rho0 has shape {rho_init.shape}, model has dim {model.dim}")
    s = _uniform_grid(t, ds)
    UI = _interaction_propagators(model, s, guard)
    qH = _heisenberg_q(model, s, UI)
    return rho_init, s, UI[-1], qH


def _sandwich(UIt: np.ndarray, X: np.ndarray, omega: float, t: float) -> np.ndarray:
    """Map an initial-frame operator to the Schrodinger picture at ``t``."""
    return from_interaction(UIt @ X @ UIt.conj().T, omega, t)


def noise_kernel(model: OscillatorModel, rho0_initial: np.ndarray, t: float,
                 ds: float = DEFAULT_QUAD_STEP, guard: int = 4) -> NoiseKernel:
    rho_init, s, UIt, qH = _setup(model, rho0_initial, t, ds, guard)
    return _kernel(model, rho_init, s, UIt, qH, t)


def _kernel(model, rho_init, s, UIt, qH, t) -> NoiseKernel:
    P = np.empty_like(qH)
    for k in range(len(s)):
        C = _commutator(rho_init, _commutator(rho_init, qH[k]))
        P[k] = _sandwich(UIt, C, model.omega, t)
    return NoiseKernel(float(t), s, P, model.omega)


def perturbative_density(model: OscillatorModel, rho0_initial: np.ndarray, t: float,
                         ds: float = DEFAULT_QUAD_STEP, M: int = 0, seed: int = 0,
                         guard: int = 4, check_convergence: bool = True,
                         tol: float = CONVERGENCE_TOL) -> PerturbativeDensity:
    """Zeroth order, the mean first-order term and (for ``M > 0``) samples of ``rho_half``.

    ``model.eta`` plays no role here.  The mean first-order integral uses
    Simpson's rule; with ``check_convergence`` it is recomputed on every
    other node and :class:`ConvergenceError` is raised if the two differ by
    more than ``tol`` in any entry.
    """
    rho_init, s, UIt, qH = _setup(model, rho0_initial, t, ds, guard)
    rho0 = _sandwich(UIt, rho_init, model.omega, t)
    dd = np.stack([_commutator(q, _commutator(q, rho_init)) for q in qH])
    integral = simpson(dd, x=s, axis=0)
    if check_convergence:
        coarse = simpson(dd[::2], x=s[::2], axis=0)
        err = float(np.max(np.abs(integral - coarse)))
        if err > tol:
            raise ConvergenceError(f"quadrature step {s[1] - s[0]:.3g} too coarse: halving changed "
                                   f"the first-order term by {err:.3g}")
    rho_one = -0.5 * _sandwich(UIt, integral, model.omega, t)
    kernel = _kernel(model, rho_init, s, UIt, qH, t)
    samples = sample_rho_half(kernel, M, seed) if M > 0 else None
    return PerturbativeDensity(float(t), rho0, rho_one, kernel, samples)


def sample_rho_half(kernel: NoiseKernel, M: int, seed: int, first_index: int = 0) -> np.ndarray:
    """``M`` Ito sums ``sum_k P(s_k, t) dW_k``; sample ``i`` uses ``NoiseStream(seed, first_index + i)``."""
    n = len(kernel.s) - 1
    dim = kernel.P.shape[-1]
    dW = np.stack([NoiseStream(seed, first_index + i, kernel.ds).increments(n) for i in range(M)])
    flat = kernel.P[:-1].reshape(n, dim * dim)
    return (dW @ flat).reshape(M, dim, dim)


def _operator_at(B: np.ndarray | Callable[[float], np.ndarray], t: float) -> np.ndarray:
    return np.asarray(B(t) if callable(B) else B)


def kernel_traces(kernel: NoiseKernel, B) -> np.ndarray:
    """``Tr P(s, t) B`` on the kernel grid; ``B`` may be a callable of time."""
    Bt = _operator_at(B, kernel.t)
    return np.einsum("kij,ji->k", kernel.P, Bt)


def perturbative_variance_correction(kernel: NoiseKernel, B) -> float:
    """``E[(Tr rho_half B)^2] = int_0^t (Tr P(s, t) B)^2 ds`` (nonnegative)."""
    tr = kernel_traces(kernel, B)
    if np.max(np.abs(tr.imag), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(tr.real), initial=0.0)):
        raise ValueError("Tr P B is not real; B must be Hermitian")
    return max(0.0, float(simpson(tr.real ** 2, x=kernel.s)))


@dataclass(frozen=True)
class ResidualRow:
    eta: float
    residual: float


def residual_scaling(model: OscillatorModel, rho0_initial: np.ndarray, t: float,
                     etas=(2e-3, 1e-3), dt: float = 1e-3,
                     pert: PerturbativeDensity | None = None) -> list[ResidualRow]:
    """Frobenius norm of ``rho_master - rho0 - eta E[rho_one]`` at each ``eta``."""
    if pert is None:
        pert = perturbative_density(model, rho0_initial, t, ds=dt)
    rows = []
    for eta in etas:
        rho_m = evolve_master(model.with_eta(eta), rho0_initial, t, dt, record_every=10 ** 9).final
        rows.append(ResidualRow(float(eta), float(np.linalg.norm(rho_m - pert.first_order(eta)))))
    return rows


def zero_mean_score(samples: np.ndarray, floor: float = 1e-14) -> float:
    """Largest ``|mean| / stderr`` over real and imaginary parts of all entries.

    Entries whose samples are identically zero (below ``floor``) count only
    if their mean is itself above ``floor``, in which case the score is ``inf``.
    """
    M = samples.shape[0]
    worst = 0.0
    for part in (samples.real, samples.imag):
        mean = np.abs(part.mean(axis=0))
        se = part.std(axis=0, ddof=1) / math.sqrt(M)
        live = se > floor
        if np.any(mean[~live] > floor):
            return math.inf
        if np.any(live):
            worst = max(worst, float(np.max(mean[live] / se[live])))
    return worst
