"""Oscillator parameters, drive terms and the drive-only propagator.

The Hamiltonian is ``H = w (a^dag a + 1/2) + d(t) a^dag + dbar(t) a`` with
hbar = 1.  The cumulative drive integrals

    D(t)    = int_0^t e^{ i w u} d(u)    du
    Dbar(t) = int_0^t e^{-i w u} dbar(u) du

and the phase integral ``int_0^t d(u) e^{i w u} Dbar(u) du`` are obtained in
one fixed-step fourth-order pass (for integrands that do not depend on the
running state this is exactly composite Simpson on the step midpoints).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .fock import FockSpace, truncation_leakage

LEAKAGE_THRESHOLD = 1e-8
DEFAULT_QUAD_STEP = 1e-3

DRIVE_KINDS = ("zero", "constant", "harmonic", "sampled")


class TruncationError(RuntimeError):
    """Raised when a state or operator puts too much weight on the top Fock levels."""


@dataclass(frozen=True, eq=False)
class DriveSpec:
    """Complex c-number drive ``d(t)``.

    ``dbar`` defaults to the complex conjugate of ``d``, which keeps the
    Hamiltonian Hermitian.  Passing ``bar`` (another :class:`DriveSpec`)
    makes ``dbar`` independent; this is only meant for formula checks.
    """

    kind: str = "zero"
    d0: complex = 0.0
    nu: float = 0.0
    times: np.ndarray | None = None
    samples: np.ndarray | None = None
    bar: "DriveSpec | None" = None

    def __post_init__(self) -> None:
        if self.kind not in DRIVE_KINDS:
            raise ValueError(f"unknown drive kind {self.kind!r}; expected one of {DRIVE_KINDS}")
        object.__setattr__(self, "d0", complex(self.d0))
        object.__setattr__(self, "nu", float(self.nu))
        if self.kind == "sampled":
            if self.times is None or self.samples is None:
                raise ValueError("sampled drive needs times and samples")
            times = np.asarray(self.times, dtype=float)
            samples = np.asarray(self.samples, dtype=complex)
            if times.ndim != 1 or times.shape != samples.shape or times.size < 2:
                raise ValueError("times and samples must be 1-D arrays of equal length >= 2")
            if np.any(np.diff(times) <= 0):
                raise ValueError("sampled drive grid must be strictly increasing")
            object.__setattr__(self, "times", times)
            object.__setattr__(self, "samples", samples)

    @classmethod
    def zero(cls) -> "DriveSpec":
        return cls("zero")

    @classmethod
    def constant(cls, d0: complex) -> "DriveSpec":
        return cls("constant", d0=d0)

    @classmethod
    def harmonic(cls, d0: complex, nu: float) -> "DriveSpec":
        """``d(t) = d0 exp(-i nu t)``; ``nu`` equal to the oscillator frequency is resonant."""
        return cls("harmonic", d0=d0, nu=nu)

    @classmethod
    def sampled(cls, times: Sequence[float], samples: Sequence[complex]) -> "DriveSpec":
        return cls("sampled", times=np.asarray(times), samples=np.asarray(samples))

    @property
    def is_zero(self) -> bool:
        own_zero = self.kind == "zero" or (self.kind != "sampled" and self.d0 == 0)
        return own_zero and (self.bar is None or self.bar.is_zero)

    def covers(self, t0: float, t1: float) -> bool:
        ok = True
        if self.kind == "sampled":
            ok = self.times[0] <= t0 and t1 <= self.times[-1]
        if self.bar is not None:
            ok = ok and self.bar.covers(t0, t1)
        return bool(ok)

    def __call__(self, t: float) -> complex:
        if self.kind == "zero":
            return 0j
        if self.kind == "constant":
            return self.d0
        if self.kind == "harmonic":
            return self.d0 * cmath.exp(-1j * self.nu * t)
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"sampled drive evaluated at t={t}, outside [{self.times[0]}, {self.times[-1]}]")
        re = np.interp(t, self.times, self.samples.real)
        im = np.interp(t, self.times, self.samples.imag)
        return complex(re, im)

    def dbar(self, t: float) -> complex:
        if self.bar is not None:
            return self.bar(t)
        return self(t).conjugate()

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        pts = []
        for spec in (self, self.bar):
            if spec is not None and spec.kind == "sampled":
                pts.append(spec.times[(spec.times > t0) & (spec.times < t1)])
        return np.concatenate(pts) if pts else np.empty(0)


@dataclass(frozen=True, eq=False)
class OscillatorModel:
    """Forced oscillator with position-coupled collapse/decoherence strength ``eta``.

    ``eta`` has units of time^-1 length^-2; the single decoherence rate that
    enters the occupation-number growth is ``lam = eta * sigma**2``.
    """

    dim: int
    eta: float = 0.0
    mass: float = 1.0
    omega: float = 1.0
    drive: DriveSpec = field(default_factory=DriveSpec.zero)

    def __post_init__(self) -> None:
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")

    @classmethod
    def from_lambda(cls, lam: float, dim: int, mass: float = 1.0, omega: float = 1.0,
                    drive: DriveSpec | None = None) -> "OscillatorModel":
        sigma2 = 1.0 / (2.0 * mass * omega)
        return cls(dim=dim, eta=lam / sigma2, mass=mass, omega=omega,
                   drive=drive if drive is not None else DriveSpec.zero())

    @cached_property
    def space(self) -> FockSpace:
        return FockSpace(self.dim, self.mass, self.omega)

    @property
    def sigma(self) -> float:
        return self.space.sigma

    @property
    def lam(self) -> float:
        return self.eta * self.sigma ** 2

    def with_eta(self, eta: float) -> "OscillatorModel":
        return OscillatorModel(self.dim, eta, self.mass, self.omega, self.drive)


@dataclass(frozen=True)
class DriveIntegrals:
    t: float
    D: complex
    Dbar: complex
    phase_integral: complex


def rk4_grid(rhs: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray,
             grid: np.ndarray) -> np.ndarray:
    """Classical RK4 on an arbitrary increasing grid; returns the state at every node."""
    y = np.array(y0, dtype=complex)
    out = np.empty((len(grid),) + y.shape, dtype=complex)
    out[0] = y
    for i in range(len(grid) - 1):
        u, h = grid[i], grid[i + 1] - grid[i]
        k1 = rhs(u, y)
        k2 = rhs(u + h / 2, y + h / 2 * k1)
        k3 = rhs(u + h / 2, y + h / 2 * k2)
        k4 = rhs(u + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
    return out


def quadrature_grid(model: OscillatorModel, t: float, step: float | None = None,
                    extra: Sequence[float] = ()) -> np.ndarray:
    """Uniform grid on ``[0, t]`` with spacing at most ``min(0.01/w, step)``.

    Drive sample points and any ``extra`` nodes are merged in so that
    piecewise-linear drives are integrated interval by interval.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    h = min(0.01 / model.omega, step if step is not None else DEFAULT_QUAD_STEP)
    if model.drive.kind == "harmonic" and model.drive.nu != 0:
        h = min(h, 0.01 / abs(model.drive.nu))
    n = max(2, math.ceil(t / h))
    grid = np.linspace(0.0, t, n + 1)
    pts = [grid, model.drive.breakpoints(0.0, t), np.asarray(extra, dtype=float)]
    return np.unique(np.concatenate(pts))


def _check_covered(model: OscillatorModel, t: float) -> None:
    if not model.drive.covers(0.0, t):
        raise ValueError(f"drive is not defined on [0, {t}]")


def drive_integral_series(model: OscillatorModel, grid: np.ndarray) -> np.ndarray:
    """``(D, Dbar, phase_integral)`` at every node of ``grid`` (which must start at 0)."""
    _check_covered(model, float(grid[-1]))
    w, drive = model.omega, model.drive
    if drive.is_zero:
        return np.zeros((len(grid), 3), dtype=complex)

    def rhs(u: float, y: np.ndarray) -> np.ndarray:
        e = cmath.exp(1j * w * u)
        d = drive(u)
        return np.array([e * d, drive.dbar(u) / e, d * e * y[1]])

    return rk4_grid(rhs, np.zeros(3, dtype=complex), grid)


def drive_integrals(model: OscillatorModel, t: float, step: float | None = None) -> DriveIntegrals:
    if t == 0:
        return DriveIntegrals(0.0, 0j, 0j, 0j)
    _check_covered(model, t)
    grid = quadrature_grid(model, t, step)
    D, Dbar, phase = drive_integral_series(model, grid)[-1]
    return DriveIntegrals(float(t), complex(D), complex(Dbar), complex(phase))


def hamiltonian(model: OscillatorModel, t: float) -> np.ndarray:
    sp = model.space
    H = model.omega * (sp.number + 0.5 * sp.identity)
    d = model.drive(t)
    if d != 0 or model.drive.bar is not None:
        H = H + d * sp.adag + model.drive.dbar(t) * sp.a
    return H


def interaction_hamiltonian(model: OscillatorModel, t: float) -> np.ndarray:
    """Drive term in the frame rotating with the free oscillator."""
    sp = model.space
    e = cmath.exp(1j * model.omega * t)
    return model.drive(t) * e * sp.adag + model.drive.dbar(t) / e * sp.a


def displacement_propagator(space: FockSpace, ints: DriveIntegrals, guard: int = 4,
                            threshold: float = LEAKAGE_THRESHOLD) -> np.ndarray:
    """``exp(-i Dbar a) exp(-i D a^dag) exp(phase)`` as a dense matrix."""
    U = expm(-1j * ints.Dbar * space.a) @ expm(-1j * ints.D * space.adag)
    U *= cmath.exp(ints.phase_integral)
    col = U[:, 0] / np.linalg.norm(U[:, 0])
    leak = truncation_leakage(col, guard)
    if leak > threshold:
        raise TruncationError(
            f"displacement |D|={abs(ints.D):.3g} too large for dim={space.dim}: "
            f"top-{guard} leakage {leak:.3g} > {threshold:g}")
    return U


def interaction_propagator(model: OscillatorModel, t: float, guard: int = 4,
                           step: float | None = None) -> np.ndarray:
    if model.drive.is_zero:
        return np.eye(model.dim, dtype=complex)
    return displacement_propagator(model.space, drive_integrals(model, t, step), guard)
