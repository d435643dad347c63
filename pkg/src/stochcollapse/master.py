"""Deterministic evolution of the ensemble density matrix.

    d rho / dt = -i [H(t), rho] + (decoherence term)

The decoherence term is either a double commutator ``-(r/2)[L, [L, rho]]`` for
a self-adjoint ``L`` (``L = q`` reproduces the collapse model's ensemble
equation) or the dissipative Lindblad term ``r (a rho a^dag - {a^dag a, rho}/2)``.
Integration is fixed-step RK4 on the dense matrix with one Hermitian
re-symmetrisation per step.  Positivity is monitored at record points and
never enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import FockSpace, truncation_leakage
from .model import LEAKAGE_THRESHOLD, OscillatorModel, TruncationError, hamiltonian

DECOHERENCE_KINDS = ("position", "linear", "annihilation")
POSITIVITY_TOL = 1e-8


class PositivityError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecoherenceSpec:
    """Which collapse operator drives decoherence, and at what rate.

    ``linear`` uses ``L = c1 q + c2 p`` with real coefficients.
    """

    kind: str = "position"
    rate: float = 0.0
    c1: float = 1.0
    c2: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in DECOHERENCE_KINDS:
            raise ValueError(f"unknown decoherence kind {self.kind!r}")
        if self.rate < 0:
            raise ValueError("rate must be >= 0")
        for c in (self.c1, self.c2):
            if isinstance(c, complex) or np.iscomplexobj(c):
                raise ValueError("linear-combination coefficients must be real")
        object.__setattr__(self, "c1", float(self.c1))
        object.__setattr__(self, "c2", float(self.c2))

    @classmethod
    def position(cls, eta: float) -> "DecoherenceSpec":
        return cls("position", eta)

    @classmethod
    def linear_combination(cls, rate: float, c1: float, c2: float) -> "DecoherenceSpec":
        return cls("linear", rate, c1, c2)

    @classmethod
    def annihilation(cls, rate: float) -> "DecoherenceSpec":
        return cls("annihilation", rate)

    @property
    def self_adjoint(self) -> bool:
        return self.kind != "annihilation"

    def operator(self, space: FockSpace) -> np.ndarray:
        if self.kind == "position":
            return np.asarray(space.q)
        if self.kind == "linear":
            return self.c1 * space.q + self.c2 * space.p
        return np.asarray(space.a)


def decoherence_superoperator(spec: DecoherenceSpec, rho: np.ndarray, space: FockSpace) -> np.ndarray:
    if rho.shape != (space.dim, space.dim):
        raise ValueError(f"rho has shape {rho.shape}, space has dim {space.dim}")
    L = spec.operator(space)
    if spec.self_adjoint:
        inner = L @ rho - rho @ L
        return -0.5 * spec.rate * (L @ inner - inner @ L)
    Ld = L.conj().T
    LdL = Ld @ L
    return spec.rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))


class _Generator:
    """Right-hand side of the master equation with operators hoisted out of the loop."""

    def __init__(self, model: OscillatorModel, spec: DecoherenceSpec):
        self.model = model
        sp = model.space
        L = spec.operator(sp)
        self.rate = spec.rate
        self.self_adjoint = spec.self_adjoint
        self.L = L
        self.Ld = L.conj().T
        self.LdL = self.Ld @ L
        self.static_H = hamiltonian(model, 0.0) if model.drive.kind in ("zero", "constant") else None

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        H = self.static_H if self.static_H is not None else hamiltonian(self.model, t)
        Hr = H @ rho
        out = -1j * (Hr - Hr.conj().T) if self._hermitian_H else -1j * (Hr - rho @ H)
        if self.rate == 0:
            return out
        L = self.L
        if self.self_adjoint:
            Lr = L @ rho
            LrL = Lr @ L
            # -(r/2)(L^2 rho - 2 L rho L + rho L^2) written via L rho
            out += -0.5 * self.rate * (L @ Lr - 2 * LrL + (rho @ L) @ L)
        else:
            out += self.rate * (L @ rho @ self.Ld - 0.5 * (self.LdL @ rho + rho @ self.LdL))
        return out

    @property
    def _hermitian_H(self) -> bool:
        # (H rho)^dag = rho H only when both are Hermitian; rho is kept Hermitian
        # by the integrator, H is Hermitian unless an independent dbar was given.
        return self.model.drive.bar is None


@dataclass
class MasterResult:
    times: np.ndarray
    rhos: np.ndarray  # shape (n_records, dim, dim)
    min_eigenvalues: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.rhos[-1]

    def expect(self, op) -> np.ndarray:
        """``Tr(rho(t) B)`` along the record grid; ``op`` may be a callable of ``t``."""
        vals = np.empty(len(self.times), dtype=complex)
        for i, (t, rho) in enumerate(zip(self.times, self.rhos)):
            B = op(t) if callable(op) else op
            vals[i] = np.sum(rho * B.T)
        return vals


def step_count(t_final: float, dt: float) -> tuple[int, float]:
    """Number of fixed steps covering ``[0, t_final]`` and the adjusted step."""
    if dt <= 0 or t_final < 0:
        raise ValueError("need dt > 0 and t_final >= 0")
    n = max(1, math.ceil(t_final / dt - 1e-9))
    return n, t_final / n


def evolve_master(model: OscillatorModel, rho0: np.ndarray, t_final: float, dt: float,
                  spec: DecoherenceSpec | None = None, record_every: int = 1, guard: int = 2,
                  leakage_threshold: float = LEAKAGE_THRESHOLD,
                  check_positivity: bool = True) -> MasterResult:
    """RK4 integration of the master equation from ``rho0`` to ``t_final``.

    ``spec`` defaults to position decoherence at the model's ``eta``.  The
    state is recorded at ``t = 0``, every ``record_every`` steps, and at
    ``t_final``.  Raises :class:`TruncationError` when the top ``guard``
    levels pick up more than ``leakage_threshold`` population, and
    :class:`PositivityError` when a recorded state has an eigenvalue below
    ``-1e-8``.
    """
    if spec is None:
        spec = DecoherenceSpec.position(model.eta)
    if dt * model.omega > 0.01 + 1e-15:
        raise ValueError(f"dt*omega = {dt * model.omega:g} exceeds 0.01")
    rho = np.array(rho0, dtype=complex)
    if rho.shape != (model.dim, model.dim):
        raise ValueError(f"rho0 has shape {rho.shape}, model has dim {model.dim}")
    leak = truncation_leakage(rho, guard)
    if leak > leakage_threshold:
        raise TruncationError(f"initial state leakage {leak:.3g} exceeds {leakage_threshold:g}")

    n, h = step_count(t_final, dt)
    f = _Generator(model, spec)
    times, rhos, mins = [0.0], [rho.copy()], [_min_eig(rho) if check_positivity else np.nan]
    for k in range(n):
        t = k * h
        k1 = f(t, rho)
        k2 = f(t + h / 2, rho + h / 2 * k1)
        k3 = f(t + h / 2, rho + h / 2 * k2)
        k4 = f(t + h, rho + h * k3)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        leak = float(np.sum(np.real(np.diag(rho)[-guard:])))
        if leak > leakage_threshold:
            raise TruncationError(
                f"master equation: top-{guard} leakage {leak:.3g} > {leakage_threshold:g} "
                f"at t={(k + 1) * h:.6g} (dim={model.dim})")
        if (k + 1) % record_every == 0 or k + 1 == n:
            t_rec = (k + 1) * h
            m = np.nan
            if check_positivity:
                m = _min_eig(rho)
                if m < -POSITIVITY_TOL:
                    raise PositivityError(f"master equation: eigenvalue {m:.3g} at t={t_rec:.6g}")
            times.append(t_rec)
            rhos.append(rho.copy())
            mins.append(m)
    return MasterResult(np.array(times), np.array(rhos), np.array(mins))


def _min_eig(rho: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])


@dataclass(frozen=True)
class DensityDiagnostics:
    hermiticity: float
    trace_deviation: float
    min_eigenvalue: float
    leakage: float

    def ok(self, herm_tol: float = 1e-10, trace_tol: float = 1e-8,
           eig_tol: float = POSITIVITY_TOL, leak_tol: float = LEAKAGE_THRESHOLD) -> bool:
        return (self.hermiticity <= herm_tol and self.trace_deviation <= trace_tol
                and self.min_eigenvalue >= -eig_tol and self.leakage <= leak_tol)


def validate_density_matrix(rho: np.ndarray, guard: int = 2) -> DensityDiagnostics:
    rho = np.asarray(rho, dtype=complex)
    return DensityDiagnostics(
        hermiticity=float(np.max(np.abs(rho - rho.conj().T))),
        trace_deviation=float(abs(np.trace(rho) - 1.0)),
        min_eigenvalue=_min_eig(rho),
        leakage=truncation_leakage(rho, guard),
    )
