"""Monte Carlo unraveling of the position-localization stochastic Schrodinger equation.

Each trajectory obeys (Ito, hbar = 1)

    d|psi> = [ -i H dt + sqrt(eta) (q - <q>) dW - (eta/2) (q - <q>)^2 dt ] |psi>

and is advanced by explicit Euler-Maruyama with exact renormalisation after
every step; ``<q>`` is taken from the state at the start of the step.

All per-step arithmetic is built from elementwise ladder shifts on the last
axis, so a trajectory produces the same bits whether it is stepped alone or
inside a batch.  Noise for trajectory ``i`` comes from its own counter-based
stream keyed by ``(seed, i)``; ensembles are therefore independent of block
layout, thread count and execution order.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .master import DecoherenceSpec, step_count
from .model import LEAKAGE_THRESHOLD, OscillatorModel, TruncationError

BUILTIN_OBSERVABLES = ("q", "p", "N", "X1", "X2")
DEFAULT_OBSERVABLES = ("q", "N", "X1", "X2")
NOISE_CHUNK = 1024


class InstabilityError(RuntimeError):
    """A trajectory lost too much norm in one step (step size too large)."""

    def __init__(self, message: str, trajectory_index: int | None = None):
        super().__init__(message)
        self.trajectory_index = trajectory_index


class NoiseStream:
    """Wiener increments for one trajectory.

    The generator is Philox keyed by ``SeedSequence(seed, spawn_key=(index,))``;
    increments are drawn lazily, and successive draws concatenate to the
    same sequence regardless of how they are chunked.
    """

    def __init__(self, seed: int, trajectory_index: int, dt: float):
        if seed < 0 or seed >= 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.trajectory_index = int(trajectory_index)
        self.dt = float(dt)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.trajectory_index,))
        self._rng = np.random.Generator(np.random.Philox(ss))
        self._sqrt_dt = math.sqrt(self.dt)

    def increments(self, n: int) -> np.ndarray:
        return self._sqrt_dt * self._rng.standard_normal(n)


def default_dt(model: OscillatorModel) -> float:
    dt = min(1e-3, 1e-3 / model.omega)
    if model.lam > 0:
        dt = min(dt, 0.1 / model.lam)
    return dt


# -- ladder shifts on the last axis ---------------------------------------

def _lower(states: np.ndarray, sqrt_n: np.ndarray) -> np.ndarray:
    out = np.zeros_like(states)
    out[..., :-1] = sqrt_n[1:] * states[..., 1:]
    return out


def _raise(states: np.ndarray, sqrt_n: np.ndarray) -> np.ndarray:
    out = np.zeros_like(states)
    out[..., 1:] = sqrt_n[1:] * states[..., :-1]
    return out


class _Ops:
    """Matrix-free actions of H, q and the quadratures on rows of state vectors."""

    def __init__(self, model: OscillatorModel):
        self.model = model
        sp = model.space
        self.n = np.arange(model.dim, dtype=float)
        self.sqrt_n = np.sqrt(self.n)
        self.sigma = sp.sigma
        self.diag_h = model.omega * (self.n + 0.5)

    def q(self, s: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.sigma * (_lower(s, self.sqrt_n) + _raise(s, self.sqrt_n))

    def p(self, s: np.ndarray, t: float = 0.0) -> np.ndarray:
        m = self.model
        return -1j * m.mass * m.omega * self.sigma * (_lower(s, self.sqrt_n) - _raise(s, self.sqrt_n))

    def N(self, s: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.n * s

    def X1(self, s: np.ndarray, t: float) -> np.ndarray:
        e = cmath.exp(1j * self.model.omega * t)
        return self.sigma * (e * _lower(s, self.sqrt_n) + e.conjugate() * _raise(s, self.sqrt_n))

    def X2(self, s: np.ndarray, t: float) -> np.ndarray:
        e = cmath.exp(1j * self.model.omega * t)
        return -1j * self.sigma * (e * _lower(s, self.sqrt_n) - e.conjugate() * _raise(s, self.sqrt_n))

    def H(self, s: np.ndarray, t: float) -> np.ndarray:
        out = self.diag_h * s
        drive = self.model.drive
        if not drive.is_zero:
            out = out + drive(t) * _raise(s, self.sqrt_n) + drive.dbar(t) * _lower(s, self.sqrt_n)
        return out


def _em_step(ops: _Ops, states: np.ndarray, t: float, dt: float, dW: np.ndarray,
             eta: float) -> tuple[np.ndarray, np.ndarray]:
    """One Euler-Maruyama step on rows of ``states``; returns (renormalised, pre-norm^2)."""
    qs = ops.q(states)
    mean_q = np.sum((states.conj() * qs).real, axis=-1)[..., None]
    y = qs - mean_q * states
    y2 = ops.q(y) - mean_q * y
    new = states - 1j * dt * ops.H(states, t)
    if eta > 0:
        new = new + (math.sqrt(eta) * dW)[..., None] * y - (0.5 * eta * dt) * y2
    norm2 = np.sum(new.real ** 2 + new.imag ** 2, axis=-1)
    return new / np.sqrt(norm2)[..., None], norm2


def _position_eta(model: OscillatorModel, spec: DecoherenceSpec | None) -> float:
    if spec is None:
        return model.eta
    if spec.kind != "position":
        raise ValueError("the stochastic equation is position-coupled; only 'position' decoherence is supported")
    return spec.rate


def trajectory_step(model: OscillatorModel, state: np.ndarray, t: float, dt: float, dW: float,
                    spec: DecoherenceSpec | None = None, return_norm: bool = False):
    """Advance one state vector by one Euler-Maruyama step of the stochastic equation."""
    if not np.isfinite(dW) or dt <= 0:
        raise ValueError("need finite dW and dt > 0")
    eta = _position_eta(model, spec)
    psi = np.asarray(state, dtype=complex)
    if psi.shape != (model.dim,):
        raise ValueError(f"state has shape {psi.shape}, model has dim {model.dim}")
    new, norm2 = _em_step(_Ops(model), psi[None, :], t, dt, np.array([dW]), eta)
    if norm2[0] < 0.25:
        raise InstabilityError(f"norm dropped to {math.sqrt(norm2[0]):.3g} in one step (dt={dt:g})")
    if return_norm:
        return new[0], float(math.sqrt(norm2[0]))
    return new[0]


ObservableSpec = str | np.ndarray | Callable[[float], np.ndarray]


@dataclass
class TrajectoryResult:
    """One unraveling: quantum expectations (and optionally states) on the record grid."""

    index: int
    times: np.ndarray
    means: dict[str, np.ndarray]
    squares: dict[str, np.ndarray]
    states: np.ndarray | None = None

    def variance(self, name: str) -> np.ndarray:
        return self.squares[name] - self.means[name] ** 2


@dataclass
class EnsembleResult:
    times: np.ndarray
    means: dict[str, np.ndarray]      # name -> (M, n_records) of <B>
    squares: dict[str, np.ndarray]    # name -> (M, n_records) of <B^2>
    mean_rho: np.ndarray              # (n_records, dim, dim) of E[|psi><psi|]
    final_states: np.ndarray          # (M, dim)
    norm_drift: np.ndarray            # (M,) mean of |psi'|^2 - 1 per step, before renormalisation
    operators: dict[str, Callable[[float], np.ndarray]] = field(repr=False)
    seed: int = 0
    dt: float = 0.0
    states: np.ndarray | None = None  # (M, n_records, dim) when requested

    @property
    def M(self) -> int:
        return self.final_states.shape[0]

    def trajectory(self, i: int) -> TrajectoryResult:
        return TrajectoryResult(
            index=i,
            times=self.times,
            means={k: v[i] for k, v in self.means.items()},
            squares={k: v[i] for k, v in self.squares.items()},
            states=None if self.states is None else self.states[i],
        )

    def __iter__(self):
        return (self.trajectory(i) for i in range(self.M))


def _resolve_observables(model: OscillatorModel, ops: _Ops,
                         observables: Sequence[str] | Mapping[str, ObservableSpec]):
    if not isinstance(observables, Mapping):
        observables = {name: name for name in observables}
    sp = model.space
    actions, operators = {}, {}
    builtin_ops = {"q": lambda t: sp.q, "p": lambda t: sp.p, "N": lambda t: sp.number,
                   "X1": sp.x1, "X2": sp.x2}
    for name, obs in observables.items():
        if isinstance(obs, str):
            if obs not in BUILTIN_OBSERVABLES:
                raise ValueError(f"unknown observable {obs!r}; builtins are {BUILTIN_OBSERVABLES}")
            actions[name] = getattr(ops, obs)
            operators[name] = builtin_ops[obs]
        else:
            op_of_t = obs if callable(obs) else (lambda t, m=np.asarray(obs): m)
            actions[name] = lambda s, t, f=op_of_t: s @ f(t).T
            operators[name] = op_of_t
    return actions, operators


def _run_block(model: OscillatorModel, eta: float, psi0: np.ndarray, indices: range, seed: int,
               n_steps: int, h: float, record_steps: np.ndarray, actions, keep_states: bool,
               guard: int, leakage_threshold: float):
    ops = _Ops(model)
    B = len(indices)
    streams = [NoiseStream(seed, i, h) for i in indices]
    states = np.repeat(psi0[None, :], B, axis=0)
    n_rec = len(record_steps)
    means = {k: np.empty((B, n_rec)) for k in actions}
    squares = {k: np.empty((B, n_rec)) for k in actions}
    rho_sum = np.empty((n_rec, model.dim, model.dim), dtype=complex)
    kept = np.empty((B, n_rec, model.dim), dtype=complex) if keep_states else None
    drift = np.zeros(B)

    def record(r: int, t: float) -> None:
        for k, act in actions.items():
            bs = act(states, t)
            means[k][:, r] = np.sum((states.conj() * bs).real, axis=-1)
            squares[k][:, r] = np.sum(bs.real ** 2 + bs.imag ** 2, axis=-1)
        rho_sum[r] = states.T @ states.conj()
        if kept is not None:
            kept[:, r] = states

    record(0, 0.0)
    r = 1
    dW = np.empty((B, 0))
    for k in range(n_steps):
        j = k % NOISE_CHUNK
        if j == 0:
            chunk = min(NOISE_CHUNK, n_steps - k)
            dW = np.stack([s.increments(chunk) for s in streams])
        states, norm2 = _em_step(ops, states, k * h, h, dW[:, j], eta)
        bad = np.flatnonzero(norm2 < 0.25)
        if bad.size:
            i = indices[bad[0]]
            raise InstabilityError(
                f"trajectory {i}: norm dropped to {math.sqrt(norm2[bad[0]]):.3g} at t={(k + 1) * h:.6g}", i)
        drift += norm2 - 1.0
        leak = np.sum(np.abs(states[:, -guard:]) ** 2, axis=-1)
        if leak.max() > leakage_threshold:
            i = indices[int(np.argmax(leak))]
            raise TruncationError(f"trajectory {i}: top-{guard} leakage {leak.max():.3g} at t={(k + 1) * h:.6g}")
        if r < n_rec and k + 1 == record_steps[r]:
            record(r, (k + 1) * h)
            r += 1
    return means, squares, rho_sum, states, drift / max(n_steps, 1), kept


def simulate_ensemble(model: OscillatorModel, psi0: np.ndarray, t_final: float, dt: float | None,
                      M: int, seed: int, record_every: int = 1,
                      observables: Sequence[str] | Mapping[str, ObservableSpec] = DEFAULT_OBSERVABLES,
                      spec: DecoherenceSpec | None = None, threads: int = 1, block_size: int = 256,
                      keep_states: bool = False, guard: int = 2,
                      leakage_threshold: float = LEAKAGE_THRESHOLD,
                      block_order: Sequence[int] | None = None) -> EnsembleResult:
    """Run ``M`` independent unravelings from ``psi0`` and accumulate ``E[|psi><psi|]``.

    Trajectory ``i`` uses ``NoiseStream(seed, i)``.  Work is split into
    blocks of ``block_size`` trajectories that may run on ``threads``
    workers (or in ``block_order``); block results are merged in index order,
    so outputs never depend on the scheduling.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    eta = _position_eta(model, spec)
    if dt is None:
        dt = default_dt(model)
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (model.dim,):
        raise ValueError(f"psi0 has shape {psi0.shape}, model has dim {model.dim}")
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ValueError("psi0 must be normalised")
    n_steps, h = step_count(t_final, dt)
    record_steps = np.unique(np.r_[np.arange(0, n_steps + 1, record_every), n_steps])
    times = record_steps * h
    ops = _Ops(model)
    actions, operators = _resolve_observables(model, ops, observables)

    blocks = [range(i, min(i + block_size, M)) for i in range(0, M, block_size)]
    order = list(block_order) if block_order is not None else list(range(len(blocks)))
    if sorted(order) != list(range(len(blocks))):
        raise ValueError("block_order must be a permutation of the block indices")

    def work(b: int):
        return b, _run_block(model, eta, psi0, blocks[b], seed, n_steps, h, record_steps,
                             actions, keep_states, guard, leakage_threshold)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = dict(pool.map(work, order))
    else:
        done = dict(work(b) for b in order)

    parts = [done[b] for b in range(len(blocks))]
    rho_total = parts[0][2].copy()
    for p in parts[1:]:
        rho_total += p[2]
    return EnsembleResult(
        times=times,
        means={k: np.concatenate([p[0][k] for p in parts]) for k in actions},
        squares={k: np.concatenate([p[1][k] for p in parts]) for k in actions},
        mean_rho=rho_total / M,
        final_states=np.concatenate([p[3] for p in parts]),
        norm_drift=np.concatenate([p[4] for p in parts]),
        operators=operators,
        seed=seed,
        dt=h,
        states=np.concatenate([p[5] for p in parts]) if keep_states else None,
    )
