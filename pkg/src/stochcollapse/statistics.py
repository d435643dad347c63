"""Ensemble statistics over unravelings.

For an observable ``B`` each trajectory carries a quantum mean ``<B>`` and
variance ``<(dB)^2> = <B^2> - <B>^2``.  Averaging over trajectories,

    E[<(dB)^2>] = <<(dB)^2>> + C,   C = -E[(<B> - <<B>>)^2] <= 0,

where ``<<.>>`` is taken with the ensemble density matrix ``E[|psi><psi|]``.
So the mixed-state variance bounds the mean single-run variance from above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .model import OscillatorModel
from .trajectory import EnsembleResult


@dataclass(frozen=True)
class VarianceReport:
    """Per-time variance bookkeeping for one observable (arrays over ``times``)."""

    label: str
    times: np.ndarray
    mean_expectation: np.ndarray      # E[<B>]
    mean_square: np.ndarray           # E[<B^2>]
    mean_of_pure_variance: np.ndarray  # E[<(dB)^2>]
    mixed_variance: np.ndarray        # <<(dB)^2>> from E[rho]
    correction: np.ndarray            # C
    correction_from_dispersion: np.ndarray  # -(sample variance of <B>), ddof=0
    stderr_pure: np.ndarray
    stderr_correction: np.ndarray
    M: int


def ensemble_stats(ensemble: EnsembleResult, B: str | np.ndarray | Callable[[float], np.ndarray],
                   label: str | None = None) -> VarianceReport:
    """Variance report for a recorded observable name, or any operator if states were kept."""
    M = ensemble.M
    if M < 1:
        raise ValueError("empty ensemble")
    times = ensemble.times
    if isinstance(B, str):
        label = label or B
        means, squares = ensemble.means[B], ensemble.squares[B]
        op_of_t = ensemble.operators[B]
    else:
        if ensemble.states is None:
            raise ValueError("operator observables need an ensemble run with keep_states=True")
        op_of_t = B if callable(B) else (lambda t, m=np.asarray(B): m)
        label = label or "B"
        means = np.empty((M, len(times)))
        squares = np.empty((M, len(times)))
        for r, t in enumerate(times):
            s = ensemble.states[:, r]
            bs = s @ op_of_t(t).T
            means[:, r] = np.sum((s.conj() * bs).real, axis=-1)
            squares[:, r] = np.sum(np.abs(bs) ** 2, axis=-1)

    pure_var = squares - means ** 2
    mean_m = means.mean(axis=0)
    mixed = np.empty(len(times))
    tr_rho_b = np.empty(len(times))
    for r, t in enumerate(times):
        Bt = op_of_t(t)
        rho = ensemble.mean_rho[r]
        tr_b = np.sum(rho * Bt.T).real
        tr_b2 = np.sum(rho * (Bt @ Bt).T).real
        tr_rho_b[r] = tr_b
        mixed[r] = tr_b2 - tr_b ** 2
    correction = tr_rho_b ** 2 - np.mean(means ** 2, axis=0)
    dev2 = (means - mean_m) ** 2
    ddof = 1 if M > 1 else 0
    return VarianceReport(
        label=label,
        times=times,
        mean_expectation=mean_m,
        mean_square=squares.mean(axis=0),
        mean_of_pure_variance=pure_var.mean(axis=0),
        mixed_variance=mixed,
        correction=correction,
        correction_from_dispersion=-dev2.mean(axis=0),
        stderr_pure=pure_var.std(axis=0, ddof=ddof) / math.sqrt(M),
        stderr_correction=dev2.std(axis=0, ddof=ddof) / math.sqrt(M),
        M=M,
    )


@dataclass(frozen=True)
class InequalityCheck:
    passed: bool
    worst_margin: float
    worst_time: float
    margins: np.ndarray


def variance_inequality_check(report: VarianceReport, mixed_reference: np.ndarray | None = None,
                              n_se: float = 3.0, atol: float = 1e-12) -> InequalityCheck:
    """Check ``E[<(dB)^2>] <= <<(dB)^2>> + n_se * stderr`` at every time.

    ``mixed_reference`` replaces the ensemble's own mixed variance, e.g. by
    the master-equation value on the same grid.  ``atol`` absorbs round-off
    where both sides coincide, as at ``t = 0``.
    """
    mixed = report.mixed_variance if mixed_reference is None else np.asarray(mixed_reference)
    margins = mixed + n_se * report.stderr_pure - report.mean_of_pure_variance
    k = int(np.argmin(margins))
    return InequalityCheck(bool(np.all(margins >= -atol)), float(margins[k]), float(report.times[k]), margins)


@dataclass(frozen=True)
class LargeTimeBounds:
    t: float
    x_variance: float   # bound on E[<(dX_{1,2})^2>]
    n_variance: float   # bound on E[<(dN)^2>]
    n_rms: float        # sqrt of n_variance
    n_growth: float     # secular <<N>>


def large_time_bounds(model: OscillatorModel, t: float) -> LargeTimeBounds:
    """Leading large-time bounds, valid when drive effects are negligible or bounded."""
    eta, s2 = model.eta, model.sigma ** 2
    return LargeTimeBounds(
        t=t,
        x_variance=2 * eta * s2 ** 2 * t,
        n_variance=(eta * s2 * t) ** 2,
        n_rms=eta * s2 * t,
        n_growth=eta * s2 * t,
    )


@dataclass(frozen=True)
class ItoIsometryReport:
    estimate: float
    stderr: float
    target: float
    passed: bool

    @property
    def z_score(self) -> float:
        return (self.estimate - self.target) / self.stderr if self.stderr > 0 else 0.0


def ito_isometry_check(A: Callable, B: Callable, t: float, M: int = 10_000, seed: int = 0,
                       n_steps: int = 1000, target: float | None = None, n_se: float = 4.0,
                       chunk: int = 1000) -> ItoIsometryReport:
    """Monte Carlo ``E[int A dW int B dW]`` against ``int_0^t A(u) B(u) du``.

    Stochastic integrals are left-point (Ito) sums on ``n_steps`` intervals;
    ``A`` and ``B`` must accept numpy arrays.
    """
    h = t / n_steps
    u = np.arange(n_steps) * h
    a_u = np.broadcast_to(np.asarray(A(u), dtype=float), u.shape)
    b_u = np.broadcast_to(np.asarray(B(u), dtype=float), u.shape)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    products = np.empty(M)
    for start in range(0, M, chunk):
        k = min(chunk, M - start)
        dW = math.sqrt(h) * rng.standard_normal((k, n_steps))
        products[start:start + k] = (dW @ a_u) * (dW @ b_u)
    if target is None:
        target = quad(lambda x: float(A(np.array(x))) * float(B(np.array(x))), 0.0, t, limit=200)[0]
    est = float(products.mean())
    se = float(products.std(ddof=1) / math.sqrt(M))
    return ItoIsometryReport(est, se, float(target), abs(est - target) <= n_se * se)
