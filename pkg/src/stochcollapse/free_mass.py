"""Free-mass limit at the level of first and second moments.

For ``H = p^2 / 2m`` with the double-commutator decoherence term the moment
hierarchy closes:

    d<q>/dt = <p>/m             d<p>/dt = 0
    d<q^2>/dt = <qp+pq>/m       d<qp+pq>/dt = 2<p^2>/m       d<p^2>/dt = eta hbar^2

which integrates to ballistic motion plus the decoherence shifts
``eta hbar^2 t`` (p^2), ``eta hbar^2 t^2 / m`` (qp+pq) and
``eta hbar^2 t^3 / (3 m^2)`` (q^2).  The energy therefore grows as
``eta hbar^2 t / (2m)``, twice the rate that follows from the commonly quoted
momentum diffusion coefficient.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class FreeMassMoments:
    t: float
    mean_q: float
    mean_p: float
    q2: float
    p2: float
    qp_sym: float  # <qp + pq>

    def as_array(self) -> np.ndarray:
        return np.array([self.mean_q, self.mean_p, self.q2, self.p2, self.qp_sym])

    @property
    def var_q(self) -> float:
        return self.q2 - self.mean_q ** 2

    @property
    def var_p(self) -> float:
        return self.p2 - self.mean_p ** 2

    def uncertainty_ok(self, hbar: float = 1.0, tol: float = 1e-12) -> bool:
        return self.var_q * self.var_p >= hbar ** 2 / 4 - tol


def free_moment_rhs(mass: float, eta: float, y: np.ndarray, hbar: float = 1.0) -> np.ndarray:
    """Time derivative of ``(<q>, <p>, <q^2>, <p^2>, <qp+pq>)``."""
    mean_q, mean_p, q2, p2, qp = y
    return np.array([mean_p / mass, 0.0, qp / mass, eta * hbar ** 2, 2 * p2 / mass])


def evolve_free_moments(mass: float, eta: float, initial: FreeMassMoments, t: float,
                        hbar: float = 1.0) -> FreeMassMoments:
    if t < 0:
        raise ValueError("t must be >= 0")
    m, c = mass, eta * hbar ** 2
    q0, p0 = initial.mean_q, initial.mean_p
    return FreeMassMoments(
        t=initial.t + t,
        mean_q=q0 + p0 * t / m,
        mean_p=p0,
        q2=initial.q2 + initial.qp_sym * t / m + initial.p2 * t ** 2 / m ** 2 + c * t ** 3 / (3 * m ** 2),
        p2=initial.p2 + c * t,
        qp_sym=initial.qp_sym + 2 * initial.p2 * t / m + c * t ** 2 / m,
    )


def free_moment_shifts(mass: float, eta: float, t: float, hbar: float = 1.0) -> dict[str, float]:
    c = eta * hbar ** 2
    return {"p2": c * t, "qp_sym": c * t ** 2 / mass, "q2": c * t ** 3 / (3 * mass ** 2)}


def minimum_uncertainty_moments(mass: float, omega: float = 1.0, hbar: float = 1.0) -> FreeMassMoments:
    """Ground-state-like second moments of width ``sqrt(hbar / (2 m omega))``."""
    s2 = hbar / (2 * mass * omega)
    return FreeMassMoments(0.0, 0.0, 0.0, s2, hbar ** 2 / (4 * s2), 0.0)


def free_generating_exponent(mass: float, eta: float, t: float, hbar: float = 1.0):
    """``(c_aa, c_ab, c_bb)`` with ``log K^f(t) - log K^f(0) = c_aa a^2 + c_ab a b + c_bb b^2``."""
    c = eta * hbar ** 2 * t / 6
    return c * t ** 2 / mass ** 2, -3 * c * t / mass, 3 * c


def free_generating_function(mass: float, eta: float, alpha: complex, beta: complex, t: float,
                             K0f: Callable[[complex, complex], complex] | None = None,
                             hbar: float = 1.0) -> complex:
    """``Tr(exp(alpha (q - t p/m)) exp(beta p) rho(t))`` from its value at ``t = 0``."""
    c_aa, c_ab, c_bb = free_generating_exponent(mass, eta, t, hbar)
    k0 = 1.0 if K0f is None else K0f(alpha, beta)
    return cmath.exp(c_aa * alpha ** 2 + c_ab * alpha * beta + c_bb * beta ** 2) * k0


def energy_growth_free(mass: float, eta: float, t: float, hbar: float = 1.0) -> float:
    """Decoherence-induced increase of ``<p^2/2m>``: ``eta hbar^2 t / (2m)``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return eta * hbar ** 2 * t / (2 * mass)


def free_moment_table(mass: float, eta: float, initial: FreeMassMoments, times) -> list[FreeMassMoments]:
    return [replace(evolve_free_moments(mass, eta, initial, float(t)), t=float(t)) for t in times]
