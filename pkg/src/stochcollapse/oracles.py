"""Closed-form results for the decoherent forced oscillator.

Everything here is hbar = 1 and uses ``lam = eta * sigma**2``.

* :func:`moment_oracle` evolves first and second moments of ``a, a^dag``
  exactly, reducing the drive cross terms to quadratures.
* :func:`generating_function_K` evaluates the normal-ordered generating
  function ``K_ab(t) = Tr(exp(a a^dag e^{-iwt}) exp(b a e^{iwt}) rho(t))``.
* :func:`moments_from_K` reads off ``Tr((a^dag)^n a^m rho(t))`` from exact
  bivariate power-series arithmetic on the exponent.
* :func:`coherent_element_L` gives ``Tr(exp(a a^dag e^{-iwt}) |0><0| exp(b a e^{iwt}) rho(t))``
  for a coherent (or vacuum) initial state by acting with the Gaussian
  smoothing operator on the decoherence-free element.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np

from .fock import FockSpace, expectation_value
from .model import OscillatorModel, drive_integrals, quadrature_grid, rk4_grid

MAX_ORDER = 6


# -- moments -----------------------------------------------------------------

@dataclass(frozen=True)
class MomentSet:
    """First and second moments of the ladder operators at time ``t``.

    The quadrature moments (``x1`` ... ``x12``) are derived from the ladder
    moments using ``X1(t), X2(t)`` at the same ``t``; ``x12`` is the
    symmetrised ``<X1 X2 + X2 X1>``.
    """

    t: float
    a: complex
    adag: complex
    aa: complex
    adagadag: complex
    n: complex
    sigma: float
    omega: float

    @property
    def aadag(self) -> complex:
        return 1.0 + self.n

    @property
    def _phase(self) -> complex:
        return cmath.exp(1j * self.omega * self.t)

    @property
    def x1(self) -> float:
        e = self._phase
        return (self.sigma * (self.a * e + self.adag / e)).real

    @property
    def x2(self) -> float:
        e = self._phase
        return (-1j * self.sigma * (self.a * e - self.adag / e)).real

    @property
    def x1sq(self) -> float:
        e2 = self._phase ** 2
        return (self.sigma ** 2 * (self.aa * e2 + self.adagadag / e2 + 2 * self.n + 1)).real

    @property
    def x2sq(self) -> float:
        e2 = self._phase ** 2
        return (self.sigma ** 2 * (-self.aa * e2 - self.adagadag / e2 + 2 * self.n + 1)).real

    @property
    def x12(self) -> float:
        e2 = self._phase ** 2
        return (-2j * self.sigma ** 2 * (self.aa * e2 - self.adagadag / e2)).real

    def as_dict(self) -> dict[str, complex | float]:
        return {"t": self.t, "a": self.a, "adag": self.adag, "aa": self.aa,
                "adagadag": self.adagadag, "n": self.n, "aadag": self.aadag,
                "X1": self.x1, "X2": self.x2, "X1^2": self.x1sq, "X2^2": self.x2sq,
                "X1X2+X2X1": self.x12}

    @classmethod
    def from_state(cls, space: FockSpace, state: np.ndarray, t: float = 0.0) -> "MomentSet":
        """Moments of a state vector or density matrix."""
        a, ad = space.a, space.adag
        ev = lambda op: expectation_value(op, state)  # noqa: E731
        return cls(t, ev(a), ev(ad), ev(a @ a), ev(ad @ ad), ev(space.number),
                   space.sigma, space.omega)


@dataclass(frozen=True)
class DecoherenceShifts:
    """Exact eta-dependent parts of the moments; independent of the drive."""

    t: float
    a: complex
    adag: complex
    aa: complex
    adagadag: complex
    n: float
    aadag: float
    x1: float
    x2: float
    x1sq: float
    x2sq: float
    x12: float
    x_commutator: float
    energy: float


def decoherence_shifts(model: OscillatorModel, t: float) -> DecoherenceShifts:
    lam, w, s2 = model.lam, model.omega, model.sigma ** 2
    sin_wt = math.sin(w * t)
    return DecoherenceShifts(
        t=t, a=0j, adag=0j,
        aa=-(lam / w) * cmath.exp(-1j * w * t) * sin_wt,
        adagadag=-(lam / w) * cmath.exp(1j * w * t) * sin_wt,
        n=lam * t, aadag=lam * t,
        x1=0.0, x2=0.0,
        x1sq=2 * lam * s2 * (t - math.sin(2 * w * t) / (2 * w)),
        x2sq=2 * lam * s2 * (t + math.sin(2 * w * t) / (2 * w)),
        x12=-4 * lam * s2 / w * sin_wt ** 2,
        x_commutator=0.0,
        # w * lam * t == eta t / (2 m)
        energy=w * lam * t,
    )


def moment_oracle(model: OscillatorModel, initial: MomentSet, t: float,
                  step: float | None = None) -> MomentSet:
    """Exact first/second moments at ``t`` from the moments at ``t = 0``.

    The linear moments rotate and pick up the drive integral; the quadratic
    ones are the linear-response integrals with the linear moments
    substituted, evaluated by the same RK4/Simpson engine as the drive
    integrals.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if not model.drive.covers(0.0, t):
        raise ValueError(f"drive is not defined on [0, {t}]")
    w, lam = model.omega, model.lam
    a0, ad0 = initial.a, initial.adag
    drive = model.drive
    if t == 0 or drive.is_zero:
        D = Dbar = I_aa = I_adad = I_n = 0j
    else:
        def rhs(v: float, y: np.ndarray) -> np.ndarray:
            e = cmath.exp(1j * w * v)
            d, db = drive(v), drive.dbar(v)
            D_v, Dbar_v = y[0], y[1]
            return np.array([
                e * d,
                db / e,
                # e^{2iwv} 2i d(v) Tr rho(v) a
                2j * d * e * (a0 - 1j * D_v),
                # e^{-2iwv} 2i dbar(v) Tr rho(v) a^dag
                2j * db / e * (ad0 + 1j * Dbar_v),
                # d(v) Tr rho(v) a^dag - dbar(v) Tr rho(v) a
                d * e * (ad0 + 1j * Dbar_v) - db / e * (a0 - 1j * D_v),
            ])

        grid = quadrature_grid(model, t, step)
        D, Dbar, I_aa, I_adad, I_n = rk4_grid(rhs, np.zeros(5, dtype=complex), grid)[-1]

    e = cmath.exp(1j * w * t)
    sh = decoherence_shifts(model, t)
    return MomentSet(
        t=t,
        a=(a0 - 1j * D) / e,
        adag=(ad0 + 1j * Dbar) * e,
        aa=(initial.aa - I_aa) / e ** 2 + sh.aa,
        adagadag=(initial.adagadag + I_adad) * e ** 2 + sh.adagadag,
        n=initial.n - 1j * I_n + lam * t,
        sigma=model.sigma,
        omega=w,
    )


# -- bivariate truncated power series -----------------------------------------

class TruncatedSeries:
    """Polynomial in (alpha, beta) truncated at total degree ``order``.

    ``coef[i, j]`` multiplies ``alpha**i * beta**j``; entries with
    ``i + j > order`` are kept at zero.
    """

    def __init__(self, coef: np.ndarray, order: int):
        self.order = order
        c = np.zeros((order + 1, order + 1), dtype=complex)
        src = np.asarray(coef, dtype=complex)
        k = min(order + 1, src.shape[0]), min(order + 1, src.shape[1])
        c[:k[0], :k[1]] = src[:k[0], :k[1]]
        self.coef = np.where(_degree_mask(order), c, 0)

    @classmethod
    def from_terms(cls, terms: dict[tuple[int, int], complex], order: int) -> "TruncatedSeries":
        c = np.zeros((order + 1, order + 1), dtype=complex)
        for (i, j), v in terms.items():
            if i + j <= order:
                c[i, j] += v
        return cls(c, order)

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        return TruncatedSeries(self.coef + other.coef, self.order)

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            return TruncatedSeries(self.coef * other, self.order)
        n = self.order
        out = np.zeros_like(self.coef)
        for i in range(n + 1):
            for j in range(n + 1 - i):
                c = self.coef[i, j]
                if c != 0:
                    out[i:, j:] += c * other.coef[: n + 1 - i, : n + 1 - j]
        return TruncatedSeries(out, n)

    __rmul__ = __mul__

    def exp(self) -> "TruncatedSeries":
        c0 = self.coef[0, 0]
        p = TruncatedSeries(self.coef, self.order)
        p.coef[0, 0] = 0
        total = TruncatedSeries.from_terms({(0, 0): 1.0}, self.order)
        term = total
        for k in range(1, self.order + 1):
            term = term * p * (1.0 / k)
            total = total + term
        return total * cmath.exp(c0)

    def __getitem__(self, ij: tuple[int, int]) -> complex:
        return complex(self.coef[ij])


def _degree_mask(order: int) -> np.ndarray:
    i, j = np.indices((order + 1, order + 1))
    return i + j <= order


# -- generating function K -----------------------------------------------------

K0Function = Callable[[complex, complex], complex]


def vacuum_K0(alpha: complex, beta: complex) -> complex:
    return 1.0 + 0j


def coherent_K0(z: complex) -> K0Function:
    """``Tr(e^{alpha a^dag} e^{beta a} |z><z|) = exp(alpha conj(z) + beta z)``."""
    z = complex(z)
    return lambda alpha, beta: cmath.exp(alpha * z.conjugate() + beta * z)


def density_K0(space: FockSpace, rho0: np.ndarray) -> K0Function:
    """Numerical ``Tr(e^{alpha a^dag} e^{beta a} rho0)`` on the truncated space."""
    from scipy.linalg import expm

    return lambda alpha, beta: complex(np.trace(expm(alpha * space.adag) @ expm(beta * space.a) @ rho0))


@dataclass(frozen=True)
class GeneratingFunctionEval:
    alpha: complex
    beta: complex
    t: float
    value: complex
    initial_value: complex


def K_exponent(model: OscillatorModel, t: float, D: complex | None = None,
               Dbar: complex | None = None) -> tuple[complex, complex, complex, complex, complex]:
    """Coefficients ``(c_ab, c_aa, c_bb, c_a, c_b)`` of the time-dependent exponent.

    ``log K(t) - log K(0) = c_ab ab + c_aa a^2 + c_bb b^2 + c_a a + c_b b``.
    """
    lam, w = model.lam, model.omega
    if D is None or Dbar is None:
        ints = drive_integrals(model, t)
        D, Dbar = ints.D, ints.Dbar
    s = math.sin(w * t)
    return (lam * t,
            -(lam / (2 * w)) * cmath.exp(-1j * w * t) * s,
            -(lam / (2 * w)) * cmath.exp(1j * w * t) * s,
            1j * Dbar,
            -1j * D)


def generating_function_K(model: OscillatorModel, alpha: complex, beta: complex, t: float,
                          K0: K0Function = vacuum_K0) -> GeneratingFunctionEval:
    c_ab, c_aa, c_bb, c_a, c_b = K_exponent(model, t)
    k0 = complex(K0(alpha, beta))
    expo = c_ab * alpha * beta + c_aa * alpha ** 2 + c_bb * beta ** 2 + c_a * alpha + c_b * beta
    return GeneratingFunctionEval(alpha, beta, t, cmath.exp(expo) * k0, k0)


def _initial_series(initial, order: int, space: FockSpace | None) -> TruncatedSeries:
    """Series of ``K(0)``: coefficient of ``a^i b^j`` is ``Tr(a^dag^i a^j rho0) / (i! j!)``."""
    if initial is None:
        return TruncatedSeries.from_terms({(0, 0): 1.0}, order)
    if np.ndim(initial) == 0:
        z = complex(initial)
        return TruncatedSeries.from_terms({(1, 0): z.conjugate(), (0, 1): z}, order).exp()
    rho0 = np.asarray(initial, dtype=complex)
    if space is None or rho0.shape != (space.dim, space.dim):
        raise ValueError("density-matrix initial state must match the model's Fock space")
    ad_pows = [np.eye(space.dim, dtype=complex)]
    for _ in range(order):
        ad_pows.append(ad_pows[-1] @ space.adag)
    a_pows = [p.conj().T for p in ad_pows]
    terms = {}
    for i in range(order + 1):
        for j in range(order + 1 - i):
            terms[(i, j)] = expectation_value(ad_pows[i] @ a_pows[j], rho0) / (factorial(i) * factorial(j))
    return TruncatedSeries.from_terms(terms, order)


def K_series(model: OscillatorModel, t: float, initial=None, order: int = MAX_ORDER) -> TruncatedSeries:
    c_ab, c_aa, c_bb, c_a, c_b = K_exponent(model, t)
    expo = TruncatedSeries.from_terms(
        {(1, 1): c_ab, (2, 0): c_aa, (0, 2): c_bb, (1, 0): c_a, (0, 1): c_b}, order)
    return expo.exp() * _initial_series(initial, order, model.space)


def moments_from_K(model: OscillatorModel, n: int, m: int, t: float, initial=None,
                   max_order: int = MAX_ORDER) -> complex:
    """``Tr((a^dag)^n a^m rho(t))`` from the closed-form generating function.

    ``initial`` is ``None`` (vacuum), a complex coherent amplitude, or a
    density matrix on the model's Fock space.
    """
    if n < 0 or m < 0:
        raise ValueError("orders must be non-negative")
    if n + m > max_order:
        raise ValueError(f"order n+m={n + m} exceeds max order {max_order}")
    series = K_series(model, t, initial, max_order)
    phase = cmath.exp(-1j * model.omega * t * (m - n))
    return series[n, m] * factorial(n) * factorial(m) * phase


# -- coherent-state matrix elements L ------------------------------------------

@dataclass(frozen=True)
class CoherentElementEval:
    alpha: complex
    beta: complex
    t: float
    value: complex
    z: complex


def _smoothing_matrix(model: OscillatorModel, t: float) -> np.ndarray:
    """Coefficients ``A`` of ``exp(1/2 d^T A d)`` in the Gaussian smoothing operator."""
    lam, w = model.lam, model.omega
    s = math.sin(w * t) / w
    e = cmath.exp(1j * w * t)
    return np.array([[-lam * s * e, lam * t], [lam * t, -lam * s / e]], dtype=complex)


def coherent_element_L(model: OscillatorModel, alpha: complex, beta: complex, t: float,
                       z: complex = 0.0) -> CoherentElementEval:
    """Unnormalised coherent-state matrix element of ``rho(t)`` for ``rho(0) = |z><z|``.

    ``exp(-a b) L0`` is ``exp(1/2 x^T B x + b.x + c0)`` with ``x = (alpha, beta)``
    and ``B = [[0, -1], [-1, 0]]``; the smoothing operator acts on it in
    closed form through the 2x2 matrix ``I - A B``.
    """
    ints = drive_integrals(model, t)
    D, Dbar = ints.D, ints.Dbar
    z = complex(z)
    zc = z.conjugate()
    # exp(-ab) L0 for rho(0) = |z><z|, with gamma = alpha + iD and delta = beta - i Dbar
    lin = np.array([1j * Dbar + zc, z - 1j * D])
    c0 = -D * Dbar - abs(z) ** 2 - 1j * Dbar * z + 1j * D * zc
    B = np.array([[0, -1], [-1, 0]], dtype=complex)
    A = _smoothing_matrix(model, t)
    Mq = np.eye(2) - A @ B
    det = np.linalg.det(Mq)
    if abs(det) < 1e-14 or det.real <= 0:
        raise ValueError(f"Gaussian reduction does not converge: I - A B = {Mq.tolist()}, det = {det}")
    Minv = np.linalg.inv(Mq)
    x = np.array([alpha, beta], dtype=complex)
    expo = (0.5 * x @ (B @ Minv) @ x + lin @ Minv @ x + 0.5 * lin @ (Minv @ A) @ lin + c0
            + alpha * beta)
    value = cmath.exp(expo) / cmath.sqrt(det)
    return CoherentElementEval(complex(alpha), complex(beta), t, value, z)


def coherent_element_numeric(space: FockSpace, rho: np.ndarray, alpha: complex, beta: complex,
                             t: float) -> complex:
    """Direct evaluation of the same trace on a numerically evolved density matrix."""
    n = np.arange(space.dim)
    inv_sqrt_fact = np.exp(-0.5 * np.array([math.lgamma(k + 1) for k in n]))
    e = cmath.exp(1j * space.omega * t)
    ket = (alpha / e) ** n * inv_sqrt_fact   # exp(alpha a^dag e^{-iwt}) |0>
    bra = (beta * e) ** n * inv_sqrt_fact    # <0| exp(beta a e^{iwt})
    return complex(bra @ rho @ ket)
