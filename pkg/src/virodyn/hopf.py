"""Hopf bifurcation of the infected equilibrium at the edges of the mode-0 window.

At r = r1(N) and r = r2(N) the mode-0 cubic has a pair of roots ``+-i omega``.
The bifurcating cycles are spatially constant, so every centre-manifold
quantity reduces to 3x3 complex algebra on constant vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy.optimize import brentq

from .model import ParameterError, Parameters
from .stability import hurwitz_coefficients, mode_matrix, mode_window

__all__ = [
    "LYAPUNOV_TOL",
    "HopfReport",
    "EigenStructure",
    "LyapunovReport",
    "SingularSolveError",
    "hopf_points",
    "frequency",
    "transversality",
    "eigen_structure",
    "center_projection",
    "lyapunov_coefficient",
    "lyapunov_invariant",
    "asymptotic_sign",
    "h_sign_changes",
    "find_n_star",
    "r2_prefactor",
]

#: relative marginal band for the sign of Re c1
LYAPUNOV_TOL = 1e-8


class SingularSolveError(ArithmeticError):
    """A resolvent solve hit a (numerically) singular matrix."""


@dataclass(frozen=True)
class HopfReport:
    n: float
    r1: float
    r2: float
    omega1: float
    omega2: float
    lambda3_1: float
    lambda3_2: float
    transversality1: float
    transversality2: float


@dataclass(frozen=True)
class EigenStructure:
    s: float
    xi: float
    phi: np.ndarray
    psi: np.ndarray
    kappa: complex
    omega: float
    ell: float

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        """L^2 product of two constant fields on the square of side ell."""
        return complex(self.ell**2 * np.sum(np.asarray(u) * np.conj(v)))


@dataclass(frozen=True)
class LyapunovReport:
    g20: complex
    g11: complex
    g02: complex
    g21: complex
    c1: complex
    re_c1: float
    verdict: Literal["stable_cycle", "unstable_cycle", "marginal"]


def frequency(p: Parameters, r: float) -> float:
    n = p.n_burst
    return math.sqrt(
        p.alpha * p.gamma * n
        + p.alpha * p.gamma * p.mu_I * n / p.mu_V
        + p.mu_V * r * (p.mu_I + p.mu_V) / (p.gamma * n * p.t_max)
    )


def _lambda3(p: Parameters, r: float) -> float:
    n = p.n_burst
    return -p.mu_I - p.mu_V - p.mu_V * r / (p.gamma * n * p.t_max) - p.alpha * p.gamma * n / p.mu_V


def transversality(p: Parameters, r: float) -> float:
    """d Re(lambda)/dr of the critical pair at a Hopf point r (mode 0)."""
    q = p.with_(r=r)
    h = hurwitz_coefficients(q, 0.0)
    rate = p.mu_V / (p.gamma * p.n_burst * p.t_max)
    d1p = rate
    d2p = rate * (p.mu_I + p.mu_V)
    d3p = p.mu_I * p.mu_V * (1.0 - rate)
    return (d3p - d1p * h.d2 - h.d1 * d2p) / (2.0 * (h.d2 + h.d1**2))


def hopf_points(p: Parameters, n: Optional[float] = None, *, ode_limit: bool = False) -> HopfReport:
    """Locate both Hopf radii at burst size ``n``.

    ``ode_limit`` zeroes the diffusion constant; mode-0 quantities do not
    depend on it, so the report must not change.
    """
    n = p.n_burst if n is None else n
    q = p.with_(n_burst=n, d_v=0.0) if ode_limit else p.with_(n_burst=n)
    w = mode_window(q, 0, n)
    if w.r1 is None or w.r2 is None:
        raise ParameterError(f"no Hopf point at N={n!r}: N is below N2_0={w.n2!r}")
    r1, r2 = w.r1, w.r2
    return HopfReport(
        n=n,
        r1=r1,
        r2=r2,
        omega1=frequency(q, r1),
        omega2=frequency(q, r2),
        lambda3_1=_lambda3(q, r1),
        lambda3_2=_lambda3(q, r2),
        transversality1=transversality(q, r1),
        transversality2=transversality(q, r2),
    )


def eigen_structure(p: Parameters, r_j: float, omega: Optional[float] = None) -> EigenStructure:
    """Right eigenvector ``phi`` (for i omega) and adjoint vector ``psi`` of M_0 at r_j."""
    q = p.with_(r=r_j)
    omega = frequency(q, r_j) if omega is None else omega
    n = p.n_burst
    s = -p.mu_V * r_j / (p.gamma * n * p.t_max) - p.alpha * p.gamma * n / p.mu_V
    xi = p.alpha * p.gamma * n / p.mu_V - p.mu_T + (1.0 - p.mu_V / (p.gamma * n * p.t_max)) * r_j
    iw = 1j * omega
    phi = np.array([p.mu_V / (n * (s - iw)), (p.mu_V + iw) / (p.mu_I * n), 1.0], dtype=complex)
    psi = np.array([-xi / (s + iw), 1.0, (p.mu_I - iw) / (p.mu_I * n)], dtype=complex)
    pairing = p.ell**2 * np.sum(phi * np.conj(psi))
    scale = p.ell**2 * np.linalg.norm(phi) * np.linalg.norm(psi)
    if abs(pairing) <= 1e-14 * scale:
        raise SingularSolveError("eigenvector pairing vanishes: critical eigenvalue is not simple")
    return EigenStructure(s, xi, phi, psi, complex(1.0 / pairing), omega, p.ell)


def center_projection(es: EigenStructure, v: np.ndarray) -> np.ndarray:
    """Spectral projection of a constant field onto the span of phi and conj(phi)."""
    v = np.asarray(v, dtype=complex)
    a = es.kappa * es.inner(v, es.psi)
    b = np.conj(es.kappa) * es.inner(v, np.conj(es.psi))
    return a * es.phi + b * np.conj(es.phi)


def _solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # row equilibration: M_0 mixes rates of very different magnitude
    rows = np.linalg.norm(m, axis=1, keepdims=True)
    if np.linalg.cond(m / rows) > 1e13:
        raise SingularSolveError("resolvent matrix is numerically singular")
    return np.linalg.solve(m, rhs)


def _k_vectors(p: Parameters, r: float, es: EigenStructure) -> tuple[np.ndarray, np.ndarray]:
    L2 = p.ell**2
    g, kap = p.gamma, es.kappa
    p1, p2 = es.phi[0], es.phi[1]
    q1 = np.conj(es.psi[0])

    def build(lead: complex, ph: complex) -> np.ndarray:
        return np.array(
            [
                lead * (2 * L2 * np.real(kap * p1 * q1) - 1) - 2 * g * L2 * ph * np.real(kap * p1),
                2 * L2 * lead * np.real(kap * p2 * q1) + g * ph * (1 - 2 * L2 * np.real(kap * p2)),
                2 * L2 * lead * np.real(kap * q1) - 2 * g * L2 * ph * np.real(kap),
            ],
            dtype=complex,
        )

    k1 = build(r * p1**2 / p.t_max + g * p1, p1)
    k2 = build(r * abs(p1) ** 2 / p.t_max + g * p1.real, p1.real)
    return k1, k2


def lyapunov_coefficient(
    p: Parameters,
    r_j: float,
    *,
    g21_convention: Literal["corrected", "printed"] = "corrected",
    tol: float = LYAPUNOV_TOL,
) -> LyapunovReport:
    """First Lyapunov coefficient c1 at the Hopf point r_j.

    ``g21_convention="printed"`` keeps the cubic coefficient at half the
    value required by the normal-form reduction (see the notes file); the
    default gives the value that agrees with :func:`lyapunov_invariant`.
    """
    q = p.with_(r=r_j)
    m0 = mode_matrix(q, 0.0)
    es = eigen_structure(p, r_j)
    w = es.omega
    L2 = p.ell**2
    kap, g, T = es.kappa, p.gamma, p.t_max
    p1 = es.phi[0]
    q1, q2 = np.conj(es.psi[0]), np.conj(es.psi[1])

    k1, k2 = _k_vectors(p, r_j, es)
    rk1 = _solve(2j * w * np.eye(3) - m0, k1)
    mk2 = _solve(m0, k2)

    g20 = -2 * r_j * kap * p1**2 * q1 * L2 / T + 2 * g * kap * p1 * (q2 - q1) * L2
    g11 = -2 * r_j * kap * abs(p1) ** 2 * q1 * L2 / T + 2 * g * kap * L2 * (q2 - q1) * p1.real
    g02 = -2 * r_j * np.conj(p1) ** 2 * kap * q1 * L2 / T + 2 * g * kap * np.conj(p1) * (q2 - q1) * L2
    g21 = (
        -2 * r_j * kap * q1 * L2 / T * (np.conj(p1) * rk1[0] - 2 * p1 * mk2[0])
        + g * kap * (q2 - q1) * L2 * (np.conj(p1) * rk1[2] + rk1[0] - 2 * p1 * mk2[2] - 2 * mk2[0])
    )
    if g21_convention == "corrected":
        g21 = 2 * g21
    elif g21_convention != "printed":
        raise ValueError(f"unknown g21 convention {g21_convention!r}")

    quad = 1j / (2 * w) * (g20 * g11 - 2 * abs(g11) ** 2 - abs(g02) ** 2 / 3)
    c1 = quad + g21 / 2
    re_c1 = float(c1.real)
    scale = abs(quad) + abs(g21) / 2
    if abs(re_c1) <= tol * scale:
        verdict = "marginal"
    elif re_c1 < 0:
        verdict = "stable_cycle"
    else:
        verdict = "unstable_cycle"
    return LyapunovReport(complex(g20), complex(g11), complex(g02), complex(g21), complex(c1), re_c1, verdict)


def _quadratic_form(p: Parameters, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Symmetric bilinear part of the reaction terms (second derivative)."""
    bil = p.gamma * (x[0] * y[2] + x[2] * y[0])
    return np.array([-2 * p.r / p.t_max * x[0] * y[0] - bil, bil, 0.0 * x[0]])


def lyapunov_invariant(p: Parameters, r_j: float) -> float:
    """Re c1 from the coordinate-free normal-form formula.

    Uses numerically computed eigenvectors and no problem-specific algebra,
    so it serves as an independent check of :func:`lyapunov_coefficient`.
    c1 scales with |v|^2, so the right eigenvector is rescaled to third
    component 1 like ``phi`` in :func:`eigen_structure`.
    """
    q = p.with_(r=r_j)
    m0 = mode_matrix(q, 0.0)
    ev, right = np.linalg.eig(m0)
    i = int(np.argmax(ev.imag))
    w = ev[i].imag
    v = right[:, i] / right[2, i]
    evl, left = np.linalg.eig(m0.T)
    u = left[:, int(np.argmin(abs(evl + 1j * w)))]
    u = u / np.conj(np.vdot(u, v))
    b = lambda x, y: _quadratic_form(q, x, y)
    a11 = np.linalg.solve(m0, b(v, np.conj(v)))
    a20 = np.linalg.solve(2j * w * np.eye(3) - m0, b(v, v))
    return float(np.real(np.vdot(u, -2 * b(v, a11) + b(np.conj(v), a20))) / 2)


# -- large t_max asymptotics --------------------------------------------------


def asymptotic_sign(p: Parameters, n: float) -> tuple[float, float]:
    """The quintic H(N) and positive denominator D(N) of the large-t_max expansion."""
    a, g, mI, mV = p.alpha, p.gamma, p.mu_I, p.mu_V
    h = (
        3 * a**5 * g**5 * (mI + mV) ** 2 * n**5
        - a**4 * g**4 * mV * (mI + mV) * (12 * mI**2 + 35 * mI * mV + 12 * mV**2) * n**4
        - a**3 * g**3 * mV**3
        * (26 * mI**4 + 151 * mI**3 * mV + 247 * mI**2 * mV**2 + 151 * mI * mV**3 + 26 * mV**4)
        * n**3
        - a**2 * g**2 * mV**3 * (mI + mV)
        * (12 * mI**4 + 85 * mI**3 * mV + 134 * mI**2 * mV**2 + 85 * mI * mV**3 + 12 * mV**4)
        * n**2
        - a * g * mV**4 * (mI + mV) ** 2
        * (mI**4 + 13 * mI**3 * mV + 35 * mI**2 * mV**2 + 13 * mI * mV**3 + mV**4)
        * n
        - 4 * mI**2 * mV**7 * (mI + mV) ** 3
    )
    agn = a * g * n
    d = (
        2 * a
        * (mI * mV + mV**2 + agn)
        * (mI**2 * mV**2 + 2 * mI * mV**3 + 6 * agn * mI * mV + mV**4 + 6 * agn * mV**2 + agn**2)
        * (agn**2 + 3 * agn * mI * mV + 3 * agn * mV**2 + mI**2 * mV**2 + 2 * mI * mV**3 + mV**4)
        * (mI**2 * mV + 2 * mI * mV**2 + mI * mV + mV**3 + mV**2 + agn * mV)
        * n
    )
    return h, d


def _h(p: Parameters, n: float) -> float:
    return asymptotic_sign(p, n)[0]


def h_sign_changes(p: Parameters, n_lo: float = 1e-6, n_hi: float = 1e12, points: int = 4000) -> list[float]:
    """All sign changes of H on a log grid, each refined to a root."""
    grid = np.geomspace(n_lo, n_hi, points)
    vals = np.array([_h(p, x) for x in grid])
    idx = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    return [brentq(lambda x: _h(p, x), grid[i], grid[i + 1], rtol=1e-12) for i in idx]


def find_n_star(p: Parameters) -> float:
    """First positive zero of H: doubling bracket from 1e-6, then bisection."""
    lo = 1e-6
    if _h(p, lo) >= 0:
        raise ArithmeticError("H is not negative near N = 0")
    hi = 2 * lo
    while _h(p, hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            raise ArithmeticError("no sign change of H below N = 1e12")
    return brentq(lambda x: _h(p, x), lo, hi, xtol=1e-12, rtol=1e-10)


def r2_prefactor(p: Parameters, n: Optional[float] = None, **kw) -> float:
    """Re c1(r2) rescaled by mu_I^2 N^2 t_max^2 / (mu_I + mu_V)^3.

    The large-t_max limit of this number is the constant in front of the
    leading term of Re c1(r2).
    """
    n = p.n_burst if n is None else n
    q = p.with_(n_burst=n)
    rep = hopf_points(q)
    re_c1 = lyapunov_coefficient(q, rep.r2, **kw).re_c1
    return re_c1 * p.mu_I**2 * n**2 * p.t_max**2 / (p.mu_I + p.mu_V) ** 3
