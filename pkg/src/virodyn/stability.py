"""Linear stability of the infected equilibrium, mode by mode.

Linearising about the infected state and projecting on a Laplacian eigenmode
with eigenvalue ``lambda_k`` gives a 3x3 matrix ``M_k``.  Its characteristic
cubic ``x^3 + d1 x^2 + d2 x + d3`` is stable iff d1 > 0, d3 > 0 and
``D2 = d1 d2 - d3 > 0``.  Only D2 can change sign inside the infected region;
as a function of r it is a quadratic ``A r^2 + B(N) r + C(N)`` over a positive
factor, and the instability sets P_k are the (N, r) windows where it is
negative.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import IO, Iterable, Literal, Optional, Sequence

import numpy as np

from .model import (
    ParameterError,
    Parameters,
    n_crit,
    reproduction_ratio,
    r_crit,
)
from .spectral import ModeTable, table_for_bound

__all__ = [
    "BOUNDARY_TOL",
    "HurwitzData",
    "ModeWindow",
    "RegionVerdict",
    "Thresholds",
    "SweepRow",
    "mode_matrix",
    "hurwitz_coefficients",
    "hurwitz_quadratic",
    "d2_from_quadratic",
    "discriminant_coefficients",
    "delta_closed_form",
    "routh_hurwitz_stable",
    "thresholds",
    "mode_lambda",
    "mode_window",
    "classify_point",
    "mode_eigenvalues",
    "essential_spectrum",
    "sweep",
    "write_sweep_csv",
]

#: relative band on D2 and on R0 - 1 inside which a point counts as boundary
BOUNDARY_TOL = 1e-9

Zone = Literal["U", "I_stable", "P_boundary", "P_interior"]


@dataclass(frozen=True)
class HurwitzData:
    d1: float
    d2: float
    d3: float
    big_d2: float
    lambda_k: float


@dataclass(frozen=True)
class Thresholds:
    lambda0: float
    lambda2: float
    k2: int


@dataclass(frozen=True)
class ModeWindow:
    k: int
    lambda_k: float
    a_k: float
    b_k: float
    c_k: float
    delta_k: float
    n0: Optional[float]
    n1: Optional[float]
    n2: Optional[float]
    r1: Optional[float] = None
    r2: Optional[float] = None

    @property
    def is_open(self) -> bool:
        return self.r1 is not None

    def contains(self, r: float, tol: float = BOUNDARY_TOL) -> bool:
        if self.r1 is None or self.r2 is None:
            return False
        return self.r1 * (1.0 - tol) <= r <= self.r2 * (1.0 + tol)


@dataclass(frozen=True)
class RegionVerdict:
    zone: Zone
    per_mode: tuple[tuple[int, bool], ...]
    governing_mode: int
    r0: float
    d2_mode0: float
    k2: int
    boundary_ambiguous: bool = False
    degenerate: bool = False

    def in_p(self, k: int) -> bool:
        return dict(self.per_mode).get(k, False)


def _require_infected(p: Parameters) -> None:
    if reproduction_ratio(p) <= 1.0:
        raise ParameterError(
            f"linearisation at the infected state needs R0 > 1 (N={p.n_burst!r}, r={p.r!r})"
        )


def mode_matrix(p: Parameters, lambda_k: float) -> np.ndarray:
    """Jacobian at the infected equilibrium restricted to one Laplacian mode."""
    _require_infected(p)
    n, r = p.n_burst, p.r
    logistic = p.mu_V * r / (p.gamma * n * p.t_max)
    agn = p.alpha * p.gamma * n / p.mu_V
    return np.array(
        [
            [-(logistic + agn), 0.0, -p.mu_V / n],
            [agn - p.mu_T + r * (1.0 - p.mu_V / (p.gamma * n * p.t_max)), -p.mu_I, p.mu_V / n],
            [0.0, n * p.mu_I, -p.d_v * lambda_k - p.mu_V],
        ]
    )


def hurwitz_coefficients(p: Parameters, lambda_k: float) -> HurwitzData:
    _require_infected(p)
    n, r = p.n_burst, p.r
    dl = p.d_v * lambda_k
    logistic = p.mu_V * r / (p.gamma * n * p.t_max)
    agn = p.alpha * p.gamma * n / p.mu_V
    d1 = dl + p.mu_I + p.mu_V + logistic + agn
    d2 = p.mu_I * dl + p.alpha * p.gamma * n + agn * (p.mu_I + dl) + logistic * (p.mu_I + p.mu_V + dl)
    d3 = (
        p.mu_I * p.mu_V * (r - p.mu_T)
        + agn * p.mu_I * (p.mu_V + dl)
        + p.mu_I * logistic * (dl - p.mu_V)
    )
    return HurwitzData(d1, d2, d3, d1 * d2 - d3, lambda_k)


def hurwitz_quadratic(p: Parameters, lambda_k: float, n: Optional[float] = None) -> tuple[float, float, float]:
    """Coefficients (A, B, C) of D2 * gamma^2 mu_V^2 N^2 t_max^2 as a quadratic in r."""
    n = p.n_burst if n is None else n
    a, g, mT, mI, mV, T, d = p.alpha, p.gamma, p.mu_T, p.mu_I, p.mu_V, p.t_max, p.d_v
    lk = lambda_k
    A = mV**4 * (mI + mV + d * lk)
    B = g * mV**2 * n * T * (
        mV * d**2 * lk**2
        + 2 * a * g * d * n * lk
        + 2 * mV**2 * d * lk
        + 2 * mI * mV * d * lk
        - g * mI * mV * n * T
        + 2 * a * g * mI * n
        + 2 * a * g * mV * n
        + mI**2 * mV
        + 3 * mI * mV**2
        + mV**3
    )
    C = n**2 * g**2 * T**2 * (
        mI * mV**2 * d**2 * lk**2
        + a * g * mV * d**2 * n * lk**2
        + a**2 * g**2 * d * n**2 * lk
        + 2 * a * g * mV**2 * d * n * lk
        + mI * mV**3 * d * lk
        + mI**2 * mV**2 * d * lk
        + 2 * a * g * mI * mV * d * n * lk
        + a * g * mV**3 * n
        + a * g * mI * mV**2 * n
        + a * g * mI**2 * mV * n
        + a**2 * g**2 * mV * n**2
        + a**2 * g**2 * mI * n**2
        + mI * mT * mV**3
    )
    return A, B, C


def d2_from_quadratic(p: Parameters, lambda_k: float) -> float:
    A, B, C = hurwitz_quadratic(p, lambda_k)
    scale = (p.gamma * p.mu_V * p.n_burst * p.t_max) ** 2
    return (A * p.r**2 + B * p.r + C) / scale


def _relative_quadratic(A: float, B: float, C: float, r: float) -> float:
    return (A * r * r + B * r + C) / (A * r * r + abs(B) * r + C)


def discriminant_coefficients(p: Parameters, lambda_k: float) -> tuple[float, float, float, float]:
    """(a_k, b_k, c_k, delta_k): Delta_k(N) is a positive multiple of a N^2 + b N + c."""
    a, g, mT, mI, mV, T, d = p.alpha, p.gamma, p.mu_T, p.mu_I, p.mu_V, p.t_max, p.d_v
    dl = d * lambda_k
    ak = g**2 * mI * T * (mI * mV * T - 4 * a * dl - 4 * a * (mI + mV))
    bk = -2 * g * mI * mV * (
        (dl**2 + 2 * (mI + mV) * dl + mI**2 + 3 * mI * mV + mV**2) * T - 4 * a * dl - 4 * a * (mI + mV)
    )
    ck = mV * (
        (dl**2 - mI**2) ** 2
        + 4 * mV * dl**3
        + 6 * mV * (mI + mV) * dl**2
        + 4 * mV * (mV**2 + 3 * mI * mV + mI * (2 * mI - mT)) * dl
        + 2 * mI**2 * mV * (3 * mI - 2 * mT)
        + 6 * mI * mV**3
        + mI * mV**2 * (11 * mI - 4 * mT)
        + mV**4
    )
    return ak, bk, ck, bk * bk - 4 * ak * ck


def delta_closed_form(p: Parameters, lambda_k: float) -> float:
    """Factored polynomial form of b_k^2 - 4 a_k c_k (positive when mu_I > mu_T)."""
    a, g, mT, mI, mV, T, d = p.alpha, p.gamma, p.mu_T, p.mu_I, p.mu_V, p.t_max, p.d_v
    x = lambda_k
    inner = (
        a * d**4 * T * x**4
        + 4 * a * mV * d**3 * T * x**3
        + (mI**2 * mV * T + 6 * a * mV**2 - 2 * a * mI**2 + 4 * a * mI * mV) * d**2 * T * x**2
        + mV * (mI**2 * (mI + mV) * T**2 + 4 * a * (mI**2 + 2 * mI * mV + mV**2 - mI * mT) * T + 4 * a**2 * mI) * d * x
        + mI**2 * mT * mV**2 * T**2
        + a * (mI**4 + 4 * mI * mV**3 + mV**4 + 4 * mI**2 * mV * (mI - mT) + mI * mV**2 * (5 * mI - 4 * mT)) * T
        + 4 * a**2 * mI**2 * mV
        + 4 * a**2 * mI * mV**2
    )
    return 16 * g**2 * mI * mV * (mI + mV + d * x) * inner


def routh_hurwitz_stable(h: HurwitzData) -> bool:
    return h.d1 > 0 and h.d3 > 0 and h.big_d2 > 0


def thresholds(p: Parameters, table: Optional[ModeTable] = None) -> Thresholds:
    """Lambda0 (pole of N0_k), Lambda2 (sign change of a_k) and K2 (distinct index)."""
    if p.d_v <= 0:
        raise ParameterError("thresholds need d_v > 0 (every mode coincides with mode 0 when d_v = 0)")
    base = p.mu_I * p.mu_V * p.t_max / p.alpha
    lambda0 = base / (2 * p.d_v) - (p.mu_I + p.mu_V) / p.d_v
    lambda2 = base / (4 * p.d_v) - (p.mu_I + p.mu_V) / p.d_v
    if lambda2 <= 0:
        raise ParameterError(
            f"t_max too small: Lambda2 = {lambda2!r} <= 0 (need mu_I mu_V t_max/(4 alpha) > mu_I + mu_V)"
        )
    table = table or _table(p.ell, lambda2)
    k2 = int(np.searchsorted(table.lambdas, lambda2, side="left")) - 1
    return Thresholds(lambda0, lambda2, k2)


@lru_cache(maxsize=64)
def _table(ell: float, lam_bound: float) -> ModeTable:
    return table_for_bound(ell, lam_bound, extra=2)


def mode_lambda(p: Parameters, k: int) -> float:
    """k-th distinct Laplacian eigenvalue for side p.ell."""
    if k < 0:
        raise IndexError(f"mode index must be >= 0 (got {k})")
    bound = 4.0 * math.pi**2 / p.ell**2
    while True:
        table = _table(p.ell, bound)
        if k < len(table):
            return table[k].lam
        bound *= 2.0


def _n_roots(ak: float, bk: float, ck: float, delta: float) -> tuple[Optional[float], Optional[float]]:
    if delta < 0 or ak == 0:
        return None, None
    sq = math.sqrt(delta)
    if ak > 0:
        n2 = (-bk + sq) / (2 * ak)
        n1 = 2 * ck / (-bk + sq) if -bk + sq != 0 else (-bk - sq) / (2 * ak)
        return n1, n2
    # a_k < 0: N2 negative, N1 positive
    return (-bk - sq) / (2 * ak), (-bk + sq) / (2 * ak)


def _n0(p: Parameters, lambda_k: float) -> Optional[float]:
    a, g, mI, mV, T, d = p.alpha, p.gamma, p.mu_I, p.mu_V, p.t_max, p.d_v
    dl = d * lambda_k
    denom = g * (2 * a * dl + 2 * a * mI + 2 * a * mV - mI * mV * T)
    if denom == 0:
        return None
    n0 = -mV * (dl**2 + 2 * (mI + mV) * dl + 3 * mI * mV + mI**2 + mV**2) / denom
    return n0 if n0 > 0 else None


def _r_roots(A: float, B: float, C: float) -> tuple[Optional[float], Optional[float]]:
    if B >= 0:
        return None, None
    disc = B * B - 4 * A * C
    if disc < 0:
        return None, None
    sq = math.sqrt(disc)
    return 2 * C / (-B + sq), (-B + sq) / (2 * A)


def mode_window(p: Parameters, k: int, n: float, *, k2: Optional[int] = None) -> ModeWindow:
    """Instability window (r1_k(N), r2_k(N)) of mode k at burst size ``n``."""
    lam = mode_lambda(p, k)
    ak, bk, ck, delta = discriminant_coefficients(p, lam)
    n1, n2 = _n_roots(ak, bk, ck, delta)
    n0 = _n0(p, lam)
    if ak <= 0:
        n2 = None
    if k2 is not None:
        beyond = p.d_v > 0 and k > k2
    else:
        # same test as k > K2 without building the mode table up to Lambda2
        beyond = ak <= 0 and k > 0
    if beyond:
        return ModeWindow(k, lam, ak, bk, ck, delta, n0, n1, n2)
    A, B, C = hurwitz_quadratic(p, lam, n)
    r1, r2 = _r_roots(A, B, C)
    if n2 is not None and r1 is not None and n < n2:
        # just below N2 the discriminant is negative up to rounding
        r1 = r2 = None
    if n2 is not None and n == n2 and B < 0:
        r1 = r2 = -B / (2 * A)
    return ModeWindow(k, lam, ak, bk, ck, delta, n0, n1, n2, r1, r2)


def classify_point(p: Parameters, tol: float = BOUNDARY_TOL) -> RegionVerdict:
    """Zone of (p.n_burst, p.r) and membership in each P_k for k <= K2."""
    r0 = reproduction_ratio(p)
    if p.d_v > 0:
        th = thresholds(p)
        k2 = th.k2
        degenerate = any(
            abs(mode_lambda(p, k) - th.lambda2) < tol * th.lambda2 for k in range(k2 + 2)
        )
    else:
        k2, degenerate = 0, False
    ambiguous = abs(r0 - 1.0) <= tol
    if r0 < 1.0 or ambiguous:
        return RegionVerdict("U", (), 0, r0, float("nan"), k2, ambiguous, degenerate)

    per_mode = []
    for k in range(k2 + 1):
        w = mode_window(p, k, p.n_burst, k2=k2)
        per_mode.append((k, w.contains(p.r, tol)))

    A, B, C = hurwitz_quadratic(p, 0.0)
    rel = _relative_quadratic(A, B, C, p.r)
    d2 = d2_from_quadratic(p, 0.0)
    if abs(rel) <= tol:
        zone: Zone = "P_boundary"
    elif rel < 0:
        zone = "P_interior"
    else:
        zone = "I_stable"
    return RegionVerdict(zone, tuple(per_mode), 0, r0, d2, k2, False, degenerate)


def mode_eigenvalues(p: Parameters, lambda_k: float) -> np.ndarray:
    """Roots of the characteristic cubic of ``M_k`` (companion eigensolve + Newton)."""
    h = hurwitz_coefficients(p, lambda_k)
    return cubic_roots(h.d1, h.d2, h.d3)


def cubic_roots(d1: float, d2: float, d3: float) -> np.ndarray:
    companion = np.array([[-d1, -d2, -d3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    roots = np.linalg.eigvals(companion).astype(complex)
    for _ in range(2):
        f = ((roots + d1) * roots + d2) * roots + d3
        df = (3 * roots + 2 * d1) * roots + d2
        ok = df != 0
        roots[ok] = roots[ok] - f[ok] / df[ok]
    # restore exact conjugate symmetry after polishing
    order = np.argsort(roots.imag)
    roots = roots[order]
    if abs(roots[0].imag) > 0 and np.isclose(roots[0], np.conj(roots[2]), rtol=1e-6, atol=0):
        mid = 0.5 * (roots[0] + np.conj(roots[2]))
        roots[0], roots[2] = mid, np.conj(mid)
        roots[1] = roots[1].real
    return roots


def essential_spectrum(p: Parameters) -> tuple[float, float]:
    """The two points of the essential spectrum of the full linearisation."""
    n = p.n_burst
    return (
        -p.mu_V * p.r / (p.gamma * n * p.t_max) - p.alpha * p.gamma * n / p.mu_V,
        -p.mu_I,
    )


# -- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    n: float
    r: float
    verdict: RegionVerdict


def _grid(lo: float, hi: float, steps: int) -> np.ndarray:
    if steps < 2 or not (0 < lo < hi):
        raise ParameterError(f"invalid range ({lo!r}, {hi!r}, {steps!r}): need 0 < lo < hi, steps >= 2")
    return np.linspace(lo, hi, steps)


def _classify_chunk(args: tuple[Parameters, Sequence[tuple[float, float]]]) -> list[SweepRow]:
    base, points = args
    return [SweepRow(n, r, classify_point(base.with_(n_burst=n, r=r))) for n, r in points]


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("VIRODYN_THREADS", "1")))
    except ValueError:
        return 1


def sweep(
    p_base: Parameters,
    n_range: tuple[float, float, int],
    r_range: tuple[float, float, int],
    workers: Optional[int] = None,
) -> list[SweepRow]:
    """Classify every point of an N x r grid; rows come back in grid order (N outer)."""
    ns = _grid(*n_range)
    rs = _grid(*r_range)
    points = [(float(n), float(r)) for n in ns for r in rs]
    workers = _workers() if workers is None else workers
    if workers <= 1 or len(points) < 64:
        return _classify_chunk((p_base, points))
    size = math.ceil(len(points) / workers)
    chunks = [(p_base, points[i : i + size]) for i in range(0, len(points), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [row for part in pool.map(_classify_chunk, chunks) for row in part]


def fmt(x: float) -> str:
    return f"{x:.11e}"


def write_sweep_csv(rows: Iterable[SweepRow], fh: IO[str], mode_columns: int = 8) -> None:
    header = ["N", "r", "R0", "zone", "D2_mode0", "K2"] + [f"in_P{k}" for k in range(mode_columns)]
    fh.write(",".join(header) + "\n")
    for row in rows:
        v = row.verdict
        cols = [fmt(row.n), fmt(row.r), fmt(v.r0), v.zone, fmt(v.d2_mode0), str(v.k2)]
        flags = dict(v.per_mode)
        for k in range(mode_columns):
            cols.append("" if k > v.k2 else str(int(flags.get(k, False))))
        fh.write(",".join(cols) + "\n")
