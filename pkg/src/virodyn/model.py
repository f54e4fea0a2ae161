"""Model constants, reaction terms and the spatially constant equilibria.

The three fields are uninfected target cells ``T``, infected cells ``I`` and
free virus ``V``.  Only ``V`` diffuses; everything here concerns the local
reaction part and the homogeneous steady states.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Literal, Optional

__all__ = [
    "ParameterError",
    "Parameters",
    "Equilibrium",
    "TABLE1",
    "reaction_rhs",
    "uninfected_t",
    "uninfected_equilibrium",
    "infected_equilibrium",
    "reproduction_ratio",
    "n_crit",
    "r_crit",
    "t_of_v",
    "phi_fixed_point_residual",
    "equilibrium_residual",
]


class ParameterError(ValueError):
    """Raised when a parameter set violates one of the model hypotheses."""


@dataclass(frozen=True)
class Parameters:
    """Model constants plus the two analysis parameters ``n_burst`` and ``r``.

    Units follow the usual within-host convention: concentrations in mm^-3,
    rates in day^-1.
    """

    alpha: float = 1.5
    gamma: float = 0.001
    mu_T: float = 0.1
    mu_I: float = 0.5
    mu_V: float = 10.0
    t_max: float = 1500.0
    d_v: float = 1.0
    ell: float = 1.0
    n_burst: float = 1000.0
    r: float = 0.2

    def __post_init__(self) -> None:
        for name in ("alpha", "gamma", "mu_T", "mu_I", "mu_V", "t_max", "ell", "n_burst"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be positive and finite (got {value!r})")
        if not (math.isfinite(self.r) and self.r >= 0):
            raise ParameterError(f"r must be non-negative (got {self.r!r})")
        if not (math.isfinite(self.d_v) and self.d_v >= 0):
            raise ParameterError(f"d_v must be non-negative (got {self.d_v!r})")
        if not self.mu_I > self.mu_T:
            raise ParameterError(
                f"hypothesis mu_I > mu_T violated (mu_I={self.mu_I!r}, mu_T={self.mu_T!r})"
            )
        if not self.t_max > self.alpha / self.mu_T:
            raise ParameterError(
                "hypothesis t_max > alpha/mu_T violated "
                f"(t_max={self.t_max!r}, alpha/mu_T={self.alpha / self.mu_T!r})"
            )

    def with_(self, **changes: float) -> "Parameters":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


#: Reference parameter values; d_v = 1 and ell = 1 are the analysis conventions.
TABLE1 = Parameters()


@dataclass(frozen=True)
class Equilibrium:
    kind: Literal["uninfected", "infected"]
    t_cells: float
    i_cells: float
    virus: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.t_cells, self.i_cells, self.virus)


def reaction_rhs(p: Parameters, t: float, i: float, v: float) -> tuple[float, float, float]:
    """Local reaction terms (no diffusion).  Works elementwise on arrays too."""
    infection = p.gamma * v * t
    dt = p.alpha - p.mu_T * t + p.r * t * (1.0 - t / p.t_max) - infection
    di = infection - p.mu_I * i
    dv = p.n_burst * p.mu_I * i - p.mu_V * v
    return dt, di, dv


def uninfected_t(p: Parameters, r: Optional[float] = None) -> float:
    """Positive root T0(r) of alpha - mu_T T + r T (1 - T/t_max) = 0."""
    r = p.r if r is None else r
    if r == 0.0:
        return p.alpha / p.mu_T
    b = r - p.mu_T
    root = math.sqrt(b * b + 4.0 * p.alpha * r / p.t_max)
    if b < 0.0:
        # conjugate form; avoids cancellation in b + root
        return 2.0 * p.alpha / (root - b)
    return p.t_max * (b + root) / (2.0 * r)


def uninfected_equilibrium(p: Parameters) -> Equilibrium:
    return Equilibrium("uninfected", uninfected_t(p), 0.0, 0.0)


def reproduction_ratio(p: Parameters) -> float:
    return p.gamma * p.n_burst * uninfected_t(p) / p.mu_V


def infected_equilibrium(p: Parameters) -> Optional[Equilibrium]:
    """Infected steady state, or ``None`` when R0 <= 1."""
    if reproduction_ratio(p) <= 1.0:
        return None
    g_n = p.gamma * p.n_burst
    t_i = p.mu_V / g_n
    i_i = (
        p.alpha / p.mu_I
        - p.mu_T * p.mu_V / (g_n * p.mu_I)
        + p.mu_V * p.r / (g_n * p.mu_I) * (1.0 - p.mu_V / (g_n * p.t_max))
    )
    v_i = p.n_burst * p.mu_I * i_i / p.mu_V
    return Equilibrium("infected", t_i, i_i, v_i)


def n_crit(p: Parameters, r: Optional[float] = None) -> float:
    """Burst size on the R0 = 1 interface at logistic rate ``r``."""
    r = p.r if r is None else r
    if math.isinf(r):
        return p.mu_V / (p.gamma * p.t_max)
    return p.mu_V / (p.gamma * uninfected_t(p, r))


def r_crit(p: Parameters, n: Optional[float] = None) -> float:
    """Inverse of :func:`n_crit`: smallest r with R0(n, r) >= 1 (clamped at 0)."""
    n = p.n_burst if n is None else n
    floor = p.mu_V / (p.gamma * p.t_max)
    if n <= floor:
        raise ParameterError(f"r_crit undefined for N <= mu_V/(gamma t_max) = {floor!r} (got {n!r})")
    numer = max(p.mu_T * p.mu_V - p.alpha * p.gamma * n, 0.0)
    return numer / (p.mu_V * (1.0 - p.mu_V / (p.gamma * n * p.t_max)))


def t_of_v(p: Parameters, v: float) -> float:
    """T solving the first equilibrium equation for a given virus level (r > 0)."""
    if p.r <= 0.0:
        raise ParameterError("t_of_v requires r > 0")
    b = p.r - p.mu_T - p.gamma * v
    root = math.sqrt(b * b + 4.0 * p.alpha * p.r / p.t_max)
    if b < 0.0:
        return 2.0 * p.alpha / (root - b)
    return p.t_max * (b + root) / (2.0 * p.r)


def phi_fixed_point_residual(p: Parameters, v: float) -> float:
    """Residual Phi(v) - mu_V v of the scalar fixed-point equation for V.

    Phi is written as gamma N v T(v) which equals the printed closed form;
    :func:`t_of_v` keeps the evaluation free of cancellation.
    """
    if p.r <= 0.0:
        raise ParameterError("phi_fixed_point_residual requires r > 0")
    return p.gamma * p.n_burst * v * t_of_v(p, v) - p.mu_V * v


def equilibrium_residual(p: Parameters, eq: Equilibrium) -> float:
    """Max-norm of the reaction RHS at ``eq`` divided by the largest field value."""
    res = reaction_rhs(p, *eq.as_tuple())
    scale = max(1.0, max(abs(x) for x in eq.as_tuple()))
    return max(abs(x) for x in res) / scale
