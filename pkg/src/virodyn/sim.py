"""Time integration of the reaction-diffusion system on a periodic grid.

Each step is a Strang splitting: half a step of local reaction (RK4 per
cell), a full diffusion step for V, then another half reaction step.  The
diffusion step is applied in Fourier space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import IO, Callable, Literal, Optional, Sequence

import numba
import numpy as np

from .model import Equilibrium, ParameterError, Parameters, infected_equilibrium, uninfected_equilibrium

__all__ = [
    "SolverInstability",
    "GridState",
    "SimConfig",
    "Trace",
    "react",
    "diffuse",
    "diffusion_factor",
    "exact_diffusion_matrix",
    "step",
    "initial_state",
    "run",
    "rk4_ode",
    "spatial_variance",
    "detect_behavior",
    "load_config",
    "write_trace_csv",
    "write_snapshot",
]

BLOWUP = 1e12
# RK4 is stable on the negative real axis up to h*rho ~ 2.78; keep a margin
_RK4_LIMIT = 2.0
_MAX_SUB = 1024


class SolverInstability(RuntimeError):
    """Raised when a field blows up, turns NaN or goes clearly negative."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time


@dataclass
class GridState:
    t_cells: np.ndarray
    i_cells: np.ndarray
    virus: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        shape = self.t_cells.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"fields must be square 2-D arrays (got shape {shape})")
        if self.i_cells.shape != shape or self.virus.shape != shape:
            raise ValueError("field shapes differ")

    @property
    def n_grid(self) -> int:
        return self.t_cells.shape[0]

    def copy(self) -> "GridState":
        return GridState(self.t_cells.copy(), self.i_cells.copy(), self.virus.copy(), self.time)


Scheme = Literal["spectral_exact_diffusion", "crank_nicolson"]
IcKind = Literal["paper_default", "uniform_equilibrium_perturbed", "custom"]


def _sim_params() -> Parameters:
    return Parameters(n_burst=300.0, r=1.0, ell=2 * math.pi)


@dataclass(frozen=True)
class SimConfig:
    params: Parameters = field(default_factory=_sim_params)
    n_grid: int = 20
    dt: float = 0.01
    t_end: float = 2000.0
    ic_kind: IcKind = "paper_default"
    epsilon: float = 1.0
    probe: tuple[int, int] = (10, 10)
    output_every: int = 10
    scheme: Scheme = "spectral_exact_diffusion"
    ic_file: Optional[str] = None
    snapshot_times: tuple[float, ...] = ()
    reaction_substeps: int = 1

    def __post_init__(self) -> None:
        if self.n_grid < 8:
            raise ParameterError(f"n_grid must be >= 8 (got {self.n_grid})")
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive (got {self.dt!r})")
        if not self.t_end > self.dt:
            raise ParameterError(f"t_end must exceed dt (got t_end={self.t_end!r}, dt={self.dt!r})")
        if self.reaction_substeps < 1:
            raise ParameterError("reaction_substeps must be >= 1")
        if self.output_every < 1:
            raise ParameterError("output_every must be >= 1")
        if not all(0 <= x < self.n_grid for x in self.probe) or len(self.probe) != 2:
            raise ParameterError(f"probe {self.probe!r} outside the {self.n_grid}x{self.n_grid} grid")
        if self.scheme not in ("spectral_exact_diffusion", "crank_nicolson"):
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.ic_kind not in ("paper_default", "uniform_equilibrium_perturbed", "custom"):
            raise ParameterError(f"unknown ic_kind {self.ic_kind!r}")
        if self.ic_kind == "custom" and not self.ic_file:
            raise ParameterError("ic_kind=custom needs ic_file")

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class Trace:
    times: np.ndarray
    t_probe: np.ndarray
    i_probe: np.ndarray
    v_probe: np.ndarray
    variance: np.ndarray  # shape (len(times), 3)
    snapshots: dict[float, GridState] = field(default_factory=dict)
    final: Optional[GridState] = None

    def window(self, start_frac: float, stop_frac: float = 1.0) -> slice:
        n = len(self.times)
        return slice(int(start_frac * n), int(stop_frac * n))


# -- reaction -----------------------------------------------------------------


@numba.njit(cache=True)
def _rhs(t, i, v, alpha, gamma, mu_t, mu_i, mu_v, t_max, n_burst, r):
    inf = gamma * v * t
    return (
        alpha - mu_t * t + r * t * (1.0 - t / t_max) - inf,
        inf - mu_i * i,
        n_burst * mu_i * i - mu_v * v,
    )


@numba.njit(cache=True)
def _react_kernel(T, I, V, h, alpha, gamma, mu_t, mu_i, mu_v, t_max, n_burst, r, min_sub=1):
    nx, ny = T.shape
    for a in range(nx):
        for b in range(ny):
            t = T[a, b]
            i = I[a, b]
            v = V[a, b]
            # spectral radius bound of the local Jacobian
            rho = gamma * abs(v) + gamma * abs(t) + mu_t + r + 2.0 * r * abs(t) / t_max + mu_i + mu_v
            if h * rho < _RK4_LIMIT * _MAX_SUB:
                n_sub = max(min_sub, int(math.ceil(h * rho / _RK4_LIMIT)))
            else:
                # runaway or non-finite state: let it fail fast in the check
                n_sub = max(min_sub, _MAX_SUB)
            k = h / n_sub
            for _ in range(n_sub):
                a1, b1, c1 = _rhs(t, i, v, alpha, gamma, mu_t, mu_i, mu_v, t_max, n_burst, r)
                a2, b2, c2 = _rhs(t + 0.5 * k * a1, i + 0.5 * k * b1, v + 0.5 * k * c1,
                                  alpha, gamma, mu_t, mu_i, mu_v, t_max, n_burst, r)
                a3, b3, c3 = _rhs(t + 0.5 * k * a2, i + 0.5 * k * b2, v + 0.5 * k * c2,
                                  alpha, gamma, mu_t, mu_i, mu_v, t_max, n_burst, r)
                a4, b4, c4 = _rhs(t + k * a3, i + k * b3, v + k * c3,
                                  alpha, gamma, mu_t, mu_i, mu_v, t_max, n_burst, r)
                t += k * (a1 + 2.0 * a2 + 2.0 * a3 + a4) / 6.0
                i += k * (b1 + 2.0 * b2 + 2.0 * b3 + b4) / 6.0
                v += k * (c1 + 2.0 * c2 + 2.0 * c3 + c4) / 6.0
            T[a, b] = t
            I[a, b] = i
            V[a, b] = v


def _pargs(p: Parameters) -> tuple[float, ...]:
    return (p.alpha, p.gamma, p.mu_T, p.mu_I, p.mu_V, p.t_max, p.n_burst, p.r)


def react(state: GridState, p: Parameters, h: float, min_sub: int = 1) -> None:
    """Advance the local reaction by ``h`` in place.

    RK4 per cell with at least ``min_sub`` equal sub-steps; a cell whose local
    stiffness bound would make one RK4 step unstable is sub-cycled further.
    """
    _react_kernel(state.t_cells, state.i_cells, state.virus, h, *_pargs(p), min_sub)


def rk4_ode(p: Parameters, y0: Sequence[float], h: float, steps: int) -> np.ndarray:
    """Plain ODE trajectory with the same per-cell integrator, shape (steps+1, 3)."""
    out = np.empty((steps + 1, 3))
    cell = [np.array([[float(x)]]) for x in y0]
    out[0] = y0
    for n in range(steps):
        _react_kernel(cell[0], cell[1], cell[2], h, *_pargs(p))
        out[n + 1] = [c[0, 0] for c in cell]
    return out


# -- diffusion ----------------------------------------------------------------


def _symbol(n_grid: int, ell: float, scheme: Scheme) -> np.ndarray:
    kx = np.fft.fftfreq(n_grid, d=1.0 / n_grid)
    ky = np.fft.rfftfreq(n_grid, d=1.0 / n_grid)
    if scheme == "spectral_exact_diffusion":
        scale = (2 * math.pi / ell) ** 2
        return scale * (kx[:, None] ** 2 + ky[None, :] ** 2)
    # eigenvalues of the periodic 5-point Laplacian
    hx = ell / n_grid
    sx = np.sin(math.pi * kx / n_grid) ** 2
    sy = np.sin(math.pi * ky / n_grid) ** 2
    return 4.0 / hx**2 * (sx[:, None] + sy[None, :])


def diffusion_factor(n_grid: int, ell: float, d_v: float, dt: float, scheme: Scheme) -> np.ndarray:
    """Multiplier applied to the rfft2 coefficients of V for one step."""
    lam = _symbol(n_grid, ell, scheme)
    if scheme == "spectral_exact_diffusion":
        return np.exp(-d_v * lam * dt)
    half = 0.5 * dt * d_v * lam
    return (1.0 - half) / (1.0 + half)


def diffuse(v: np.ndarray, factor: np.ndarray) -> np.ndarray:
    # diffusing the offset from one cell keeps uniform data exactly uniform
    c = v.flat[0]
    out = c + np.fft.irfft2(np.fft.rfft2(v - c) * factor, s=v.shape)
    # the zero mode has factor 1; restore the mean exactly against FFT round-off
    out += v.mean() - out.mean()
    return out


def exact_diffusion_matrix(n_grid: int, ell: float, d_v: float, dt: float) -> np.ndarray:
    """1-D circulant E with ``V -> E V E^T`` equal to the exact spectral step.

    The heat kernel factorises over the two axes, so the 2-D step is a pair
    of small dense products instead of an FFT round trip.
    """
    k = np.fft.fftfreq(n_grid, d=1.0 / n_grid)
    decay = np.exp(-d_v * (2 * math.pi * k / ell) ** 2 * dt)
    return np.real(np.fft.ifft(np.fft.fft(np.eye(n_grid), axis=0) * decay[:, None], axis=0))


@numba.njit(cache=True)
def _apply_separable(V, E, work):
    n = V.shape[0]
    ref = V[0, 0]
    for a in range(n):
        for b in range(n):
            V[a, b] -= ref
    for a in range(n):
        for b in range(n):
            acc = 0.0
            for c in range(n):
                acc += E[a, c] * V[c, b]
            work[a, b] = acc
    for a in range(n):
        for b in range(n):
            acc = 0.0
            for c in range(n):
                acc += work[a, c] * E[b, c]
            V[a, b] = ref + acc


@numba.njit(cache=True)
def _advance(T, I, V, E, work, n_steps, dt, min_sub, alpha, gamma, mu_t, mu_i, mu_v, t_max, n_burst, r):
    for _ in range(n_steps):
        _react_kernel(T, I, V, 0.5 * dt, alpha, gamma, mu_t, mu_i, mu_v, t_max, n_burst, r, min_sub)
        _apply_separable(V, E, work)
        _react_kernel(T, I, V, 0.5 * dt, alpha, gamma, mu_t, mu_i, mu_v, t_max, n_burst, r, min_sub)


class _Stepper:
    """Advances a state by whole steps with the configured scheme."""

    def __init__(self, cfg: SimConfig):
        p = cfg.params
        self.p, self.dt, self.min_sub = p, cfg.dt, cfg.reaction_substeps
        self.fast = cfg.scheme == "spectral_exact_diffusion"
        if self.fast:
            self.e = exact_diffusion_matrix(cfg.n_grid, p.ell, p.d_v, cfg.dt)
            self.work = np.empty((cfg.n_grid, cfg.n_grid))
        else:
            self.factor = diffusion_factor(cfg.n_grid, p.ell, p.d_v, cfg.dt, cfg.scheme)

    def __call__(self, state: GridState, n_steps: int) -> None:
        if self.fast:
            _advance(state.t_cells, state.i_cells, state.virus, self.e, self.work,
                     n_steps, self.dt, self.min_sub, *_pargs(self.p))
        else:
            for _ in range(n_steps):
                react(state, self.p, 0.5 * self.dt, self.min_sub)
                if self.p.d_v > 0:
                    state.virus = diffuse(state.virus, self.factor)
                react(state, self.p, 0.5 * self.dt, self.min_sub)
        state.time += n_steps * self.dt


def step(state: GridState, cfg: SimConfig) -> GridState:
    """One Strang step; returns a new state."""
    out = GridState(*(np.ascontiguousarray(a, dtype=float).copy()
                      for a in (state.t_cells, state.i_cells, state.virus)), state.time)
    _Stepper(cfg)(out, 1)
    _check(out)
    return out


def _check(state: GridState) -> None:
    for name, arr in (("T", state.t_cells), ("I", state.i_cells), ("V", state.virus)):
        hi = np.max(np.abs(arr))
        if not np.isfinite(hi) or hi > BLOWUP:
            raise SolverInstability(f"field {name} blew up (max |{name}| = {hi:.3g})", state.time)
        lo = arr.min()
        if lo < -1e-10 * max(hi, 1.0):
            raise SolverInstability(f"field {name} went negative ({lo:.3g})", state.time)


# -- initial data and runs ----------------------------------------------------


def cell_centers(n_grid: int, ell: float) -> tuple[np.ndarray, np.ndarray]:
    x = (np.arange(n_grid) + 0.5) * ell / n_grid
    return np.meshgrid(x, x, indexing="ij")


def initial_state(cfg: SimConfig) -> GridState:
    p = cfg.params
    n = cfg.n_grid
    if cfg.ic_kind == "custom":
        return load_state(cfg.ic_file, n)
    x, y = cell_centers(n, p.ell)
    # rescale to the 2*pi-periodic cell so the bump is periodic for any ell
    bump = cfg.epsilon * np.sin(2 * math.pi * x / p.ell) * np.cos(2 * math.pi * y / p.ell)
    if cfg.ic_kind == "paper_default":
        t0 = uninfected_equilibrium(p).t_cells
        return GridState(t0 + bump, np.zeros((n, n)), np.full((n, n), 0.0185))
    eq = infected_equilibrium(p) or uninfected_equilibrium(p)
    return GridState(
        eq.t_cells + bump,
        np.full((n, n), eq.i_cells),
        np.full((n, n), eq.virus),
    )


def load_state(path: str | Path, n_grid: int) -> GridState:
    """Initial fields from an ``.npz`` archive with arrays ``T``, ``I`` and ``V``."""
    with np.load(path) as data:
        state = GridState(*(np.array(data[k], dtype=float) for k in ("T", "I", "V")))
    if state.n_grid != n_grid:
        raise ParameterError(f"{path}: grid is {state.n_grid}, config says {n_grid}")
    return state


def spatial_variance(state: GridState) -> tuple[float, float, float]:
    return (float(np.var(state.t_cells)), float(np.var(state.i_cells)), float(np.var(state.virus)))


def run(
    cfg: SimConfig,
    state: Optional[GridState] = None,
    progress: Optional[Callable[[float], None]] = None,
) -> Trace:
    """Integrate from ``state`` (default: the configured initial data) to ``cfg.t_end``."""
    p = cfg.params
    state = initial_state(cfg) if state is None else state.copy()
    for name in ("t_cells", "i_cells", "virus"):
        setattr(state, name, np.ascontiguousarray(getattr(state, name), dtype=float))
    if state.n_grid != cfg.n_grid:
        raise ParameterError(f"state grid {state.n_grid} differs from n_grid={cfg.n_grid}")
    advance = _Stepper(cfg)
    n_steps = cfg.n_steps
    n_out = n_steps // cfg.output_every + 1
    times = np.empty(n_out)
    probes = np.empty((n_out, 3))
    var = np.empty((n_out, 3))
    a, b = cfg.probe
    snaps: dict[float, GridState] = {}
    pending = sorted(cfg.snapshot_times)
    t0 = state.time

    def record(j: int) -> None:
        times[j] = state.time
        probes[j] = (state.t_cells[a, b], state.i_cells[a, b], state.virus[a, b])
        var[j] = spatial_variance(state)

    record(0)
    done, j = 0, 1
    while done < n_steps:
        chunk = min(cfg.output_every, n_steps - done)
        if pending:
            # stop exactly on the next snapshot time
            to_snap = int(round((pending[0] - t0) / cfg.dt)) - done
            if 0 < to_snap < chunk:
                chunk = to_snap
        advance(state, chunk)
        done += chunk
        # keep time exact instead of accumulating round-off
        state.time = t0 + done * cfg.dt
        _check(state)
        while pending and state.time >= pending[0] - 0.5 * cfg.dt:
            snaps[pending.pop(0)] = state.copy()
        if done % cfg.output_every == 0:
            record(j)
            j += 1
            if progress is not None:
                progress(state.time)
    _check(state)
    times, probes, var = times[:j], probes[:j], var[:j]
    return Trace(times, probes[:, 0], probes[:, 1], probes[:, 2], var, snaps, state)


# -- behaviour classification -------------------------------------------------


def detect_behavior(
    trace: Trace,
    eq: Optional[Equilibrium],
    tail: float = 0.2,
    conv_tol: float = 1e-3,
    osc_tol: float = 0.05,
    agree_tol: float = 0.05,
) -> Literal["converged", "oscillating", "undecided"]:
    """Classify the tail of a probe trace.

    Converged: max deviation of the probe from ``eq`` over the trailing window,
    in the max norm relative to the largest equilibrium component, is below
    ``conv_tol``.  Oscillating: the peak-to-peak of V over the trailing
    window exceeds ``osc_tol`` times its mean and the two halves of the
    window have peak-to-peak values within ``agree_tol`` of each other.
    """
    sl = trace.window(1.0 - tail)
    probe = np.column_stack([trace.t_probe[sl], trace.i_probe[sl], trace.v_probe[sl]])
    if len(probe) < 4:
        return "undecided"
    if eq is not None:
        ref = np.array(eq.as_tuple())
        dev = np.max(np.abs(probe - ref)) / np.max(np.abs(ref))
        if dev < conv_tol:
            return "converged"
    v = probe[:, 2]
    mean = float(np.mean(v))
    if mean <= 0:
        return "undecided"
    half = len(v) // 2
    p2p = [float(np.ptp(part)) for part in (v[:half], v[half:])]
    if np.ptp(v) > osc_tol * mean and abs(p2p[0] - p2p[1]) <= agree_tol * max(p2p):
        return "oscillating"
    return "undecided"


# -- I/O ----------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.11e}"


def write_trace_csv(trace: Trace, fh: IO[str]) -> None:
    fh.write("t,T_probe,I_probe,V_probe,var_T,var_I,var_V\n")
    for k in range(len(trace.times)):
        row = (trace.times[k], trace.t_probe[k], trace.i_probe[k], trace.v_probe[k], *trace.variance[k])
        fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_snapshot(state: GridState, name: str, ell: float, fh: IO[str]) -> None:
    arr = {"T": state.t_cells, "I": state.i_cells, "V": state.virus}[name]
    fh.write(f"# field={name} t={state.time:.11e} n={state.n_grid} ell={ell:.11e}\n")
    for row in arr:
        fh.write(" ".join(_fmt(x) for x in row) + "\n")


_SIM_KEYS = {f.name for f in fields(SimConfig)} - {"params"}


def _coerce(key: str, raw: str):
    if key in ("n_grid", "output_every", "reaction_substeps"):
        return int(raw)
    if key == "probe":
        parts = raw.replace("(", "").replace(")", "").split(",")
        return tuple(int(x) for x in parts)
    if key == "snapshot_times":
        return tuple(float(x) for x in raw.split(",") if x.strip())
    if key in ("ic_kind", "scheme", "ic_file"):
        return raw
    return float(raw)


def parse_config(text: str, base: Optional[SimConfig] = None, source: str = "<config>") -> SimConfig:
    """Flat ``key = value`` lines; keys are SimConfig or Parameters field names."""
    base = base or SimConfig()
    sim: dict = {}
    par: dict = {}
    pnames = set(Parameters.field_names())
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{source}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            if key in _SIM_KEYS:
                sim[key] = _coerce(key, raw)
            elif key in pnames:
                par[key] = float(raw)
            else:
                raise ParameterError(f"{source}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(f"{source}:{lineno}: bad value for {key}: {raw!r}") from None
    if "n_grid" in sim and "probe" not in sim and max(base.probe) >= sim["n_grid"]:
        sim["probe"] = (sim["n_grid"] // 2, sim["n_grid"] // 2)
    return base.with_(params=base.params.with_(**par), **sim)


def load_config(path: str | Path, base: Optional[SimConfig] = None) -> SimConfig:
    return parse_config(Path(path).read_text(), base, str(path))
