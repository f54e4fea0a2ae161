"""Command-line entry point: ``virodyn <subcommand> [flags]``.

Every float written to CSV uses 12 significant digits in scientific
notation so identical command lines give byte-identical files.
"""

from __future__ import annotations

import argparse
import contextlib
import math
import os
import sys
from pathlib import Path
from typing import IO, Iterator, Optional, Sequence

from . import hopf, model, sim, spectral, stability
from .model import ParameterError, Parameters

EXIT_PARAMS = 1
EXIT_SOLVER = 2

# flag -> Parameters field
PARAM_FLAGS = {
    "N": "n_burst",
    "r": "r",
    "alpha": "alpha",
    "gamma": "gamma",
    "muT": "mu_T",
    "muI": "mu_I",
    "muV": "mu_V",
    "Tmax": "t_max",
    "dV": "d_v",
    "ell": "ell",
}

FIGURES = {
    5: dict(r=1.0, t_end=2000.0),
    6: dict(r=2.0, t_end=4000.0),
    7: dict(r=200.0, t_end=4000.0),
    8: dict(r=500.0, t_end=2000.0),
}


class _Parser(argparse.ArgumentParser):
    # usage errors are parameter errors; exit status 2 is kept for the solver
    def error(self, message: str):
        self.exit(EXIT_PARAMS, f"{self.prog}: error: {message}\n")


def fmt(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.11e}"


def parse_range(text: str) -> tuple[float, float, int]:
    """``lo:hi:steps`` grid specification."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ParameterError(f"range {text!r} must look like lo:hi:steps")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ParameterError(f"range {text!r} must look like lo:hi:steps") from None


def _add_param_flags(p: argparse.ArgumentParser, ranged: bool = False) -> None:
    g = p.add_argument_group("model parameters")
    for flag in PARAM_FLAGS:
        if ranged and flag in ("N", "r"):
            g.add_argument(f"--{flag}", metavar="LO:HI:STEPS")
        else:
            g.add_argument(f"--{flag}", type=float)
    p.add_argument("--config", metavar="PATH", help="flat key = value file; flags override it")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("simulation")
    g.add_argument("--grid", type=int)
    g.add_argument("--dt", type=float)
    g.add_argument("--t-end", type=float)
    g.add_argument("--eps", type=float)
    g.add_argument("--probe", metavar="I,J")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="virodyn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("equilibria", help="steady states, R0 and critical values")
    _add_param_flags(p)

    p = sub.add_parser("modes", help="periodic Laplacian eigenvalues with multiplicities")
    _add_param_flags(p)
    p.add_argument("--n-max", type=int, default=40)

    p = sub.add_parser("regions", help="classify an (N, r) grid")
    _add_param_flags(p, ranged=True)
    p.add_argument("--mode-columns", type=int, default=8)

    p = sub.add_parser("hopf", help="Hopf points, frequencies and Lyapunov signs")
    _add_param_flags(p)

    p = sub.add_parser("lyapunov", help="normal-form coefficients at both Hopf points")
    _add_param_flags(p)
    p.add_argument("--printed-g21", action="store_true", help="use the uncorrected cubic coefficient")

    p = sub.add_parser("simulate", help="integrate the reaction-diffusion system")
    _add_param_flags(p)
    _add_sim_flags(p)

    p = sub.add_parser("reproduce-figure", help="rerun one of the four simulation scenarios")
    _add_param_flags(p)
    _add_sim_flags(p)
    p.add_argument("--id", type=int, required=True, choices=sorted(FIGURES))
    return parser


# -- parameter assembly -------------------------------------------------------


def _read_config(path: Optional[str]) -> dict[str, str]:
    if not path:
        return {}
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _params(args: argparse.Namespace, base: Parameters, skip: Sequence[str] = ()) -> Parameters:
    cfg = _read_config(args.config)
    names = set(Parameters.field_names())
    changes: dict[str, float] = {}
    for key, value in cfg.items():
        if key in names:
            if key in skip:
                continue
            try:
                changes[key] = float(value)
            except ValueError:
                raise ParameterError(f"{args.config}: bad value for {key}: {value!r}") from None
        elif args.command not in ("simulate", "reproduce-figure"):
            raise ParameterError(f"{args.config}: unknown key {key!r}")
    for flag, name in PARAM_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None and name not in skip:
            changes[name] = value
    return base.with_(**changes)


def _sim_config(args: argparse.Namespace, base: sim.SimConfig) -> sim.SimConfig:
    if args.config:
        base = sim.load_config(args.config, base)
    params = _params(args, base.params)
    changes: dict = {"params": params}
    if args.grid is not None:
        changes["n_grid"] = args.grid
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.t_end is not None:
        changes["t_end"] = args.t_end
    if args.eps is not None:
        changes["epsilon"] = args.eps
    if args.probe is not None:
        try:
            changes["probe"] = tuple(int(x) for x in args.probe.split(","))
        except ValueError:
            raise ParameterError(f"--probe expects I,J (got {args.probe!r})") from None
    n_grid = changes.get("n_grid", base.n_grid)
    if "probe" not in changes and max(base.probe) >= n_grid:
        changes["probe"] = (n_grid // 2, n_grid // 2)
    return base.with_(**changes)


@contextlib.contextmanager
def _output(path: Optional[str]) -> Iterator[IO[str]]:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="\n") as fh:
            yield fh


# -- subcommands --------------------------------------------------------------


def cmd_equilibria(args: argparse.Namespace) -> int:
    p = _params(args, model.TABLE1)
    xu = model.uninfected_equilibrium(p)
    xi = model.infected_equilibrium(p)
    floor = p.mu_V / (p.gamma * p.t_max)
    rc = model.r_crit(p) if p.n_burst > floor else None
    with _output(args.out) as fh:
        fh.write("N,r,R0,T_u,T_i,I_i,V_i,N_crit,r_crit\n")
        row = [p.n_burst, p.r, model.reproduction_ratio(p), xu.t_cells]
        row += list(xi.as_tuple()) if xi else [None, None, None]
        row += [model.n_crit(p), rc]
        fh.write(",".join(fmt(x) for x in row) + "\n")
    return 0


def cmd_modes(args: argparse.Namespace) -> int:
    p = _params(args, model.TABLE1)
    table = spectral.build_mode_table(p.ell, args.n_max)
    cum = table.cumulative_multiplicity()
    with _output(args.out) as fh:
        fh.write("k,n,lambda,multiplicity,cumulative\n")
        for k, (e, c) in enumerate(zip(table.entries, cum)):
            fh.write(f"{k},{e.n},{fmt(e.lam)},{e.multiplicity},{int(c)}\n")
    return 0


def cmd_regions(args: argparse.Namespace) -> int:
    n_range = parse_range(args.N) if args.N else (10.0, 1000.0, 100)
    r_range = parse_range(args.r) if args.r else (0.01, 600.0, 120)
    base = _params(args, model.TABLE1, skip=("n_burst", "r"))
    rows = stability.sweep(base, n_range, r_range)
    with _output(args.out) as fh:
        stability.write_sweep_csv(rows, fh, args.mode_columns)
    if args.gnuplot:
        _write_script(args.out, "regions.gp", _REGIONS_GP.format(csv=_csv_name(args.out)))
    return 0


def _hopf_row(p: Parameters) -> list[Optional[float]]:
    rep = hopf.hopf_points(p)
    c_1 = hopf.lyapunov_coefficient(p, rep.r1).re_c1
    c_2 = hopf.lyapunov_coefficient(p, rep.r2).re_c1
    return [
        rep.n, rep.r1, rep.r2, rep.omega1, rep.omega2, rep.lambda3_1, rep.lambda3_2,
        rep.transversality1, rep.transversality2, c_1, c_2, hopf.find_n_star(p),
    ]


def cmd_hopf(args: argparse.Namespace) -> int:
    p = _params(args, model.TABLE1)
    row = _hopf_row(p)
    with _output(args.out) as fh:
        fh.write("N,r1,r2,omega1,omega2,lambda3_1,lambda3_2,transv1,transv2,Re_c1_r1,Re_c1_r2,N_star\n")
        fh.write(",".join(fmt(x) for x in row) + "\n")
    return 0


def cmd_lyapunov(args: argparse.Namespace) -> int:
    p = _params(args, model.TABLE1)
    rep = hopf.hopf_points(p)
    conv = "printed" if args.printed_g21 else "corrected"
    cols = ["g20", "g11", "g02", "g21", "c1"]
    with _output(args.out) as fh:
        fh.write("N,point,r,omega," + ",".join(f"{c}_re,{c}_im" for c in cols) + ",verdict\n")
        for label, r, w in (("r1", rep.r1, rep.omega1), ("r2", rep.r2, rep.omega2)):
            lr = hopf.lyapunov_coefficient(p, r, g21_convention=conv)
            parts = [fmt(p.n_burst), label, fmt(r), fmt(w)]
            for c in cols:
                z = getattr(lr, c)
                parts += [fmt(z.real), fmt(z.imag)]
            fh.write(",".join(parts) + f",{lr.verdict}\n")
    return 0


def _run_and_write(cfg: sim.SimConfig, out_dir: Path, gnuplot: bool) -> tuple[sim.Trace, str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = cfg.with_(snapshot_times=(cfg.t_end,))
    trace = sim.run(cfg)
    with open(out_dir / "trace.csv", "w", newline="\n") as fh:
        sim.write_trace_csv(trace, fh)
    final = trace.final
    for name in ("T", "I", "V"):
        with open(out_dir / f"{name}_final.txt", "w", newline="\n") as fh:
            sim.write_snapshot(final, name, cfg.params.ell, fh)
    eq = model.infected_equilibrium(cfg.params) or model.uninfected_equilibrium(cfg.params)
    verdict = sim.detect_behavior(trace, eq)
    if gnuplot:
        _write_script(str(out_dir / "trace.csv"), "trace.gp", _TRACE_GP)
    return trace, verdict


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _sim_config(args, sim.SimConfig())
    _, verdict = _run_and_write(cfg, Path(args.out or "."), args.gnuplot)
    print(f"behavior: {verdict}")
    return 0


def cmd_reproduce(args: argparse.Namespace) -> int:
    scenario = FIGURES[args.id]
    base = sim.SimConfig()
    base = base.with_(params=base.params.with_(r=scenario["r"]), t_end=scenario["t_end"])
    cfg = _sim_config(args, base)
    out = Path(args.out or f"figure{args.id}")
    _, verdict = _run_and_write(cfg, out, args.gnuplot)
    print(f"figure {args.id}: N={cfg.params.n_burst:g} r={cfg.params.r:g} behavior: {verdict}")
    return 0


# -- gnuplot ------------------------------------------------------------------

_REGIONS_GP = """set datafile separator ','
set xlabel 'N'
set ylabel 'r'
set logscale y
plot '{csv}' using 1:(stringcolumn(4) eq 'P_interior' ? $2 : 1/0) with points pt 7 ps 0.4 title 'P', \\
     '{csv}' using 1:(stringcolumn(4) eq 'I_stable' ? $2 : 1/0) with points pt 7 ps 0.4 title 'I stable', \\
     '{csv}' using 1:(stringcolumn(4) eq 'U' ? $2 : 1/0) with points pt 7 ps 0.4 title 'U'
"""

_TRACE_GP = """set datafile separator ','
set xlabel 't (day)'
set ylabel 'V at probe'
plot 'trace.csv' using 1:4 every ::1 with lines title 'V'
"""


def _csv_name(path: Optional[str]) -> str:
    return os.path.basename(path) if path else "regions.csv"


def _write_script(csv_path: Optional[str], name: str, text: str) -> None:
    where = Path(csv_path).parent if csv_path else Path(".")
    (where / name).write_text(text)


COMMANDS = {
    "equilibria": cmd_equilibria,
    "modes": cmd_modes,
    "regions": cmd_regions,
    "hopf": cmd_hopf,
    "lyapunov": cmd_lyapunov,
    "simulate": cmd_simulate,
    "reproduce-figure": cmd_reproduce,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ParameterError, ValueError, IndexError, OSError) as exc:
        print(f"virodyn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except (sim.SolverInstability, hopf.SingularSolveError, ArithmeticError) as exc:
        print(f"virodyn {args.command}: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
