"""Command-line entry points: solve, eigen, ibm, phase, threshold.

Configuration is a flat ``key = value`` text file ('#' starts a comment,
lists are comma-separated). Every key maps to exactly one field of
ExperimentConfig; unknown keys are reported all at once. All numeric CSV
output carries at least 12 significant digits.

Exit codes: 0 success, 1 invalid configuration or request, 2 numerical
failure (solver abort, eigensolve non-convergence, population overflow).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import model
from .eigen import EigenError, default_schedules, lambda_limit
from .grid import Field2, Grid, build_grid
from .ibm import IbmOverflowError, IbmParams, run_replicates
from .pde import SolverConfig, SolverError, gaussian_initial, integrate_to
from .thresholds import ThresholdError, classify, find_threshold
from .eigen import lambda_of


class ConfigError(ValueError):
    """One or more invalid configuration entries (all collected)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; defaults mirror the reference scenario
    (n=2, rmax=1/18, mu^2 = U*lambda_var = 1/1800, horizon 300)."""

    # model
    n: int = 2
    mu: float = math.sqrt(1.0 / 1800.0)
    rmax1: float = 1.0 / 18.0
    rmax2: float = 1.0 / 18.0
    m_D: float = 0.5
    delta: float = 0.05
    migration: str = "symmetric"  # "symmetric" or "general"
    d11: float = 0.0
    d12: float = 0.0
    d21: float = 0.0
    d22: float = 0.0
    growth: str = model.GROWTH_MALTHUSIAN
    # grid (None -> derived from the model scales)
    L: float | None = None
    m: int | None = None
    # time stepping
    t_end: float = 300.0
    dt_init: float = 1e-3
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    record_every: float = 0.5
    # initial data
    initial: str = "origin"  # "origin" or "spread"
    initial_variance: float | None = None  # None -> mu
    initial_mass: float = 1e4
    # eigen
    h_target: float | None = None
    tol_domain: float = 1e-6
    rungs: int = 4
    richardson: bool = True
    # ibm
    U: float = 1.0 / 6.0
    lambda_var: float = 1.0 / 300.0
    N0: int = 10_000
    T: int = 300
    replicates: int = 50
    cap: int = 10_000_000
    # phase sweep (axis 1 = delta, axis 2 = m_D)
    sweep_params: tuple[str, ...] = ("delta", "m_D")
    sweep_min: tuple[float, ...] = (0.0, 0.0)
    sweep_max: tuple[float, ...] = (0.1, 1.0)
    sweep_steps: tuple[int, ...] = (6, 6)
    phase_ibm: bool = True
    # threshold search
    threshold_param: str = "delta"
    threshold_lo: float | None = None
    threshold_hi: float | None = None
    threshold_tol: float = 1e-4
    # run control
    seed: int = 0
    threads: int = 1
    out_dir: str = "."


_KINDS = {
    "n": "int", "mu": "float", "rmax1": "float", "rmax2": "float", "m_D": "float",
    "delta": "float", "migration": "str", "d11": "float", "d12": "float",
    "d21": "float", "d22": "float", "growth": "str",
    "L": "opt_float", "m": "opt_int",
    "t_end": "float", "dt_init": "float", "rel_tol": "float", "abs_tol": "float",
    "record_every": "float",
    "initial": "str", "initial_variance": "opt_float", "initial_mass": "float",
    "h_target": "opt_float", "tol_domain": "float", "rungs": "int", "richardson": "bool",
    "U": "float", "lambda_var": "float", "N0": "int", "T": "int",
    "replicates": "int", "cap": "int",
    "sweep_params": "strs", "sweep_min": "floats", "sweep_max": "floats",
    "sweep_steps": "ints",
    "phase_ibm": "bool",
    "threshold_param": "str", "threshold_lo": "opt_float", "threshold_hi": "opt_float",
    "threshold_tol": "float",
    "seed": "int", "threads": "int", "out_dir": "str",
}


def _parse_one(kind: str, raw: str):
    if kind in ("opt_float", "opt_int") and raw.lower() in ("auto", "none"):
        return None
    if kind in ("int", "opt_int"):
        return int(raw)
    if kind in ("float", "opt_float"):
        return float(raw)
    if kind == "bool":
        if raw.lower() in ("true", "yes", "1", "on"):
            return True
        if raw.lower() in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind == "str":
        return raw
    if kind == "strs":
        return tuple(part.strip() for part in raw.split(","))
    if kind == "floats":
        return tuple(float(part) for part in raw.split(","))
    if kind == "ints":
        return tuple(int(part) for part in raw.split(","))
    raise AssertionError(kind)


def _emit_one(kind: str, value) -> str:
    if value is None:
        return "auto"
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("strs", "floats", "ints"):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str) -> ExperimentConfig:
    """Parse key = value text into a validated ExperimentConfig."""
    values = {}
    errors = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
            continue
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _KINDS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in values:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            values[key] = _parse_one(_KINDS[key], raw)
        except ValueError as exc:
            errors.append(f"line {lineno}: bad value for {key!r}: {exc}")
    if errors:
        raise ConfigError("; ".join(errors))
    config = ExperimentConfig(**values)
    validate_config(config)
    return config


def emit_config(config: ExperimentConfig) -> str:
    """Emit a config as parseable text; parse_config(emit_config(c)) == c."""
    lines = [f"{f.name} = {_emit_one(_KINDS[f.name], getattr(config, f.name))}"
             for f in fields(config)]
    return "\n".join(lines) + "\n"


def validate_config(config: ExperimentConfig) -> None:
    """Collect every invalid entry and raise once."""
    errors = []
    if config.migration not in ("symmetric", "general"):
        errors.append(f"migration must be 'symmetric' or 'general', got {config.migration!r}")
    if config.initial not in ("origin", "spread"):
        errors.append(f"initial must be 'origin' or 'spread', got {config.initial!r}")
    if config.threads < 1:
        errors.append(f"threads must be >= 1, got {config.threads}")
    if config.replicates < 1:
        errors.append(f"replicates must be >= 1, got {config.replicates}")
    if config.m_D < 0:
        errors.append(f"m_D must be >= 0, got {config.m_D}")
    if tuple(config.sweep_params) != ("delta", "m_D"):
        errors.append(f"sweep_params must be 'delta,m_D', got {config.sweep_params!r}")
    for name in ("sweep_min", "sweep_max", "sweep_steps"):
        if len(getattr(config, name)) != 2:
            errors.append(f"{name} must have two entries, got {getattr(config, name)!r}")
    if len(config.sweep_steps) == 2 and any(s < 2 for s in config.sweep_steps):
        errors.append(f"sweep_steps entries must be >= 2, got {config.sweep_steps!r}")
    if config.m is not None and (config.m < 3 or config.m % 2 == 0):
        errors.append(f"m must be odd and >= 3, got {config.m}")
    if config.threshold_param not in ("delta", "m_D", "mu", "rmax"):
        errors.append(f"threshold_param must be delta, m_D, mu or rmax, got {config.threshold_param!r}")
    if (config.threshold_lo is None) != (config.threshold_hi is None):
        errors.append("threshold_lo and threshold_hi must be given together")
    if errors:
        raise ConfigError("; ".join(errors))


def to_model_params(config: ExperimentConfig, *, delta: float | None = None,
                    m_d: float | None = None) -> model.ModelParams:
    """Model parameters from a config, optionally overriding delta / m_D."""
    if config.migration == "symmetric":
        mig = model.Symmetric(config.delta if delta is None else delta)
    else:
        mig = model.General(config.d11, config.d12, config.d21, config.d22)
    return model.ModelParams(
        n=config.n, mu=config.mu, rmax1=config.rmax1, rmax2=config.rmax2,
        beta=model.beta_of(config.m_D if m_d is None else m_d),
        migration=mig, growth=config.growth)


def default_box(params: model.ModelParams) -> float:
    """Default truncation half-width max(4 beta, 6 sqrt(mu)) + 2."""
    return max(4.0 * params.beta, 6.0 * math.sqrt(params.mu)) + 2.0


def grid_for(config: ExperimentConfig, params: model.ModelParams) -> Grid:
    length = config.L if config.L is not None else default_box(params)
    if config.m is not None:
        m = config.m
    else:
        m = 2 * max(1, round(16.0 * length)) + 1  # spacing ~1/16
    return build_grid(params.n, length, m)


def solver_config(config: ExperimentConfig) -> SolverConfig:
    return SolverConfig(t_end=config.t_end, dt_init=config.dt_init,
                        rel_tol=config.rel_tol, abs_tol=config.abs_tol,
                        record_every=config.record_every)


def initial_state(config: ExperimentConfig, params: model.ModelParams,
                  grid: Grid) -> Field2:
    """Initial densities: identical in both habitats (mirror-symmetric data).

    "origin": one Gaussian bump at the midpoint between the optima.
    "spread": equal-mass bumps at the midpoint and at both optima; same
    total mass, far smaller transient, which matters when classifying
    persistence from a finite horizon.
    """
    variance = config.initial_variance if config.initial_variance is not None else params.mu
    if config.initial == "origin":
        u = gaussian_initial(grid, 0.0, variance, config.initial_mass)
    else:
        third = config.initial_mass / 3.0
        u = (gaussian_initial(grid, 0.0, variance, third)
             + gaussian_initial(grid, -params.beta, variance, third)
             + gaussian_initial(grid, params.beta, variance, third))
    return Field2(u, u.copy())


def ibm_params(config: ExperimentConfig, *, delta: float | None = None,
               m_d: float | None = None) -> IbmParams:
    if config.rmax1 != config.rmax2:
        raise ConfigError("the individual-based model needs rmax1 == rmax2")
    return IbmParams(
        n=config.n, U=config.U, lambda_var=config.lambda_var,
        delta=config.delta if delta is None else delta,
        rmax=config.rmax1,
        beta=model.beta_of(config.m_D if m_d is None else m_d),
        N0=config.N0, T=config.T, cap=config.cap)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.15g}"
    return str(x)


def _write_csv(path: str, header: str, rows, footer: str | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
        if footer is not None:
            fh.write(footer + "\n")


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_solve(config: ExperimentConfig, out_dir: str) -> dict[str, str]:
    """Run the density model; write trajectory.csv and final_state.txt."""
    params = to_model_params(config)
    grid = grid_for(config, params)
    state0 = initial_state(config, params, grid)
    traj, final = integrate_to(params, grid, state0, solver_config(config))

    traj_path = os.path.join(out_dir, "trajectory.csv")
    _write_csv(traj_path, "t,N1,N2,rbar1,rbar2",
               zip(traj.t, traj.N1, traj.N2, traj.rbar1, traj.rbar2))

    state_path = os.path.join(out_dir, "final_state.txt")
    coords = grid.coords().reshape(-1, grid.n)
    u1 = final.u1.ravel()
    u2 = final.u2.ravel()
    with open(state_path, "w") as fh:
        fh.write(f"# n={grid.n} L={_fmt(grid.L)} m={grid.m} h={_fmt(grid.h)}\n")
        fh.write(f"# t={_fmt(traj.t[-1])} extinct={traj.extinct}\n")
        fh.write(",".join(f"x{k + 1}" for k in range(grid.n)) + ",u1,u2\n")
        for i in range(coords.shape[0]):
            parts = [_fmt(c) for c in coords[i]] + [_fmt(u1[i]), _fmt(u2[i])]
            fh.write(",".join(parts) + "\n")
    return {"trajectory": traj_path, "final_state": state_path}


def cmd_eigen(config: ExperimentConfig, out_dir: str) -> dict[str, str]:
    """Run the box ladder; write eigen.csv with a trailing # lambda= row."""
    params = to_model_params(config)
    if config.L is not None and config.m is not None:
        ls, ms = [config.L], [config.m]
    else:
        ls, ms = default_schedules(params, h_target=config.h_target, rungs=config.rungs)
    result = lambda_limit(params, ls, ms, tol_domain=config.tol_domain,
                          richardson=config.richardson)
    path = os.path.join(out_dir, "eigen.csv")
    _write_csv(path, "L,m,lambda_L,residual",
               ((row.L, row.m, row.lambda_L, row.residual) for row in result.rows),
               footer=f"# lambda={_fmt(result.lam)}")
    return {"eigen": path}


def cmd_ibm(config: ExperimentConfig, out_dir: str) -> dict[str, str]:
    """Run replicate stochastic simulations; write ibm.csv and ibm_mean.csv."""
    params = ibm_params(config)
    seeds = [[config.seed, k] for k in range(config.replicates)]
    summary = run_replicates(params, seeds)

    path = os.path.join(out_dir, "ibm.csv")
    def rows():
        for rep, tr in enumerate(summary.trajectories):
            for i in range(tr.t.size):
                yield rep, tr.t[i], tr.N1[i], tr.N2[i]
    _write_csv(path, "replicate,t,N1,N2", rows())

    mean_path = os.path.join(out_dir, "ibm_mean.csv")
    _write_csv(mean_path, "t,N_total_mean", zip(summary.t, summary.n_total_mean))
    return {"ibm": path, "ibm_mean": mean_path}


def cmd_threshold(config: ExperimentConfig, out_dir: str) -> dict[str, str]:
    """Bisect the requested critical parameter; write threshold.csv."""
    params = to_model_params(config)
    bracket = None
    if config.threshold_lo is not None and config.threshold_hi is not None:
        bracket = (config.threshold_lo, config.threshold_hi)
    result = find_threshold(params, config.threshold_param, bracket,
                            tol_lambda=config.threshold_tol,
                            h_target=config.h_target, rungs=config.rungs,
                            tol_domain=config.tol_domain,
                            richardson=config.richardson)
    path = os.path.join(out_dir, "threshold.csv")
    _write_csv(path, "parameter,lo,hi,value,lambda_at_value,iterations",
               [(result.parameter, result.lo, result.hi, result.value,
                 result.lambda_at_value, result.iterations)])
    return {"threshold": path}


@dataclass
class PhaseCell:
    """One sweep cell: requested rates, eigenvalue, classification, finals."""

    delta: float
    m_D: float
    lam: float
    classification: str
    n_total_pde: float
    n_total_ibm_mean: float
    error: str


# Proxy used for requested delta = 0 cells (the model requires delta > 0;
# the shift is orders of magnitude below every tolerance in play).
_DELTA_PROXY = 1e-9


def _phase_cell(args) -> PhaseCell:
    config, i, j, delta, m_d = args
    try:
        delta_eff = delta if delta > 0 else _DELTA_PROXY
        params = to_model_params(config, delta=delta_eff, m_d=m_d)
        lam = lambda_of(params, h_target=config.h_target, rungs=config.rungs,
                        tol_domain=config.tol_domain, richardson=config.richardson)
        classification = classify(params, lam=lam)

        # Shared box across cells so PDE finals are comparable row to row.
        beta_max = model.beta_of(max(config.sweep_max[1], config.m_D))
        length = config.L if config.L is not None else max(
            4.0 * beta_max, 6.0 * math.sqrt(config.mu)) + 2.0
        m = config.m if config.m is not None else 2 * max(1, round(8.0 * length)) + 1
        grid = build_grid(config.n, length, m)
        state0 = initial_state(config, params, grid)
        traj, _ = integrate_to(params, grid, state0, solver_config(config))
        n_pde = float(traj.N1[-1] + traj.N2[-1])

        n_ibm = math.nan
        if config.phase_ibm:
            ip = ibm_params(config, delta=delta, m_d=m_d)
            seeds = [[config.seed, i, j, k] for k in range(config.replicates)]
            summary = run_replicates(ip, seeds)
            n_ibm = float(summary.n_total_mean[-1])
        return PhaseCell(delta=delta, m_D=m_d, lam=lam, classification=classification,
                         n_total_pde=n_pde, n_total_ibm_mean=n_ibm, error="")
    except Exception as exc:  # cell failures land in the error column
        return PhaseCell(delta=delta, m_D=m_d, lam=math.nan, classification="error",
                         n_total_pde=math.nan, n_total_ibm_mean=math.nan,
                         error=f"{type(exc).__name__}: {exc}")


def phase_cells(config: ExperimentConfig) -> list[PhaseCell]:
    """Evaluate every sweep cell (delta-major order), optionally in parallel."""
    deltas = np.linspace(config.sweep_min[0], config.sweep_max[0], config.sweep_steps[0])
    mds = np.linspace(config.sweep_min[1], config.sweep_max[1], config.sweep_steps[1])
    jobs = [(config, i, j, float(d), float(md))
            for i, d in enumerate(deltas) for j, md in enumerate(mds)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(_phase_cell, jobs))
    return [_phase_cell(job) for job in jobs]


def cmd_phase(config: ExperimentConfig, out_dir: str, *, svg: bool = False) -> dict[str, str]:
    """Sweep the (delta, m_D) plane; write phase.csv (and phase.svg)."""
    cells = phase_cells(config)
    path = os.path.join(out_dir, "phase.csv")
    _write_csv(path, "delta,m_D,lambda,classification,N_total_pde,N_total_ibm_mean,error",
               ((c.delta, c.m_D, c.lam, c.classification, c.n_total_pde,
                 c.n_total_ibm_mean, c.error) for c in cells))
    written = {"phase": path}
    if svg:
        svg_path = os.path.join(out_dir, "phase.svg")
        with open(svg_path, "w") as fh:
            fh.write(phase_svg(config, cells))
        written["phase_svg"] = svg_path
    return written


def phase_svg(config: ExperimentConfig, cells: list[PhaseCell]) -> str:
    """Hand-emitted heat map of the sweep (no plotting dependency)."""
    n_d, n_m = config.sweep_steps
    cell_px, margin = 64, 70
    width = margin + n_d * cell_px + 20
    height = margin + n_m * cell_px + 60
    colors = {"persist": "#2e7d46", "extinct": "#8c2d2d",
              "critical": "#d9a420", "error": "#777777"}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<style>text{font-family:sans-serif;font-size:12px}</style>',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    by_key = {(round(c.delta, 12), round(c.m_D, 12)): c for c in cells}
    deltas = sorted({round(c.delta, 12) for c in cells})
    mds = sorted({round(c.m_D, 12) for c in cells})
    for i, d in enumerate(deltas):
        for j, md in enumerate(mds):
            c = by_key[(d, md)]
            x = margin + i * cell_px
            y = margin + (n_m - 1 - j) * cell_px
            fill = colors.get(c.classification, "#777777")
            title = f"delta={d}, m_D={md}, lambda={c.lam:.6g}"
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell_px - 2}" height="{cell_px - 2}" '
                f'fill="{fill}"><title>{title}</title></rect>')
    for i, d in enumerate(deltas):
        x = margin + i * cell_px + cell_px // 2 - 12
        parts.append(f'<text x="{x}" y="{margin + n_m * cell_px + 18}">{d:.3g}</text>')
    for j, md in enumerate(mds):
        y = margin + (n_m - 1 - j) * cell_px + cell_px // 2
        parts.append(f'<text x="{margin - 45}" y="{y}">{md:.3g}</text>')
    parts.append(f'<text x="{margin}" y="{margin - 30}" font-weight="bold">'
                 'persistence map (columns: delta, rows: m_D)</text>')
    legend_y = margin + n_m * cell_px + 40
    x = margin
    for name, color in colors.items():
        parts.append(f'<rect x="{x}" y="{legend_y - 12}" width="14" height="14" fill="{color}"/>')
        parts.append(f'<text x="{x + 18}" y="{legend_y}">{name}</text>')
        x += 110
    parts.append("</svg>")
    return "\n".join(parts)


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def _load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path) as fh:
        return parse_config(fh.read())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="twopatch",
        description="Two-habitat adaptation dynamics: PDE, eigenvalue, stochastic and sweep runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("solve", "integrate the density model and record the trajectory"),
        ("eigen", "estimate the principal eigenvalue via the box ladder"),
        ("ibm", "run replicate individual-based simulations"),
        ("phase", "sweep the (delta, m_D) plane and classify persistence"),
        ("threshold", "bisect a critical parameter value"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--out", help="output directory (default: config out_dir)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--threads", type=int, help="worker pool size for sweeps")
        if name == "phase":
            p.add_argument("--svg", action="store_true", help="also write phase.svg")
    args = parser.parse_args(argv)

    try:
        config = _load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if overrides:
            config = replace(config, **overrides)
            validate_config(config)
        out_dir = args.out if args.out is not None else config.out_dir
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "solve":
            written = cmd_solve(config, out_dir)
        elif args.command == "eigen":
            written = cmd_eigen(config, out_dir)
        elif args.command == "ibm":
            written = cmd_ibm(config, out_dir)
        elif args.command == "phase":
            written = cmd_phase(config, out_dir, svg=args.svg)
        else:
            written = cmd_threshold(config, out_dir)
    except (ConfigError, ThresholdError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, EigenError, IbmOverflowError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    for kind, path in written.items():
        print(f"{kind}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
