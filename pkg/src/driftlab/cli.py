"""Experiment runner and command-line interface.

Subcommands: ``spectra`` (dispersion-curve tables), ``simulate`` (direct or
envelope-level time stepping), ``derive`` (symbolic modulation-coefficient
reports), ``validate`` (gated error-scaling, residual-order, and delayed
take-off checks), and ``sweep`` (the same measurements fanned out over a
bounded worker pool, ungated).  Every run writes a ``manifest.txt`` whose
body is the effective configuration (it re-parses to the same config), a
human-readable ``summary.txt``, and CSV/binary artifacts.

Exit codes: 0 success, 2 configuration error, 3 runtime error,
4 acceptance-check failure (a ``validate`` gate did not hold).
"""

from __future__ import annotations

import argparse
import math
import os
import platform
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    dump_config,
    load_config,
    run_rng,
)
from .derivation import run_derivation
from .geometry import Chart, ChartPoint
from .io import (
    write_csv,
    write_error_report_csv,
    write_field_dump,
    write_manifest,
    write_modulation_csv,
    write_modulation_dump,
    write_plot_xy,
    write_timeseries_csv,
)
from .models import get_model
from .modulation import CoefficientTrack, ModulationState, evolve
from .modulation import default_grid as default_envelope_grid
from .physical import (
    Grid,
    SolverConfig,
    default_dt,
    default_grid,
    divergence_free,
    make_state,
    simulate,
)
from .spectra import classify, dispersion_curve
from .validate import (
    delay_run,
    fit_error_slope,
    residual_scaling_run,
    static_validity_run,
)

__all__ = ["main", "run", "EXIT_OK", "EXIT_CONFIG", "EXIT_RUNTIME", "EXIT_CHECK"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK = 4

_STATIC_SLOPE_RANGE = (1.7, 2.3)
_RESIDUAL_SLOPE_RANGE = (2.6, 3.4)


# --------------------------------------------------------------------------
# provenance
# --------------------------------------------------------------------------


def describe_version() -> str:
    """git-describe of the working tree, else the package version."""
    root = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=root, capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    return __version__


def platform_fingerprint() -> str:
    return (
        f"{platform.platform()} python-{platform.python_version()} "
        f"numpy-{np.__version__}"
    )


# --------------------------------------------------------------------------
# shared plumbing
# --------------------------------------------------------------------------


def _fmt_complex(value) -> str:
    z = complex(value)

    def part(x: float) -> str:
        return str(int(x)) if x == int(x) else repr(x)

    if z.imag == 0:
        return part(z.real)
    sign = "+" if z.imag >= 0 else "-"
    return f"{part(z.real)} {sign} {part(abs(z.imag))}i"


def _resolve_grid(config: ExperimentConfig, model) -> Grid:
    base = default_grid(model)
    dim = config.grid_dimension or base.dimension
    n_y = None
    if dim == 2:
        if model.model_id == "m4":
            n_y = config.grid_n_y or base.n_y
        elif config.grid_n_y:
            raise ConfigError("n_y only applies to m4; m2 uses a square box")
    return Grid(
        n_points=config.grid_n_points or base.n_points,
        length=config.grid_length or base.length,
        dimension=dim,
        n_y=n_y,
    )


def _solver_config(config: ExperimentConfig, model) -> SolverConfig:
    kwargs = {
        "dt": config.dt or default_dt(model),
        "record_stride": config.record_stride,
    }
    if config.scheme != "auto":
        kwargs["scheme"] = config.scheme
    return SolverConfig(**kwargs)


def _band_limited(rng, x: np.ndarray, length: float, amplitude: float,
                  n_modes: int) -> np.ndarray:
    """Random-phase band-limited profile with sup-norm of order ``amplitude``."""
    field = np.zeros_like(x)
    w = 2 * math.pi / length
    for k in range(1, n_modes + 1):
        field += np.cos(k * w * x + rng.uniform(0.0, 2 * math.pi))
    return (amplitude / max(n_modes, 1)) * field


def _initial_field(config: ExperimentConfig, model, grid: Grid, rng):
    amp, modes = config.ic_amplitude, config.ic_modes
    if model.model_id == "m4":
        x = grid.x()[:, None]
        y = grid.y()[None, :]
        wx = 2 * math.pi / grid.length
        u = np.zeros(grid.shape)
        v = np.zeros(grid.shape)
        for kx in range(1, modes + 1):
            for ky in range(1, modes + 1):
                c = rng.uniform(-1.0, 1.0)
                px = rng.uniform(0.0, 2 * math.pi)
                py = rng.uniform(0.0, 2 * math.pi)
                # velocity of the streamfunction mode c cos(kx wx x+px) cos(ky y+py)
                u += -c * ky * np.cos(kx * wx * x + px) * np.sin(ky * y + py)
                v += c * kx * wx * np.sin(kx * wx * x + px) * np.cos(ky * y + py)
        scale = amp / max(np.max(np.abs(u)), np.max(np.abs(v)), 1e-300)
        u, v = divergence_free(grid, scale * u, scale * v)
        comps = (u, v)
    elif grid.dimension == 2:
        x = grid.x()
        comps = tuple(
            _band_limited(rng, x, grid.length, amp, modes)[:, None]
            + _band_limited(rng, x, grid.length, amp, modes)[None, :]
            for _ in range(model.n_components)
        )
    else:
        x = grid.x()
        comps = tuple(
            _band_limited(rng, x, grid.length, amp, modes)
            for _ in range(model.n_components)
        )
    return make_state(model, grid, comps, mu=config.mu0, eps=config.eps)


def _envelope_track(config: ExperimentConfig, model) -> CoefficientTrack:
    if config.chart == "none":
        return CoefficientTrack.frozen(model, mu_bar=1.0)
    point = ChartPoint(
        Chart[config.chart],
        config.chart_r,
        config.chart_slow,
        config.chart_beta or model.beta,
    )
    return CoefficientTrack.from_chart(model, point)


def _initial_envelope(config: ExperimentConfig, model, track, grid: Grid, rng):
    amp, modes = config.ic_amplitude, config.ic_modes
    x = grid.x()

    def profile():
        re = _band_limited(rng, x, grid.length, amp, modes)
        im = _band_limited(rng, x, grid.length, amp, modes)
        out = (amp / 2.0) + re + 1j * im
        if model.model_id == "m4":
            out = np.real(out).astype(complex)
        if grid.dimension == 2:
            return np.broadcast_to(out, grid.shape).copy()
        return out

    n_amp = 2 if model.model_id == "m3" else 1
    amps = tuple(profile() for _ in range(n_amp))
    return ModulationState(track=track, grid=grid, amplitudes=amps)


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def _run_spectra(config: ExperimentConfig, out: Path) -> list:
    model = get_model(config.model, **config.model_params)
    xis = np.linspace(config.xi_min, config.xi_max, config.samples)
    kwargs = {"method": "numeric"} if model.model_id == "m4" else {}
    rows = dispersion_curve(model, xis, config.spectra_mu, **kwargs)
    write_csv(
        out / "spectra.csv",
        ("xi", "re_lambda_1", "im_lambda_1", "re_lambda_2", "im_lambda_2"),
        rows,
    )
    data = classify(model)
    summary = [
        f"dispersion table: model {config.model}, mu = {config.spectra_mu}",
        f"wavenumbers: {config.samples} samples in "
        f"[{config.xi_min}, {config.xi_max}]",
        f"critical data: xi_c = {data.xi_c}, omega_c = {data.omega_c}, "
        f"kind = {data.kind}",
        f"artifact: {out / 'spectra.csv'}",
    ]
    _write_summary(out, summary)
    return []


def _run_derive(config: ExperimentConfig, out: Path) -> list:
    result = run_derivation(config.model, **config.model_params)
    co = result.coefficients
    if config.model == "m4":
        aliases = [
            ("c1", co.ch_fourth, "fourth-derivative coefficient"),
            ("c2", co.ch_second, "second-derivative coefficient (times R_bar)"),
            ("c3", co.ch_cubic, "cubic-term coefficient"),
        ]
    else:
        aliases = [
            ("c1", co.linear_diffusion, "linear diffusion"),
            ("c2", co.mu_coefficient, "drift coupling"),
            ("c3", co.cubic_self, "cubic self-interaction"),
        ]
        if config.model == "m3":
            aliases += [
                ("c", co.advection, "group velocity (advection)"),
                ("gamma2", co.cubic_cross, "cubic cross-interaction"),
            ]
    lines = ["derived modulation coefficients:"]
    lines += [
        f"{name} = {_fmt_complex(value)}   ({note})"
        for name, value, note in aliases
    ]
    text = "\n".join(lines) + "\n\n" + result.report + "\n"
    (out / "derivation.txt").write_text(text, encoding="utf-8")
    write_csv(
        out / "coefficients.csv",
        ("index", "re", "im"),
        [(i + 1, complex(v).real, complex(v).imag)
         for i, (_, v, _) in enumerate(aliases)],
    )
    _write_summary(out, lines + [f"artifact: {out / 'derivation.txt'}"])
    return []


def _run_simulate(config: ExperimentConfig, out: Path) -> list:
    model = get_model(config.model, **config.model_params)
    rng = run_rng(config.seed, 0)
    if config.level == "modulation":
        track = _envelope_track(config, model)
        base = default_envelope_grid()
        dim = config.grid_dimension or base.dimension
        grid = Grid(
            n_points=config.grid_n_points or base.n_points,
            length=config.grid_length or base.length,
            dimension=dim,
        )
        state = _initial_envelope(config, model, track, grid, rng)
        dtbar = config.dt or 0.01
        states = evolve(state, config.t_end, dtbar,
                        record_stride=config.record_stride)
        write_modulation_csv(out / "timeseries.csv", states)
        write_modulation_dump(out / "final_state.bmod", states[-1])
        final = states[-1]
        summary = [
            f"envelope run: model {config.model}, chart {config.chart}",
            f"records: {len(states)}, final slow time {final.tbar}",
            f"final sup-norm: "
            + ", ".join("%.6g" % float(np.max(np.abs(a)))
                        for a in final.amplitudes),
        ]
    else:
        grid = _resolve_grid(config, model)
        solver = _solver_config(config, model)
        init = _initial_field(config, model, grid, rng)
        traj = simulate(model, init, config.t_end, solver)
        write_timeseries_csv(out / "timeseries.csv", traj)
        write_field_dump(out / "final_state.bmod", model.model_id,
                         traj.states[-1])
        final = traj.states[-1]
        summary = [
            f"direct run: model {config.model}, grid {grid.n_points} points, "
            f"dt = {solver.dt}",
            f"records: {len(traj.states)}, final time {final.time}, "
            f"final mu {final.mu}",
            f"final sup-norm: "
            + ", ".join("%.6g" % float(np.max(np.abs(c)))
                        for c in final.components),
        ]
    summary.append(f"artifact: {out / 'timeseries.csv'}")
    _write_summary(out, summary)
    return []


def _static_task(model_id: str, params: tuple, delta: float) -> tuple:
    model = get_model(model_id, **dict(params))
    report = static_validity_run(model, delta)
    return delta, report.max_error


def _residual_task(model_id: str, params: tuple, delta: float) -> tuple:
    model = get_model(model_id, **dict(params))
    report = residual_scaling_run(model, delta)
    return delta, max(sup for (_, sup) in report.residual_norms)


def _delay_task(model_id: str, params: tuple, eps: float, *, mu0: float,
                amplitude: float, threshold) -> tuple:
    model = get_model(model_id, **dict(params))
    t_star, mu_star = delay_run(model, eps, mu0=mu0, amplitude=amplitude,
                                threshold=threshold)
    return eps, t_star, mu_star


def _collect_validation(config: ExperimentConfig, mapper) -> tuple:
    """Run the requested measurements; returns (rows, summary, failures)."""
    params = tuple(sorted(config.model_params.items()))
    rows, summary, failures = [], [], []

    statics = list(mapper(partial(_static_task, config.model, params),
                          config.deltas))
    slope = None
    if len(statics) >= 3:
        slope, interval = fit_error_slope(
            [d for d, _ in statics], [e for _, e in statics]
        )
        lo, hi = _STATIC_SLOPE_RANGE
        verdict = "PASS" if lo <= slope <= hi else "FAIL"
        summary.append(
            f"{verdict}: static error slope {slope:.4f} "
            f"(95% CI [{interval[0]:.4f}, {interval[1]:.4f}]) "
            f"in [{lo}, {hi}]"
        )
        if verdict == "FAIL":
            failures.append(f"static error slope {slope:.4f} outside [{lo}, {hi}]")
    else:
        summary.append(
            f"static error slope: not fitted ({len(statics)} deltas; need 3)"
        )

    residual_slope = None
    residuals = []
    if config.residual_fit:
        residuals = list(mapper(partial(_residual_task, config.model, params),
                                config.deltas))
        if len(residuals) >= 3:
            residual_slope, r_interval = fit_error_slope(
                [d for d, _ in residuals], [r for _, r in residuals]
            )
            lo, hi = _RESIDUAL_SLOPE_RANGE
            verdict = "PASS" if lo <= residual_slope <= hi else "FAIL"
            summary.append(
                f"{verdict}: residual slope {residual_slope:.4f} "
                f"(95% CI [{r_interval[0]:.4f}, {r_interval[1]:.4f}]) "
                f"in [{lo}, {hi}]"
            )
            if verdict == "FAIL":
                failures.append(
                    f"residual slope {residual_slope:.4f} outside [{lo}, {hi}]"
                )
        else:
            summary.append(
                f"residual slope: not fitted ({len(residuals)} deltas; need 3)"
            )
    res_by_delta = dict(residuals)

    for delta, max_error in statics:
        rows.append({
            "delta": delta,
            "max_error": max_error,
            "slope": slope,
            "residual_slope": residual_slope,
        })
        if delta in res_by_delta:
            rows[-1]["residual_max"] = res_by_delta[delta]

    if config.delay:
        task = partial(_delay_task, config.model, params,
                       mu0=config.delay_mu0, amplitude=config.delay_amplitude,
                       threshold=config.threshold or None)
        delays = list(mapper(task, config.sweep_eps))
        for eps, t_star, mu_star in delays:
            rows.append({"eps": eps, "t_takeoff": t_star,
                         "mu_takeoff": mu_star})
            verdict = "PASS" if mu_star > 0 else "FAIL"
            summary.append(
                f"{verdict}: eps = {eps:g} take-off at t = {t_star:.4f}, "
                f"mu = {mu_star:.5f} (> 0 required)"
            )
            if verdict == "FAIL":
                failures.append(
                    f"take-off mu {mu_star:.5f} <= 0 at eps = {eps:g}"
                )
    return rows, summary, failures


def _write_validation_artifacts(out: Path, rows, summary) -> None:
    write_error_report_csv(out / "report.csv", rows)
    statics = [r for r in rows if "delta" in r]
    if statics:
        write_plot_xy(out / "plot_static_error.csv",
                      [r["delta"] for r in statics],
                      [r["max_error"] for r in statics],
                      labels=("delta", "max_error"))
    resid = [r for r in rows if "residual_max" in r]
    if resid:
        write_plot_xy(out / "plot_residual.csv",
                      [r["delta"] for r in resid],
                      [r["residual_max"] for r in resid],
                      labels=("delta", "residual_sup"))
    delays = [r for r in rows if "eps" in r]
    if delays:
        write_plot_xy(out / "plot_delay.csv",
                      [r["eps"] for r in delays],
                      [r["mu_takeoff"] for r in delays],
                      labels=("eps", "mu_takeoff"))
    _write_summary(out, summary + [f"artifact: {out / 'report.csv'}"])


def _run_validate(config: ExperimentConfig, out: Path) -> list:
    rows, summary, failures = _collect_validation(config, map)
    _write_validation_artifacts(out, rows, summary)
    return failures


def _run_sweep(config: ExperimentConfig, out: Path) -> list:
    workers = config.workers or os.cpu_count() or 1

    def pool_map(fn, items):
        items = list(items)
        if not items:
            return []
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
            return list(pool.map(fn, items))

    rows, summary, _failures = _collect_validation(config, pool_map)
    summary.insert(0, f"sweep over {len(config.deltas)} deltas"
                      + (f" and {len(config.sweep_eps)} eps values"
                         if config.delay else "")
                      + f" on {workers} workers (ungated)")
    _write_validation_artifacts(out, rows, summary)
    return []


_DISPATCH = {
    "spectra": _run_spectra,
    "derive": _run_derive,
    "simulate": _run_simulate,
    "validate": _run_validate,
    "sweep": _run_sweep,
}


def _write_summary(out: Path, lines) -> None:
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")


# --------------------------------------------------------------------------
# entry points
# --------------------------------------------------------------------------


def _execute(config: ExperimentConfig) -> int:
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out / "manifest.txt", dump_config(config),
                       describe_version(), platform_fingerprint())
    except OSError as exc:
        print(f"error [{config.experiment}/{config.model}]: {exc}",
              file=sys.stderr)
        return EXIT_RUNTIME
    try:
        failures = _DISPATCH[config.experiment](config, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime errors carry experiment context
        print(
            f"error [{config.experiment}/{config.model}]: "
            f"{type(exc).__name__}: {exc}",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    if failures:
        for message in failures:
            print(f"check failed: {message}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def run(config, *, out=None, seed=None) -> int:
    """Execute one experiment; returns the process exit code.

    ``config`` is a path to a configuration file or an
    :class:`ExperimentConfig`; ``out``/``seed`` override the corresponding
    fields.  Artifacts are written under the output directory.
    """
    try:
        cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
        overrides = {}
        if out is not None:
            overrides["run.out"] = str(out)
        if seed is not None:
            overrides["run.seed"] = str(seed)
        if overrides:
            cfg = apply_overrides(cfg, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(cfg)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

# flag name -> config "section.key" per subcommand
_FLAGS = {
    "spectra": {
        "--model": "run.model",
        "--mu": "spectra.mu",
        "--xi-min": "spectra.xi_min",
        "--xi-max": "spectra.xi_max",
        "--samples": "spectra.samples",
    },
    "simulate": {
        "--model": "run.model",
        "--level": "run.level",
        "--n-points": "grid.n_points",
        "--length": "grid.length",
        "--dimension": "grid.dimension",
        "--n-y": "grid.n_y",
        "--dt": "solver.dt",
        "--t-end": "solver.t_end",
        "--record-stride": "solver.record_stride",
        "--scheme": "solver.scheme",
        "--mu0": "solver.mu0",
        "--eps": "solver.eps",
        "--ic-amplitude": "solver.ic_amplitude",
        "--ic-modes": "solver.ic_modes",
        "--chart": "chart.chart",
        "--r": "chart.r",
        "--slow": "chart.slow",
        "--beta": "chart.beta",
    },
    "derive": {
        "--model": "run.model",
        "--a": "model.a",
        "--d1": "model.d1",
        "--d2": "model.d2",
    },
    "validate": {
        "--model": "run.model",
        "--deltas": "sweep.deltas",
        "--eps": "sweep.eps",
        "--threshold": "validate.threshold",
        "--mu0": "validate.mu0",
        "--amplitude": "validate.amplitude",
    },
    "sweep": {
        "--model": "run.model",
        "--deltas": "sweep.deltas",
        "--eps": "sweep.eps",
        "--workers": "run.workers",
        "--threshold": "validate.threshold",
        "--mu0": "validate.mu0",
        "--amplitude": "validate.amplitude",
    },
}

_HELP = {
    "spectra": "tabulate the dispersion relation lambda(xi, mu)",
    "simulate": "time-step a model directly or at the envelope level",
    "derive": "derive modulation-equation coefficients symbolically",
    "validate": "run gated error-scaling / residual / delay checks",
    "sweep": "run the validation measurements on a worker pool (ungated)",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftlab",
        description="slow-passage pattern-formation laboratory",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, flags in _FLAGS.items():
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", metavar="PATH",
                       help="configuration file (defaults apply without it)")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--seed", metavar="N", help="64-bit experiment seed")
        for flag, dotted in flags.items():
            p.add_argument(flag, dest=f"cfg:{dotted}", metavar="V",
                           help=f"override {dotted}")
        if name in ("validate", "sweep"):
            p.add_argument("--residual-fit", action="store_const", const="true",
                           dest="cfg:validate.residual_fit",
                           help="also fit the residual-order slope")
            p.add_argument("--delay", action="store_const", const="true",
                           dest="cfg:validate.delay",
                           help="also run delayed take-off measurements")
        if name == "derive":
            p.add_argument("--param", action="append", metavar="NAME=VALUE",
                           default=[],
                           help="extra model parameter (repeatable)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return EXIT_OK if code in (0, None) else EXIT_CONFIG
    try:
        cfg = (load_config(args.config) if args.config
               else ExperimentConfig())
        overrides = {"run.experiment": args.experiment}
        if args.out is not None:
            overrides["run.out"] = args.out
        if args.seed is not None:
            overrides["run.seed"] = args.seed
        for key, value in vars(args).items():
            if key.startswith("cfg:") and value is not None:
                overrides[key[len("cfg:"):]] = value
        for item in getattr(args, "param", []):
            name, sep, value = item.partition("=")
            if not sep or not name:
                raise ConfigError(
                    f"--param expects NAME=VALUE, got {item!r}"
                )
            overrides[f"model.{name}"] = value
        cfg = apply_overrides(cfg, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
