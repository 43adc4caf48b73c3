#!/usr/bin/env python3
"""
barma — command-line entry point.

    barma_cli.py fit       DATA.csv --out DIR     posterior draws, summary, unit-root report
    barma_cli.py forecast  DATA.csv --out DIR     hold out, fit, forecast, MAE
    barma_cli.py simulate  --out DIR              simulated series (or --preset application)
    barma_cli.py select    DATA.csv --out DIR     stepping-stone log-ML per order, Bayes factors
    barma_cli.py unitroot  DATA.csv --out DIR     quasi-unit-root probabilities
    barma_cli.py mc-study  --out DIR              Monte Carlo study preset
    barma_cli.py replay    DIR/manifest.json       rerun a recorded command

Settings come from config.yaml (or --config FILE); flags override the
file.  Every output directory gets a manifest.json; ``replay MANIFEST``
reruns the recorded command and reproduces its outputs byte for byte.

Exit status: 0 success, 1 invalid input or configuration, 2 numerical
failure.  Errors go to stderr as ``barma: error[<ErrorClass>]: <message>``.

# ---- Changelog ----
# [2026-10-16] Initial creation.
#   What: argparse subcommands, flag → config overrides, output writers,
#         manifest record/replay, --from-fit reuse of saved draws.
# -------------------
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.config import BarmaConfig, apply_dict, config_from_dict, load_config
from core.errors import EXIT_NUMERICAL, EXIT_OK, BarmaError, ConfigError, DataFileError, EstimationError
from core.model import ModelOrder, ParameterVector
from core.posterior import gamma_prior_from_mean_var
from pipelines.analysis import density_grid, draws_frame, thin_trace
from pipelines.simulate import APPLICATION_HOLDOUT
from runtime.chains import load_draws, save_draws
from runtime.datafiles import (
    RunManifest,
    load_series,
    read_manifest,
    write_frame,
    write_manifest,
    write_series,
)
from runtime.engine import BarmaEngine, FitResult

logger = logging.getLogger("barma.cli")

COMMANDS = ("fit", "forecast", "simulate", "select", "unitroot", "mc-study")
LOG_FORMAT = "%(asctime)s [%(name)s] %(levelname)s %(message)s"
DRAWS_FILE = "draws.msgpack"


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """One command invocation, fully resolved."""
    command: str
    output: Path
    config: BarmaConfig = field(default_factory=BarmaConfig)
    input: Optional[Path] = None
    from_fit: Optional[Path] = None
    simulation: Dict[str, Any] = field(default_factory=dict)

    def arguments(self) -> Dict[str, Any]:
        """The non-config arguments, as recorded in the manifest."""
        return {
            "input": str(self.input) if self.input else None,
            "from_fit": str(self.from_fit) if self.from_fit else None,
            "simulation": dict(self.simulation),
        }


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's exit 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(f"{self.prog}: {message}")


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> List[List[int]]:
    """"0,1;1,0;1,1" → [[0,1],[1,0],[1,1]]."""
    try:
        pairs = [[int(v) for v in item.split(",")] for item in text.split(";") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected p,q pairs separated by ';', got {text!r}") from None
    if not pairs or any(len(p) != 2 for p in pairs):
        raise argparse.ArgumentTypeError(f"expected p,q pairs separated by ';', got {text!r}")
    return pairs


# (flag dest, config section, config key)
_OVERRIDES = [
    ("p", "model", "p"),
    ("q", "model", "q"),
    ("link", "model", "link"),
    ("nu_shape", "priors", "nu_shape"),
    ("nu_rate", "priors", "nu_rate"),
    ("alpha_prior", "priors", "alpha_prior"),
    ("chains", "sampler", "n_chains"),
    ("iterations", "sampler", "n_iterations"),
    ("warmup_fraction", "sampler", "warmup_fraction"),
    ("target_accept", "sampler", "target_accept"),
    ("max_depth", "sampler", "max_tree_depth"),
    ("seed", "sampler", "seed"),
    ("level", "analysis", "level"),
    ("thresholds", "analysis", "thresholds"),
    ("horizon", "forecast", "horizon"),
    ("holdout", "forecast", "holdout"),
    ("max_draws", "forecast", "max_draws"),
    ("grid", "selection", "grid"),
    ("rungs", "selection", "rungs"),
    ("draws_per_rung", "selection", "draws_per_rung"),
    ("warmup_per_rung", "selection", "warmup_per_rung"),
    ("study_preset", "study", "preset"),
    ("replicates", "study", "replicates"),
    ("full_replicates", "study", "full_replicates"),
    ("cells", "study", "cells"),
    ("burn_in", "study", "burn_in"),
    ("threads", "runtime", "threads"),
    ("log_level", "runtime", "log_level"),
]


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("run")
    g.add_argument("--out", type=Path, help="output directory")
    g.add_argument("--config", help="YAML config file (default: config.yaml next to this script)")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="worker processes (default: $BARMA_THREADS or all CPUs)")
    g.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _model(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("model and sampler")
    g.add_argument("--p", type=int, help="AR order")
    g.add_argument("--q", type=int, help="MA order")
    g.add_argument("--link", choices=["logit", "cloglog"])
    g.add_argument("--nu-shape", type=float)
    g.add_argument("--nu-rate", type=float)
    g.add_argument("--nu-mean", type=float, help="set the ν prior by mean (with --nu-var)")
    g.add_argument("--nu-var", type=float, help="set the ν prior by variance (with --nu-mean)")
    g.add_argument("--sigma2", type=float, help="variance of every normal prior")
    g.add_argument("--alpha-prior", choices=["normal", "uniform"])
    g.add_argument("--chains", type=int)
    g.add_argument("--iterations", type=int, help="iterations per chain, warmup included")
    g.add_argument("--warmup-fraction", type=float)
    g.add_argument("--target-accept", type=float)
    g.add_argument("--max-depth", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="barma", description="Bayesian βARMA(p,q) inference for series on (0,1)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    fit = sub.add_parser("fit", help="sample the posterior")
    fit.add_argument("input", type=Path, nargs="?")
    fit.add_argument("--level", type=float, help="credible level")
    fit.add_argument("--thresholds", type=_floats, help="unit-root thresholds, e.g. 1.01,1.03,1.05")

    fc = sub.add_parser("forecast", help="posterior predictive forecasts")
    fc.add_argument("input", type=Path, nargs="?")
    fc.add_argument("--horizon", type=int)
    fc.add_argument("--holdout", type=int, help="trailing observations held out as actuals")
    fc.add_argument("--max-draws", type=int)
    fc.add_argument("--level", type=float)
    fc.add_argument("--from-fit", type=Path, help="reuse draws from a previous fit directory")

    sim = sub.add_parser("simulate", help="simulate a βARMA series")
    sim.add_argument("--preset", choices=["application"])
    sim.add_argument("--n", type=int, default=500)
    sim.add_argument("--nu", type=float, default=50.0)
    sim.add_argument("--alpha", type=float, default=0.0)
    sim.add_argument("--phi", type=_floats, default=[])
    sim.add_argument("--theta", type=_floats, default=[])
    sim.add_argument("--burn-in", type=int)

    sel = sub.add_parser("select", help="order selection by Bayes factors")
    sel.add_argument("input", type=Path, nargs="?")
    sel.add_argument("--grid", type=_grid, help='orders, e.g. "0,1;1,0;1,1"')
    sel.add_argument("--rungs", type=int)
    sel.add_argument("--draws-per-rung", type=int)
    sel.add_argument("--warmup-per-rung", type=int)

    ur = sub.add_parser("unitroot", help="quasi-unit-root probabilities")
    ur.add_argument("input", type=Path, nargs="?")
    ur.add_argument("--thresholds", type=_floats)
    ur.add_argument("--from-fit", type=Path)

    mc = sub.add_parser("mc-study", help="Monte Carlo study")
    mc.add_argument("--preset", dest="study_preset", choices=["point", "unitroot", "sensitivity"])
    mc.add_argument("--replicates", type=int)
    mc.add_argument("--full-replicates", action="store_const", const=True, default=None)
    mc.add_argument("--cell", dest="cells", action="append", help="restrict to this cell label (repeatable)")
    mc.add_argument("--burn-in", type=int)
    mc.add_argument("--level", type=float)
    mc.add_argument("--thresholds", type=_floats)

    for sp in (fit, fc, sim, sel, ur, mc):
        _common(sp)
        _model(sp)

    rp = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    rp.add_argument("manifest", type=Path, help="manifest.json or the directory holding it")
    rp.add_argument("--out", type=Path, help="output directory (default: the manifest's directory)")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    out: Dict[str, Dict[str, Any]] = {}
    for dest, section, key in _OVERRIDES:
        value = getattr(args, dest, None)
        if value is not None:
            out.setdefault(section, {})[key] = value
    priors = out.setdefault("priors", {})
    if (args.nu_mean is None) != (args.nu_var is None):
        raise ConfigError("--nu-mean and --nu-var must be given together")
    if args.nu_mean is not None:
        priors["nu_shape"], priors["nu_rate"] = gamma_prior_from_mean_var(args.nu_mean, args.nu_var)
    if args.sigma2 is not None:
        for key in ("sigma2_alpha", "sigma2_beta", "sigma2_phi", "sigma2_theta"):
            priors[key] = args.sigma2
    return out


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.out is None:
        raise ConfigError("--out DIR is required")
    config = load_config(args.config)
    apply_dict(config, _overrides(args))
    config.validate()
    simulation: Dict[str, Any] = {}
    if args.command == "simulate":
        simulation = {
            "preset": args.preset,
            "n": args.n,
            "nu": args.nu,
            "alpha": args.alpha,
            "phi": list(args.phi),
            "theta": list(args.theta),
        }
    return RunConfig(
        command=args.command,
        output=args.out,
        config=config,
        input=getattr(args, "input", None),
        from_fit=getattr(args, "from_fit", None),
        simulation=simulation,
    )


def run_config_from_manifest(manifest: RunManifest, output: Path) -> RunConfig:
    arguments = manifest.arguments
    config = config_from_dict(manifest.config).validate()
    return RunConfig(
        command=manifest.command,
        output=output,
        config=config,
        input=Path(arguments["input"]) if arguments.get("input") else None,
        from_fit=Path(arguments["from_fit"]) if arguments.get("from_fit") else None,
        simulation=dict(arguments.get("simulation") or {}),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

class _PartialFailure(Exception):
    """Outputs were written but the command still failed."""

    def __init__(self, written: List[str], error: BarmaError) -> None:
        super().__init__(str(error))
        self.written = written
        self.error = error


def _require_input(run: RunConfig) -> Path:
    if run.input is None:
        raise ConfigError(f"{run.command} needs an input CSV file")
    return run.input


def _draws_meta(engine: BarmaEngine, order: ModelOrder) -> Dict[str, Any]:
    return {"p": order.p, "q": order.q, "r": order.r, "link": engine.link.name}


def _load_fit(run: RunConfig) -> FitResult:
    """Draws saved by an earlier ``fit``; the model section follows the saved order."""
    chains, meta = load_draws(Path(run.from_fit) / DRAWS_FILE)
    try:
        p, q, r = int(meta["p"]), int(meta["q"]), int(meta.get("r", 0))
    except (KeyError, TypeError, ValueError):
        raise DataFileError(f"{run.from_fit} draws carry no model order") from None
    run.config.model.p, run.config.model.q = p, q
    run.config.model.link = meta.get("link", run.config.model.link)
    engine = BarmaEngine(run.config)
    return engine.summarize(chains, ModelOrder(p, q, r))


def _write_fit(engine: BarmaEngine, fit: FitResult, out: Path) -> List[str]:
    analysis = engine.config.analysis
    written = ["draws.csv", "summary.csv", "density.csv", "trace.csv", DRAWS_FILE]
    write_frame(draws_frame(fit.chains), out / "draws.csv")
    write_frame(fit.summary.to_frame(), out / "summary.csv")
    write_frame(density_grid(fit.chains, analysis.density_points), out / "density.csv")
    write_frame(thin_trace(fit.chains, analysis.trace_thin), out / "trace.csv")
    save_draws(fit.chains, out / DRAWS_FILE, _draws_meta(engine, fit.order))
    if fit.roots is not None:
        written += _write_roots(fit, out)
    return written


def _write_roots(fit: FitResult, out: Path) -> List[str]:
    report = fit.roots
    write_frame(report.to_frame(), out / "unitroot.csv")
    moduli = pd.DataFrame({"draw": np.arange(1, report.moduli.size + 1), "ar_min_modulus": report.moduli})
    if report.ma_moduli is not None:
        moduli["ma_min_modulus"] = report.ma_moduli
    write_frame(moduli, out / "moduli.csv")
    return ["unitroot.csv", "moduli.csv"]


def _cmd_fit(run: RunConfig, engine: BarmaEngine) -> List[str]:
    series, covariates = load_series(_require_input(run))
    fit = engine.fit(series, covariates)
    return _write_fit(engine, fit, run.output)


def _cmd_forecast(run: RunConfig, engine: BarmaEngine) -> List[str]:
    series, covariates = load_series(_require_input(run))
    reused = _load_fit(run) if run.from_fit else None
    if reused is not None:
        engine = BarmaEngine(run.config)
    result, fit = engine.forecast(series, covariates, fit=reused)
    written = ["forecast.csv"]
    write_frame(result.to_frame(), run.output / "forecast.csv")
    if reused is None:
        written += _write_fit(engine, fit, run.output)
    return written


def _cmd_simulate(run: RunConfig, engine: BarmaEngine) -> List[str]:
    spec = run.simulation
    if spec.get("preset") == "application":
        sim = engine.simulate(None, 0)
        logger.info("Application fixture: last %d values are the forecast holdout", APPLICATION_HOLDOUT)
    else:
        params = ParameterVector(
            nu=spec.get("nu", 50.0),
            alpha=spec.get("alpha", 0.0),
            phi=tuple(spec.get("phi") or ()),
            theta=tuple(spec.get("theta") or ()),
        )
        sim = engine.simulate(params, int(spec.get("n", 500)))
    write_series(sim.series, run.output / "series.csv", sim.covariates)
    means = pd.DataFrame({"t": np.arange(1, len(sim.series) + 1), "mu": sim.mu})
    write_frame(means, run.output / "means.csv")
    return ["series.csv", "means.csv"]


def _cmd_select(run: RunConfig, engine: BarmaEngine) -> List[str]:
    series, covariates = load_series(_require_input(run))
    report = engine.select(series, covariates)
    write_frame(report.to_frame(), run.output / "selection.csv")
    write_frame(report.bayes_factors(), run.output / "bayes_factors.csv")
    ladders = [
        r.estimate.to_frame().assign(model=r.label)
        for r in report.results
        if r.estimate is not None
    ]
    ladder = pd.concat(ladders, ignore_index=True) if ladders else pd.DataFrame()
    write_frame(ladder, run.output / "ladder.csv")
    return ["selection.csv", "bayes_factors.csv", "ladder.csv"]


def _cmd_unitroot(run: RunConfig, engine: BarmaEngine) -> List[str]:
    if run.from_fit:
        fit = _load_fit(run)
    else:
        series, covariates = load_series(_require_input(run))
        fit = engine.fit(series, covariates)
    if fit.order.p == 0:
        raise ConfigError("unit-root analysis needs an AR part (p >= 1)")
    return _write_roots(fit, run.output)


def _cmd_study(run: RunConfig, engine: BarmaEngine) -> List[str]:
    report = engine.study()
    written = ["replicates.csv", "study_summary.csv"]
    write_frame(report.replicates, run.output / "replicates.csv")
    write_frame(report.summary, run.output / "study_summary.csv")
    if not report.roots.empty:
        write_frame(report.roots, run.output / "study_roots.csv")
        written.append("study_roots.csv")
    if report.failed_cells:
        raise _PartialFailure(
            written,
            EstimationError(f"study cell(s) below the success threshold: {', '.join(report.failed_cells)}"),
        )
    return written


_HANDLERS: Dict[str, Callable[[RunConfig, BarmaEngine], List[str]]] = {
    "fit": _cmd_fit,
    "forecast": _cmd_forecast,
    "simulate": _cmd_simulate,
    "select": _cmd_select,
    "unitroot": _cmd_unitroot,
    "mc-study": _cmd_study,
}


def run_command(run: RunConfig) -> int:
    """Execute one command, write its outputs and manifest; returns the exit status."""
    if run.command not in _HANDLERS:
        raise ConfigError(f"unknown command {run.command!r}; expected one of {', '.join(COMMANDS)}")
    engine = BarmaEngine(run.config)
    run.output.mkdir(parents=True, exist_ok=True)
    logger.info("barma %s v%s, seed %d, %d thread(s)",
                run.command, run.config.version, run.config.sampler.seed, engine.threads)
    failure: Optional[BarmaError] = None
    try:
        written = _HANDLERS[run.command](run, engine)
    except _PartialFailure as partial:
        written, failure = partial.written, partial.error
    manifest = RunManifest(
        version=run.config.version,
        command=run.command,
        seed=run.config.sampler.seed,
        arguments=run.arguments(),
        config=run.config.to_dict(),
        outputs=written,
    )
    write_manifest(manifest, run.output)
    logger.info("Wrote %d output file(s) to %s", len(written) + 1, run.output)
    if failure is not None:
        raise failure
    return EXIT_OK


def _configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT, stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "replay":
            default_out = args.manifest if args.manifest.is_dir() else args.manifest.parent
            run = run_config_from_manifest(read_manifest(args.manifest), args.out or default_out)
        else:
            run = run_config_from_args(args)
        _configure_logging(run.config.runtime.log_level)
        return run_command(run)
    except BarmaError as exc:
        print(f"barma: error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        logger.debug("unexpected failure", exc_info=True)
        print(f"barma: error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
