"""Command-line front end.

Usage::

    procleak SUBCOMMAND [--config FILE] [--out DIR] [--seed N] [--threads N] [options]

Values come from built-in defaults, then the config file section named after
the subcommand, then command-line flags (highest precedence). Every run
writes ``manifest.ini`` to the output directory; passing it back through
``--config`` repeats the run exactly.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import (
    BoundaryUndefined,
    DegenerateShape,
    EmptySample,
    InvalidSpec,
    InvalidSplit,
    NoData,
    ShapeMismatch,
)

log = logging.getLogger("procleak")

OUT_ENV = "PROCLEAK_OUT"
EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
SUBCOMMANDS = ("simulate", "gpa", "align", "loo", "contamination", "grid", "sensitivity", "spatial", "pca-null")


class UsageError(Exception):
    pass


# -- parameter registry --------------------------------------------------------


def _bool(text: str | bool) -> bool:
    if isinstance(text, bool):
        return text
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _pair(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {text!r}")
    return vals


def _show(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(_show(v) for v in value)
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


@dataclass(frozen=True)
class Param:
    name: str
    parse: Callable[[str], Any]
    default: Any
    help: str
    source: str = "artifact default"

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


PAPER = "paper"

SIM_PARAMS = [
    Param("sigma", float, math.sqrt(0.5), "landmark noise SD", f"{PAPER}: noise variance 0.5"),
    Param("shear_range", _pair, (-0.75, 0.75), "shear interval lo,hi", f"{PAPER}: [-0.75, 0.75]"),
    Param("shear_noise_sd", float, 0.05, "SD of noise added to the shear sequence"),
    Param("rho", float, 4.0, "size exponent", f"{PAPER}: rho = 4"),
    Param("size_noise_sd", float, 0.1, "SD of the additive size noise"),
    Param("z_range", _pair, (1.0, 2.0), "size-ordering variable interval lo,hi"),
]

_N, _P, _K = "specimens per sample", "landmarks", "spatial dimension (2 or 3)"

PARAMS: dict[str, list[Param]] = {
    "simulate": [Param("n", int, 100, _N), Param("p", int, 32, _P), Param("k", int, 2, _K), *SIM_PARAMS],
    "gpa": [
        Param("input", str, "", "landmark file to superimpose"),
        Param("robust", _bool, False, "center with the median and use a median reference"),
        Param("scale", _bool, True, "scale configurations to unit centroid size"),
        Param("tol", float, 1e-10, "stop when the objective changes by less than this"),
        Param("max_iter", int, 200, "maximum rotation sweeps"),
    ],
    "align": [
        Param("input", str, "", "landmark file to split and align"),
        Param("train_frac", float, 0.7, "training fraction", f"{PAPER}: 70:30 split"),
        Param("robust", _bool, False, "center with the median and use a median reference"),
        Param("scale", _bool, True, "scale configurations to unit centroid size"),
    ],
    "loo": [
        Param("sizes", _ints, (10, 20, 50, 100, 200), "sample sizes"),
        Param("p", int, 32, _P), Param("k", int, 2, _K),
        Param("replicates", int, 100, "replicates per sample size"),
        Param("boot_reps", int, 1000, "bootstrap resamples", f"{PAPER}: x1000"),
        *SIM_PARAMS,
    ],
    "contamination": [
        Param("n", int, 20, _N), Param("p", int, 4, _P), Param("k", int, 2, _K),
        Param("replicates", int, 200, "replicates"),
        Param("boot_reps", int, 1000, "bootstrap resamples", f"{PAPER}: x1000"),
        Param("train_frac", float, 0.7, "training fraction", f"{PAPER}: 70:30 split"),
        *SIM_PARAMS,
    ],
    "grid": [
        Param("n_values", _ints, tuple(range(20, 201, 20)), "sample sizes"),
        Param("p_values", _ints, tuple(range(4, 65, 4)), "landmark counts"),
        Param("k", int, 2, _K),
        Param("replicates", int, 20, "replicates per cell"),
        Param("threshold_quantile", float, 0.9, "within-grid quantile separating stable from unstable cells"),
        *SIM_PARAMS,
    ],
    "sensitivity": [
        Param("n_values", _ints, tuple(range(20, 201, 20)), "sample sizes"),
        Param("p_values", _ints, tuple(range(4, 65, 4)), "landmark counts"),
        Param("k", int, 2, _K),
        Param("replicates", int, 20, "replicates per cell"),
        Param("threshold_quantile", float, 0.9, "within-grid quantile separating stable from unstable cells"),
        Param("presets", str, "shear_low,shear_high,rho_2,rho_5,sigma_0.05,sigma_1", "presets to run", f"{PAPER}: six one-factor departures"),
    ],
    "spatial": [
        Param("n", int, 100, _N), Param("p", int, 32, _P), Param("k", int, 2, _K),
        Param("replicates", int, 300, "paired replicates", f"{PAPER}: 300 simulations"),
        Param("epochs", int, 100, "training epochs", f"{PAPER}: 100 epochs"),
        Param("batch_size", int, 63, "mini-batch size", f"{PAPER}: batch size 63"),
        Param("learning_rate", float, 1e-3, "Adam learning rate"),
        Param("channels", int, 4, "convolution output channels"),
        Param("kernel_span", int, 0, "kernel length in landmarks (0 = all landmarks)"),
        Param("boot_reps", int, 1000, "bootstrap resamples", f"{PAPER}: x1000"),
        *SIM_PARAMS,
    ],
    "pca-null": [
        Param("p_values", _ints, (60,), _P),
        Param("k_values", _ints, (2, 3), "dimensions"),
        Param("n_multiplier", int, 100, "sample size as a multiple of the tangent dimension"),
        Param("alpha_values", _floats, (1.0,), "components retained per landmark"),
        Param("null_sigma", float, 0.01, "isotropic landmark noise SD"),
    ],
}

COMMON = [
    Param("seed", int, 0, "master seed"),
    Param("threads", int, 1, "worker threads"),
    Param("out", str, "", f"output directory (default ${OUT_ENV} or ./results)"),
]


@dataclass
class RunConfig:
    subcommand: str
    config_path: Path | None
    output_dir: Path
    master_seed: int
    threads: int
    params: dict[str, Any] = field(default_factory=dict)


# -- parsing -----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="procleak", description="Procrustes superimposition and train/test leakage simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run {name}", formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", default=None, help="config file with a [%s] section" % name)
        for prm in COMMON + PARAMS[name]:
            help_text = f"{prm.help} (default: {_show(prm.default) or 'none'}; source: {prm.source})"
            if prm.parse is _bool:
                sp.add_argument(prm.flag, dest=prm.name, default=None, action=argparse.BooleanOptionalAction, help=help_text)
            else:
                sp.add_argument(prm.flag, dest=prm.name, default=None, help=help_text)
    return parser


def _convert(prm: Param, raw: Any, where: str) -> Any:
    try:
        return prm.parse(raw) if isinstance(raw, str) else raw
    except ValueError as exc:
        raise UsageError(f"{where}: bad value for {prm.name!r}: {exc}") from None


def _read_config(path: Path, subcommand: str) -> dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for section in cp.sections():
        if section == "manifest":
            continue
        if section not in PARAMS:
            raise UsageError(f"config {path}: unknown section [{section}]")
        known = {p.name for p in COMMON + PARAMS[section]}
        for key in cp[section]:
            if key not in known:
                raise UsageError(f"config {path}: unknown key {key!r} in [{section}]")
    return dict(cp[subcommand]) if cp.has_section(subcommand) else {}


def parse_cli(argv: list[str] | None = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.subcommand is None:
        raise UsageError("missing subcommand; choose one of: " + ", ".join(SUBCOMMANDS))
    name = args.subcommand
    config_path = Path(args.config) if args.config else None
    from_file = _read_config(config_path, name) if config_path else {}

    values: dict[str, Any] = {}
    for prm in COMMON + PARAMS[name]:
        value = prm.default
        if prm.name in from_file:
            value = _convert(prm, from_file[prm.name], str(config_path))
        flag_value = getattr(args, prm.name)
        if flag_value is not None:
            value = _convert(prm, flag_value, prm.flag)
        values[prm.name] = value

    out = values.pop("out") or os.environ.get(OUT_ENV) or "results"
    seed = values.pop("seed")
    threads = values.pop("threads")
    if threads < 1:
        raise UsageError("--threads must be at least 1")
    if name in ("gpa", "align") and not values["input"]:
        raise UsageError(f"{name}: --input is required")
    return RunConfig(name, config_path, Path(out), seed, threads, values)


# -- manifest ----------------------------------------------------------------


def manifest_text(cfg: RunConfig) -> str:
    lines = [
        "[manifest]",
        f"version = {__version__}",
        f"subcommand = {cfg.subcommand}",
        "",
        f"[{cfg.subcommand}]",
        f"seed = {cfg.master_seed}",
        f"threads = {cfg.threads}",
    ]
    lines += [f"{k} = {_show(v)}" for k, v in cfg.params.items()]
    return "\n".join(lines) + "\n"


def write_manifest(cfg: RunConfig) -> Path:
    path = cfg.output_dir / "manifest.ini"
    path.write_text(manifest_text(cfg), encoding="utf-8")
    return path


# -- dispatch ----------------------------------------------------------------


def _sim_config(params: dict[str, Any], n: int, p: int, k: int, seed: int):
    from .simulator import SimConfig

    return SimConfig(
        n=n, p=p, k=k, sigma=params["sigma"], shear_range=params["shear_range"],
        shear_noise_sd=params["shear_noise_sd"], rho=params["rho"],
        size_noise_sd=params["size_noise_sd"], z_range=params["z_range"], seed=seed,
    )


def _grid_template(params: dict[str, Any], k: int):
    return _sim_config(params, 2, 3, k, 0)


def execute(cfg: RunConfig, executor=None) -> list[Path]:
    """Run one subcommand and return the files written."""
    from . import experiments as ex
    from .gpa import gpa
    from .render import render_boxplot, render_heatmap
    from .shape_core import read_landmarks, write_landmarks
    from .simulator import sensitivity_presets, simulate
    from .split_align import align_clean, split

    prm = cfg.params
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(records, name="results.csv"):
        path = out / name
        ex.write_records(path, records)
        written.append(path)

    name = cfg.subcommand
    if name == "simulate":
        sample = simulate(_sim_config(prm, prm["n"], prm["p"], prm["k"], cfg.master_seed))
        sample.write(out / "landmarks.txt", out / "truth.csv")
        written += [out / "landmarks.txt", out / "truth.csv"]
    elif name == "gpa":
        ids, configs = read_landmarks(prm["input"])
        res = gpa(configs, robust=prm["robust"], scale=prm["scale"], tol=prm["tol"], max_iter=prm["max_iter"])
        res.save(out, ids)
        written += [out / "aligned.txt", out / "reference.txt", out / "objective_history.csv"]
        if not res.converged:
            log.warning("GPA stopped after %d sweeps without meeting tol", res.iterations)
    elif name == "align":
        ids, configs = read_landmarks(prm["input"])
        idx = split(len(configs), prm["train_frac"], cfg.master_seed)
        res = align_clean(
            [configs[i] for i in idx.train_ids], [configs[i] for i in idx.test_ids],
            robust=prm["robust"], scale=prm["scale"],
        )
        from .shape_core import LandmarkConfig

        write_landmarks(out / "train_aligned.txt", [LandmarkConfig(x) for x in res.train], [ids[i] for i in idx.train_ids])
        write_landmarks(out / "test_aligned.txt", [LandmarkConfig(x) for x in res.test], [ids[i] for i in idx.test_ids])
        write_landmarks(out / "reference.txt", [LandmarkConfig(res.reference)], ["reference"])
        written += [out / "train_aligned.txt", out / "test_aligned.txt", out / "reference.txt"]
    elif name == "loo":
        recs = ex.run_loo_instability(
            _sim_config(prm, max(prm["sizes"]), prm["p"], prm["k"], 0), prm["sizes"],
            prm["replicates"], prm["boot_reps"], cfg.master_seed, executor,
        )
        emit(recs)
        render_boxplot(recs, "n", out / "loo_displacement.svg", metric="displacement", title="Leave-one-out displacement by n")
        written.append(out / "loo_displacement.svg")
    elif name == "contamination":
        recs = ex.run_contamination(
            _sim_config(prm, prm["n"], prm["p"], prm["k"], 0), prm["replicates"], cfg.master_seed,
            prm["boot_reps"], prm["train_frac"], executor=executor,
        )
        emit(recs)
        render_boxplot(recs, "metric", out / "rmse_boxplot.svg", title="Test RMSE by pipeline")
        written.append(out / "rmse_boxplot.svg")
    elif name == "grid":
        recs = ex.run_grid(
            prm["n_values"], prm["p_values"], prm["k"], _grid_template(prm, prm["k"]), prm["replicates"],
            cfg.master_seed, executor=executor,
        )
        fit = None
        try:
            fit = ex.fit_boundary(recs, prm["threshold_quantile"])
            recs = ex.sort_records(recs + ex.boundary_records(fit, prm["k"], "default", cfg.master_seed))
        except BoundaryUndefined as exc:
            log.warning("no boundary fitted: %s", exc)
        emit(recs)
        for metric in ("rmse_clean", "delta_rmse"):
            path = out / f"heatmap_{metric}.svg"
            render_heatmap(recs, metric, path, fit if metric == "rmse_clean" else None)
            written.append(path)
    elif name == "sensitivity":
        wanted = [s for s in prm["presets"].split(",") if s]
        presets = sensitivity_presets(2, 3, prm["k"])
        unknown = [w for w in wanted if w not in presets]
        if unknown:
            raise UsageError(f"unknown presets: {', '.join(unknown)}")
        recs, fits = ex.run_sensitivity(
            prm["k"], {w: presets[w] for w in wanted}, prm["n_values"], prm["p_values"], prm["replicates"],
            cfg.master_seed, prm["threshold_quantile"], executor,
        )
        emit(recs)
        for label, fit in fits.items():
            path = out / f"heatmap_{label}.svg"
            render_heatmap(ex.select(recs, condition=label), "rmse_clean", path, fit, title=f"rmse_clean ({label})")
            written.append(path)
    elif name == "spatial":
        from .grad_models import ConvSpec, TrainSpec

        spec = TrainSpec(epochs=prm["epochs"], batch_size=prm["batch_size"], learning_rate=prm["learning_rate"])
        conv = ConvSpec(channels=prm["channels"], kernel_span=prm["kernel_span"] or None)
        recs = ex.run_spatial(
            _sim_config(prm, prm["n"], prm["p"], prm["k"], 0), prm["replicates"], spec, conv, cfg.master_seed,
            prm["boot_reps"], executor=executor,
        )
        emit(recs)
        render_boxplot(recs, "metric", out / "spatial_boxplot.svg", title="Test RMSE: linear vs convolutional")
        written.append(out / "spatial_boxplot.svg")
    elif name == "pca-null":
        recs = ex.run_pca_null(
            prm["p_values"], prm["k_values"], prm["n_multiplier"], prm["alpha_values"], cfg.master_seed,
            prm["null_sigma"], executor,
        )
        emit(recs)
    written.append(write_manifest(cfg))
    return written


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = parse_cli(argv)
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                written = execute(cfg, pool)
        else:
            written = execute(cfg)
    except (UsageError, InvalidSpec) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ShapeMismatch, DegenerateShape, EmptySample, InvalidSplit, NoData) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, FloatingPointError, BoundaryUndefined) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in written:
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
