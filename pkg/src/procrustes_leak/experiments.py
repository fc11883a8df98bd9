"""Simulation studies: leave-one-out instability, contamination, grids,
sensitivity presets, linear vs convolutional regression, and the PCA null.

Every study returns a list of :class:`ExperimentRecord`. Each record carries
its full key, so results can be produced in any order (including across a
thread pool) and merged by sorting. Per-replicate seeds are derived from the
master seed and the cell key only, which makes every study a deterministic
function of ``(master seed, config)``.
"""

from __future__ import annotations

import csv
import zlib
from concurrent.futures import Executor
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import BoundaryUndefined
from .gpa import gpa
from .grad_models import ConvSpec, TrainSpec, train_conv, train_linear
from .shape_core import registered_displacement
from .simulator import ShapeSample, SimConfig, simulate
from .split_align import SplitIndices, align_clean, align_contaminated, split
from .stat_models import bootstrap_ci, null_check_from_spectrum, null_spectrum, ols_fit, rmse, tangent_dimension

SUMMARY = -1  # replicate index of aggregate rows

DEFAULT_N_VALUES = tuple(range(20, 201, 20))
DEFAULT_P_VALUES = tuple(range(4, 65, 4))
DEFAULT_GRID_REPLICATES = 20
DEFAULT_THRESHOLD_QUANTILE = 0.9
DEFAULT_BOOT_REPS = 1000


@dataclass(frozen=True, order=True)
class ExperimentRecord:
    experiment: str
    n: int
    p: int
    k: int
    condition: str
    replicate: int
    seed: int
    metric: str
    value: float

    @property
    def key(self) -> tuple:
        return (self.experiment, self.n, self.p, self.k, self.condition, self.replicate, self.metric)


CSV_FIELDS = [f.name for f in fields(ExperimentRecord)]


@dataclass(frozen=True)
class BoundaryFit:
    slope: float
    intercept: float
    threshold: float
    cells_used: int
    points: tuple[tuple[float, float], ...] = ()


# -- seeding and parallel helpers -----------------------------------------


def _tag(value: str) -> int:
    return zlib.crc32(value.encode("utf-8"))


def derive_seed(master: int, *key: int | str) -> int:
    """Stable 32-bit seed for a cell/replicate key, independent of evaluation order."""
    spawn_key = tuple(_tag(k) if isinstance(k, str) else int(k) for k in key)
    return int(np.random.SeedSequence(int(master), spawn_key=spawn_key).generate_state(1)[0])


def _map(fn: Callable, items: Iterable, executor: Executor | None) -> list:
    items = list(items)
    if executor is None:
        return [fn(item) for item in items]
    return list(executor.map(fn, items))


def sort_records(records: Iterable[ExperimentRecord]) -> list[ExperimentRecord]:
    return sorted(records, key=lambda r: r.key)


def write_records(path: str | Path, records: Iterable[ExperimentRecord]) -> None:
    """CSV with header ``experiment,n,p,k,condition,replicate,seed,metric,value``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in sort_records(records):
            row = list(astuple(r))
            row[-1] = format(float(r.value), ".17g")
            w.writerow(row)


def read_records(path: str | Path) -> list[ExperimentRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                ExperimentRecord(
                    row["experiment"], int(row["n"]), int(row["p"]), int(row["k"]), row["condition"],
                    int(row["replicate"]), int(row["seed"]), row["metric"], float(row["value"]),
                )
            )
    return out


def select(records: Iterable[ExperimentRecord], **criteria) -> list[ExperimentRecord]:
    return [r for r in records if all(getattr(r, k) == v for k, v in criteria.items())]


def _summary(experiment: str, cfg: SimConfig, condition: str, metric: str, values, boot_reps: int, seed: int):
    mean, lo, hi = bootstrap_ci(values, 0.95, boot_reps, seed)
    base = dict(experiment=experiment, n=cfg.n, p=cfg.p, k=cfg.k, condition=condition, replicate=SUMMARY, seed=seed)
    return [
        ExperimentRecord(metric=f"{metric}_mean", value=mean, **base),
        ExperimentRecord(metric=f"{metric}_ci_lower", value=lo, **base),
        ExperimentRecord(metric=f"{metric}_ci_upper", value=hi, **base),
    ]


# -- leave-one-out instability --------------------------------------------


def loo_displacement(sample: np.ndarray, drop: int) -> float:
    """Mean displacement of the common specimens between GPA on all and on all-but-``drop``."""
    full = gpa(sample)
    keep = [i for i in range(sample.shape[0]) if i != drop]
    reduced = gpa(sample[keep])
    return float(registered_displacement(full.aligned_coords[keep], reduced.aligned_coords).mean())


def run_loo_instability(
    cfg: SimConfig,
    sizes: Sequence[int],
    replicates: int = 100,
    boot_reps: int = DEFAULT_BOOT_REPS,
    seed: int = 0,
    executor: Executor | None = None,
) -> list[ExperimentRecord]:
    """Sensitivity of aligned coordinates to removing one random specimen.

    For every sample size and replicate, one sample is simulated and
    superimposed twice: with all specimens and with one removed at random.
    The per-replicate value is the mean displacement of the remaining
    specimens between the two superimpositions, after registering the two
    frames with one common rotation.
    """
    if any(n < 3 for n in sizes):
        raise ValueError("every sample size must be at least 3")

    def job(key):
        n, r = key
        s = derive_seed(seed, "loo", n, cfg.p, cfg.k, r)
        sample = simulate(cfg.with_(n=n, seed=s))
        drop = int(np.random.default_rng(derive_seed(seed, "loo-drop", n, cfg.p, cfg.k, r)).integers(n))
        return ExperimentRecord("loo", n, cfg.p, cfg.k, "default", r, s, "displacement", loo_displacement(sample.coords, drop))

    records = _map(job, [(n, r) for n in sizes for r in range(replicates)], executor)
    for n in sizes:
        vals = [rec.value for rec in records if rec.n == n]
        records += _summary("loo", cfg.with_(n=n), "default", "displacement", vals, boot_reps, derive_seed(seed, "loo-boot", n))
    return sort_records(records)


# -- contamination ---------------------------------------------------------


@dataclass(frozen=True)
class ContaminationOutcome:
    rmse_contaminated: float
    rmse_clean: float
    coef_clean: np.ndarray
    coef_contaminated: np.ndarray

    @property
    def delta(self) -> float:
        return self.rmse_contaminated - self.rmse_clean


def contamination_replicate(sample: ShapeSample | np.ndarray, y: np.ndarray, idx: SplitIndices) -> ContaminationOutcome:
    """Fit OLS to aligned training coordinates under both workflows and score the same test specimens."""
    coords = sample.coords if isinstance(sample, ShapeSample) else np.asarray(sample)
    tr, te = list(idx.train_ids), list(idx.test_ids)
    out = []
    for al in (align_contaminated(coords, idx), align_clean(coords[tr], coords[te])):
        fit = ols_fit(al.train.reshape(len(tr), -1), y[tr])
        out.append((rmse(y[te], fit.predict(al.test.reshape(len(te), -1))), fit.coefficients))
    (r_cont, c_cont), (r_clean, c_clean) = out
    return ContaminationOutcome(r_cont, r_clean, c_clean, c_cont)


def _contamination_cell(cfg: SimConfig, replicates: int, seed: int, condition: str, train_fraction: float, executor):
    def job(r):
        s = derive_seed(seed, cfg.n, cfg.p, cfg.k, r)
        sample = simulate(cfg.with_(seed=s))
        idx = split(cfg.n, train_fraction, derive_seed(seed, "split", cfg.n, cfg.p, cfg.k, r))
        res = contamination_replicate(sample, sample.size_factors, idx)
        base = dict(experiment="contamination", n=cfg.n, p=cfg.p, k=cfg.k, condition=condition, replicate=r, seed=s)
        return [
            ExperimentRecord(metric="rmse_contaminated", value=res.rmse_contaminated, **base),
            ExperimentRecord(metric="rmse_clean", value=res.rmse_clean, **base),
            ExperimentRecord(metric="delta_rmse", value=res.delta, **base),
        ]

    return [rec for recs in _map(job, range(replicates), executor) for rec in recs]


def run_contamination(
    cfg: SimConfig,
    replicates: int = 200,
    seed: int = 0,
    boot_reps: int = DEFAULT_BOOT_REPS,
    train_fraction: float = 0.7,
    condition: str = "default",
    executor: Executor | None = None,
) -> list[ExperimentRecord]:
    """Contaminated minus clean test RMSE over ``replicates`` simulated samples.

    Emits per-replicate ``rmse_contaminated``, ``rmse_clean`` and
    ``delta_rmse`` rows plus bootstrap summaries of ``delta_rmse``.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    records = _contamination_cell(cfg, replicates, seed, condition, train_fraction, executor)
    deltas = [r.value for r in records if r.metric == "delta_rmse"]
    records += _summary("contamination", cfg, condition, "delta_rmse", deltas, boot_reps, derive_seed(seed, "boot", cfg.n, cfg.p, cfg.k))
    return sort_records(records)


# -- grids and boundary ------------------------------------------------------


def run_grid(
    n_values: Sequence[int],
    p_values: Sequence[int],
    k: int = 2,
    condition: SimConfig | Mapping | None = None,
    replicates: int = DEFAULT_GRID_REPLICATES,
    seed: int = 0,
    label: str = "default",
    train_fraction: float = 0.7,
    executor: Executor | None = None,
) -> list[ExperimentRecord]:
    """Per-replicate contamination metrics over an ``(n, p)`` grid.

    ``condition`` is a template :class:`SimConfig` (its ``n``, ``p`` and ``k``
    are replaced per cell) or a mapping of overrides to the defaults. Every
    replicate also carries a ``rank_deficient`` flag (1 when
    ``k * p >= train_fraction * n``). Replicate seeds depend only on
    ``(seed, n, p, k, replicate)``, so a one-cell grid reproduces
    :func:`run_contamination` and different conditions share random numbers.
    """
    if not n_values or not p_values:
        raise ValueError("grids must be nonempty")
    if isinstance(condition, SimConfig):
        template = condition
    else:
        template = SimConfig(n=max(n_values), p=max(p_values), k=k, **dict(condition or {}))

    def cell(key):
        n, p = key
        cfg = template.with_(n=n, p=p, k=k)
        recs = _contamination_cell(cfg, replicates, seed, label, train_fraction, None)
        flag = float(k * p >= train_fraction * n)
        recs += [
            ExperimentRecord("contamination", n, p, k, label, r.replicate, r.seed, "rank_deficient", flag)
            for r in recs
            if r.metric == "delta_rmse"
        ]
        return [ExperimentRecord("grid", *astuple(r)[1:]) for r in recs]

    cells = _map(cell, [(n, p) for n in n_values for p in p_values], executor)
    return sort_records(rec for recs in cells for rec in recs)


def cell_means(records: Iterable[ExperimentRecord], metric: str, condition: str | None = None) -> dict[tuple[int, int], float]:
    """Mean of ``metric`` over replicates for every ``(n, p)`` cell."""
    acc: dict[tuple[int, int], list[float]] = {}
    for r in records:
        if r.metric == metric and r.replicate != SUMMARY and (condition is None or r.condition == condition):
            acc.setdefault((r.n, r.p), []).append(r.value)
    return {key: float(np.mean(v)) for key, v in sorted(acc.items())}


def fit_boundary(
    records: Iterable[ExperimentRecord] | Mapping[tuple[int, int], float],
    threshold_quantile: float = DEFAULT_THRESHOLD_QUANTILE,
    metric: str = "rmse_clean",
) -> BoundaryFit:
    """Least-squares line ``p = slope * n + intercept`` through the stability frontier.

    Cells whose mean ``metric`` exceeds the ``threshold_quantile`` quantile of
    all cell means are unstable. In each ``n`` column the first run of
    unstable cells above a stable cell marks the frontier. When the run ends
    inside the grid the frontier point is its centre (the ridge of the
    instability band); when it reaches the top of the grid only its lower edge
    is observed and the frontier is placed midway between the last stable
    cell and the first unstable one. Columns with no unstable cell, or
    unstable from the lowest ``p``, carry no frontier and are skipped.
    """
    means = dict(records) if isinstance(records, Mapping) else cell_means(records, metric)
    if not means:
        raise BoundaryUndefined("no grid cells")
    ns = sorted({n for n, _ in means})
    if len(ns) < 3:
        raise BoundaryUndefined(f"need at least 3 distinct n values, got {len(ns)}")
    values = np.array(list(means.values()))
    threshold = float(np.quantile(values, threshold_quantile))
    unstable_all = values > threshold
    if unstable_all.all() or not unstable_all.any():
        raise BoundaryUndefined("grid has no stable or no unstable cells")

    points = []
    cells_used = 0
    for n in ns:
        ps = sorted(p for nn, p in means if nn == n)
        unstable = [means[(n, p)] > threshold for p in ps]
        if not any(unstable) or unstable[0]:
            continue
        a = unstable.index(True)
        b = a
        while b + 1 < len(ps) and unstable[b + 1]:
            b += 1
        if b == len(ps) - 1:
            frontier = 0.5 * (ps[a - 1] + ps[a])
        else:
            frontier = 0.5 * (ps[a] + ps[b])
        points.append((float(n), float(frontier)))
        cells_used += b - a + 2
    if len(points) < 3 or cells_used < 5:
        raise BoundaryUndefined(f"only {len(points)} columns carry a frontier")
    x, y = np.array(points).T
    slope, intercept = np.polyfit(x, y, 1)
    return BoundaryFit(float(slope), float(intercept), threshold, cells_used, tuple(points))


def boundary_records(fit: BoundaryFit, k: int, condition: str, seed: int, experiment: str = "boundary") -> list[ExperimentRecord]:
    base = dict(experiment=experiment, n=0, p=0, k=k, condition=condition, replicate=SUMMARY, seed=seed)
    return [
        ExperimentRecord(metric="boundary_slope", value=fit.slope, **base),
        ExperimentRecord(metric="boundary_intercept", value=fit.intercept, **base),
        ExperimentRecord(metric="boundary_threshold", value=fit.threshold, **base),
        ExperimentRecord(metric="boundary_cells_used", value=float(fit.cells_used), **base),
    ]


def run_sensitivity(
    k: int,
    presets: Mapping[str, SimConfig],
    n_values: Sequence[int] = DEFAULT_N_VALUES,
    p_values: Sequence[int] = DEFAULT_P_VALUES,
    replicates: int = DEFAULT_GRID_REPLICATES,
    seed: int = 0,
    threshold_quantile: float = DEFAULT_THRESHOLD_QUANTILE,
    executor: Executor | None = None,
) -> tuple[list[ExperimentRecord], dict[str, BoundaryFit]]:
    """One grid and one boundary fit per preset, plus the largest pairwise slope gap."""
    records: list[ExperimentRecord] = []
    fits: dict[str, BoundaryFit] = {}
    for label, cfg in presets.items():
        grid = run_grid(n_values, p_values, k, cfg, replicates, seed, label, executor=executor)
        fit = fit_boundary(grid, threshold_quantile)
        fits[label] = fit
        records += [ExperimentRecord("sensitivity", *astuple(r)[1:]) for r in grid]
        records += boundary_records(fit, k, label, seed, "sensitivity")
    slopes = [f.slope for f in fits.values()]
    gap = max(slopes) - min(slopes)
    records.append(ExperimentRecord("sensitivity", 0, 0, k, "all", SUMMARY, seed, "max_pairwise_slope_diff", gap))
    return sort_records(records), fits


# -- spatial structure -------------------------------------------------------


def run_spatial(
    cfg: SimConfig,
    replicates: int = 300,
    train_spec: TrainSpec = TrainSpec(),
    conv_spec: ConvSpec = ConvSpec(),
    seed: int = 0,
    boot_reps: int = DEFAULT_BOOT_REPS,
    train_fraction: float = 0.7,
    executor: Executor | None = None,
) -> list[ExperimentRecord]:
    """Test RMSE of the vectorized linear model and the convolutional model on
    identical clean-aligned splits, with identical training seeds."""
    if replicates < 1:
        raise ValueError("replicates must be at least 1")

    def job(r):
        s = derive_seed(seed, "spatial", cfg.n, cfg.p, cfg.k, r)
        sample = simulate(cfg.with_(seed=s))
        idx = split(cfg.n, train_fraction, derive_seed(seed, "spatial-split", cfg.n, cfg.p, cfg.k, r))
        tr, te = list(idx.train_ids), list(idx.test_ids)
        al = align_clean(sample.coords[tr], sample.coords[te])
        y = sample.size_factors
        spec = TrainSpec(**{**train_spec.__dict__, "seed": derive_seed(seed, "spatial-train", cfg.n, cfg.p, cfg.k, r)})
        lin = train_linear(al.train.reshape(len(tr), -1), y[tr], spec)
        conv = train_conv(al.train, y[tr], spec, conv_spec)
        x_test = al.test.reshape(len(te), -1)
        base = dict(experiment="spatial", n=cfg.n, p=cfg.p, k=cfg.k, condition="default", replicate=r, seed=s)
        return [
            ExperimentRecord(metric="rmse_linear", value=rmse(y[te], lin.predict(x_test)), **base),
            ExperimentRecord(metric="rmse_conv", value=rmse(y[te], conv.predict(x_test)), **base),
        ]

    records = [rec for recs in _map(job, range(replicates), executor) for rec in recs]
    for metric in ("rmse_linear", "rmse_conv"):
        vals = [r.value for r in records if r.metric == metric]
        records += _summary("spatial", cfg, "default", metric, vals, boot_reps, derive_seed(seed, "spatial-boot", metric))
    return sort_records(records)


# -- PCA null -----------------------------------------------------------------


def run_pca_null(
    p_values: Sequence[int],
    k_values: Sequence[int],
    n_multiplier: int = 100,
    alpha_values: Sequence[float] = (1.0,),
    seed: int = 0,
    sigma: float = 0.01,
    executor: Executor | None = None,
) -> list[ExperimentRecord]:
    """Expected vs observed cumulative variance under isotropy, with eigenvalue counts.

    Sample size per cell is ``n_multiplier * q`` where ``q`` is the tangent dimension.
    """

    def job(key):
        p, k = key
        q = tangent_dimension(p, k)
        n = n_multiplier * q
        s = derive_seed(seed, "pca-null", p, k)
        spec = null_spectrum(p, k, n, s, sigma)
        base = dict(experiment="pca_null", n=n, p=p, k=k, replicate=0, seed=s)
        recs = [
            ExperimentRecord(condition="all", metric="tangent_dimension", value=float(q), **base),
            ExperimentRecord(condition="all", metric="nonzero_eigenvalues", value=float(null_check_from_spectrum(spec, p, k, 1.0).nonzero_eigenvalues), **base),
        ]
        for a in alpha_values:
            chk = null_check_from_spectrum(spec, p, k, a)
            cond = f"alpha={a:g}"
            recs.append(ExperimentRecord(condition=cond, metric="expected_slope", value=chk.expected_slope, **base))
            recs.append(ExperimentRecord(condition=cond, metric="empirical_slope", value=chk.empirical_slope, **base))
        return recs

    out = _map(job, [(p, k) for k in k_values for p in p_values], executor)
    return sort_records(rec for recs in out for rec in recs)
