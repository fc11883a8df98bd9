"""Iterative Generalized Procrustes Analysis over a whole sample."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateShape, EmptySample, ShapeMismatch
from .shape_core import LandmarkConfig, rotation_matrices, stack, write_landmarks

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


@dataclass(frozen=True)
class AlignmentResult:
    """Output of :func:`gpa`.

    Attributes:
        aligned_coords: Aligned configurations, shape (n, p, k).
        reference_coords: Mean (or coordinate-wise median) of the aligned configurations.
        objective_history: Objective value after every rotation sweep.
        iterations: Number of sweeps performed.
        converged: True if the tolerance stop fired before ``max_iter``.
    """

    aligned_coords: np.ndarray = field(repr=False)
    reference_coords: np.ndarray = field(repr=False)
    objective_history: tuple[float, ...]
    iterations: int
    converged: bool
    scaled: bool
    robust: bool

    @property
    def aligned(self) -> list[LandmarkConfig]:
        return [LandmarkConfig(x) for x in self.aligned_coords]

    @property
    def reference(self) -> LandmarkConfig:
        return LandmarkConfig(self.reference_coords)

    @property
    def objective(self) -> float:
        return self.objective_history[-1]

    def save(self, directory: str | Path, ids: Sequence[object] | None = None) -> None:
        """Write ``aligned.txt``, ``reference.txt`` and ``objective_history.csv``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        write_landmarks(out / "aligned.txt", self.aligned, ids)
        write_landmarks(out / "reference.txt", [self.reference], ["reference"])
        with open(out / "objective_history.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iter", "q"])
            for i, q in enumerate(self.objective_history, start=1):
                writer.writerow([i, format(q, ".17g")])


def objective_q(configs: Sequence[LandmarkConfig] | np.ndarray) -> float:
    """Pairwise objective ``(1/n) sum_i sum_j ||X_i - X_j||_F^2`` over ordered pairs.

    Evaluates the configurations as given; nothing is optimised here.
    """
    x = stack(configs)
    n = x.shape[0]
    if n == 0:
        raise EmptySample("objective of an empty sample")
    flat = x.reshape(n, -1)
    gram = flat @ flat.T
    sq = np.diag(gram)
    total = (sq[:, None] + sq[None, :] - 2.0 * gram).clip(min=0.0).sum()
    return float(total / n)


def _q_from_mean(x: np.ndarray) -> float:
    # sum_i sum_j ||Xi - Xj||^2 = 2n sum_i ||Xi - mean||^2
    dev = x - x.mean(axis=0)
    return float(2.0 * np.einsum("npk,npk->", dev, dev))


def _central(x: np.ndarray, robust: bool) -> np.ndarray:
    return np.median(x, axis=0) if robust else x.mean(axis=0)


def prepare(x: np.ndarray, robust: bool, scale: bool) -> np.ndarray:
    """Center each configuration and optionally scale it to unit centroid size."""
    loc = np.median(x, axis=1, keepdims=True) if robust else x.mean(axis=1, keepdims=True)
    out = x - loc
    if scale:
        sizes = np.linalg.norm((x - x.mean(axis=1, keepdims=True)).reshape(x.shape[0], -1), axis=1)
        out = out / sizes[:, None, None]
    return out


def validate_sample(x: np.ndarray) -> None:
    if x.ndim != 3 or x.shape[0] == 0:
        raise EmptySample("sample contains no configurations")
    _, p, k = x.shape
    if p < 3 or k not in (2, 3):
        raise ShapeMismatch(f"configurations must be p x k with p >= 3 and k in (2, 3), got {p} x {k}")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite coordinates")
    sizes = np.linalg.norm((x - x.mean(axis=1, keepdims=True)).reshape(x.shape[0], -1), axis=1)
    bad = np.flatnonzero(sizes <= 1e-300)
    if bad.size:
        raise DegenerateShape(f"specimen {int(bad[0])} has zero centroid size")


def gpa(
    sample: Sequence[LandmarkConfig] | np.ndarray,
    robust: bool = False,
    scale: bool = True,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> AlignmentResult:
    """Superimpose a sample by iterative rotation onto a moving reference.

    Each configuration is centered (mean, or median when ``robust``) and, when
    ``scale`` is set, brought to unit centroid size. The reference starts as
    the first specimen; every sweep rotates all specimens onto it and then
    recomputes it as the mean (or coordinate-wise median). Sweeps stop once
    the objective changes by less than ``tol`` or after ``max_iter`` sweeps.
    """
    x = stack(sample)
    if x.shape[0] < 2:
        raise EmptySample(f"GPA needs at least 2 configurations, got {x.shape[0]}")
    validate_sample(x)
    x = prepare(x, robust, scale)

    reference = x[0].copy()
    history: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        x = x @ rotation_matrices(x, reference)
        if robust:
            # coordinate-wise medians do not commute with rotation
            x = x - np.median(x, axis=1, keepdims=True)
        reference = _central(x, robust)
        history.append(_q_from_mean(x))
        if len(history) > 1 and abs(history[-1] - history[-2]) < tol:
            converged = True
            break

    return AlignmentResult(
        aligned_coords=x,
        reference_coords=reference,
        objective_history=tuple(history),
        iterations=iterations,
        converged=converged,
        scaled=scale,
        robust=robust,
    )
