"""Train/test partitioning and the two alignment workflows.

``align_clean`` superimposes the training set alone and then fits each test
specimen onto the frozen training reference. ``align_contaminated`` runs one
GPA over every specimen and partitions afterwards, so test specimens shape
the training coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptySample, InvalidSplit, ShapeMismatch
from .gpa import DEFAULT_MAX_ITER, DEFAULT_TOL, gpa, prepare, validate_sample
from .shape_core import LandmarkConfig, rotation_matrices, stack

DEFAULT_TRAIN_FRACTION = 0.7


@dataclass(frozen=True)
class SplitIndices:
    train_ids: tuple[int, ...]
    test_ids: tuple[int, ...]
    seed: int | None

    @property
    def n(self) -> int:
        return len(self.train_ids) + len(self.test_ids)


@dataclass(frozen=True)
class SplitAlignment:
    """Aligned training and test coordinates plus the reference they share."""

    train: np.ndarray
    test: np.ndarray
    reference: np.ndarray

    def __iter__(self):
        return iter((self.train, self.test, self.reference))


def split(n: int, train_fraction: float = DEFAULT_TRAIN_FRACTION, seed=None) -> SplitIndices:
    """Uniformly random partition with ``round(train_fraction * n)`` training specimens."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidSplit(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(round(train_fraction * n))
    if n < 4 or n_train < 1 or n_train > n - 1:
        raise InvalidSplit(f"cannot split {n} specimens with fraction {train_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    train = tuple(sorted(int(i) for i in perm[:n_train]))
    test = tuple(sorted(int(i) for i in perm[n_train:]))
    return SplitIndices(train, test, seed if seed is None or isinstance(seed, int) else None)


def align_to_reference(
    configs: Sequence[LandmarkConfig] | np.ndarray,
    reference: np.ndarray,
    robust: bool = False,
    scale: bool = True,
) -> np.ndarray:
    """Single ordinary Procrustes fit of each configuration onto a fixed reference.

    Each configuration is centered with its own mean (or median), scaled by its
    own centroid size when ``scale`` is set, then rotated onto ``reference``.
    The reference is never updated.
    """
    x = stack(configs)
    if x.shape[0] == 0:
        return np.empty((0,) + np.shape(reference))
    if x.shape[1:] != np.shape(reference):
        raise ShapeMismatch(f"test configurations {x.shape[1:]} do not match reference {np.shape(reference)}")
    validate_sample(x)
    x = prepare(x, robust, scale)
    x = x @ rotation_matrices(x, np.asarray(reference))
    if robust:
        x = x - np.median(x, axis=1, keepdims=True)
    return x


def align_clean(
    train: Sequence[LandmarkConfig] | np.ndarray,
    test: Sequence[LandmarkConfig] | np.ndarray,
    robust: bool = False,
    scale: bool = True,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SplitAlignment:
    """Leakage-free alignment: GPA on ``train`` only, test fitted onto its reference."""
    xtr = stack(train)
    if xtr.shape[0] == 0:
        raise EmptySample("training set is empty")
    fit = gpa(xtr, robust=robust, scale=scale, tol=tol, max_iter=max_iter)
    xte = stack(test)
    if xte.shape[0] and xte.shape[1:] != xtr.shape[1:]:
        raise ShapeMismatch(f"test configurations {xte.shape[1:]} do not match training {xtr.shape[1:]}")
    aligned_test = align_to_reference(xte, fit.reference_coords, robust=robust, scale=scale)
    return SplitAlignment(fit.aligned_coords, aligned_test, fit.reference_coords)


def align_contaminated(
    sample: Sequence[LandmarkConfig] | np.ndarray,
    idx: SplitIndices,
    robust: bool = False,
    scale: bool = True,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SplitAlignment:
    """Conventional workflow: GPA over the whole sample, then partition by ``idx``."""
    x = stack(sample)
    if idx.n != x.shape[0]:
        raise InvalidSplit(f"split covers {idx.n} specimens but sample has {x.shape[0]}")
    fit = gpa(x, robust=robust, scale=scale, tol=tol, max_iter=max_iter)
    aligned = fit.aligned_coords
    return SplitAlignment(
        aligned[list(idx.train_ids)],
        aligned[list(idx.test_ids)],
        fit.reference_coords,
    )
