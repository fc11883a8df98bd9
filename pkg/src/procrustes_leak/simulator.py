"""Synthetic landmark samples with controlled noise, shear and allometry.

Every specimen starts from a regular base shape and goes through three steps
in order: isotropic Gaussian noise on every coordinate, a shear
``x' = x + eps_i * y`` and multiplication by a size factor
``s_i = z_i ** rho + delta_i``. Shear and ``z`` both run as ordered
sequences over the sample, which couples shape to size.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidSpec
from .shape_core import LandmarkConfig, write_landmarks

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulated sample.

    ``sigma`` is the per-coordinate noise SD; ``shear_range`` and ``z_range``
    are the endpoints of the deterministic shear and size-ordering sequences.
    """

    n: int
    p: int
    k: int = 2
    sigma: float = math.sqrt(0.5)
    shear_range: tuple[float, float] = (-0.75, 0.75)
    shear_noise_sd: float = 0.05
    rho: float = 4.0
    size_noise_sd: float = 0.1
    z_range: tuple[float, float] = (1.0, 2.0)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "shear_range", tuple(float(v) for v in self.shear_range))
        object.__setattr__(self, "z_range", tuple(float(v) for v in self.z_range))
        if self.n < 1:
            raise InvalidSpec(f"n must be positive, got {self.n}")
        if self.p < 3:
            raise InvalidSpec(f"p must be at least 3, got {self.p}")
        if self.k not in (2, 3):
            raise InvalidSpec(f"k must be 2 or 3, got {self.k}")
        if self.sigma < 0 or self.shear_noise_sd < 0 or self.size_noise_sd < 0:
            raise InvalidSpec("noise standard deviations must be non-negative")
        if self.rho < 1:
            raise InvalidSpec(f"rho must be >= 1, got {self.rho}")
        lo, hi = self.shear_range
        if lo > hi or not math.isclose(lo, -hi, abs_tol=1e-12):
            raise InvalidSpec(f"shear_range must be symmetric about zero, got {self.shear_range}")
        zlo, zhi = self.z_range
        if not 0 < zlo <= zhi:
            raise InvalidSpec(f"z_range must be positive and ordered, got {self.z_range}")

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shear_range"] = list(self.shear_range)
        d["z_range"] = list(self.z_range)
        return d


@dataclass(frozen=True)
class ShapeSample:
    """Simulated configurations with their per-specimen ground truth."""

    coords: np.ndarray = field(repr=False)
    size_factors: np.ndarray = field(repr=False)
    shear_params: np.ndarray = field(repr=False)
    z_values: np.ndarray = field(repr=False)
    config_used: SimConfig

    @property
    def configs(self) -> list[LandmarkConfig]:
        return [LandmarkConfig(x) for x in self.coords]

    def __len__(self) -> int:
        return self.coords.shape[0]

    def subset(self, idx) -> "ShapeSample":
        idx = list(idx)
        return ShapeSample(
            self.coords[idx], self.size_factors[idx], self.shear_params[idx], self.z_values[idx], self.config_used
        )

    def write(self, landmark_path: str | Path, truth_path: str | Path) -> None:
        """Write the landmark file and the ``id,z,epsilon,s,centroid_size`` CSV."""
        write_landmarks(landmark_path, self.configs)
        centered = self.coords - self.coords.mean(axis=1, keepdims=True)
        sizes = np.linalg.norm(centered.reshape(len(self), -1), axis=1)
        with open(truth_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "z", "epsilon", "s", "centroid_size"])
            for i in range(len(self)):
                w.writerow(
                    [i]
                    + [format(float(v), ".17g") for v in (self.z_values[i], self.shear_params[i], self.size_factors[i], sizes[i])]
                )


def base_shape(p: int, k: int = 2) -> LandmarkConfig:
    """Regular base configuration.

    2-D: ``p`` points at angles ``2*pi*j/p`` on the unit circle starting at (1, 0).
    3-D: ``p`` points of a Fibonacci lattice on the unit sphere.
    """
    if p < 3:
        raise InvalidSpec(f"p must be at least 3, got {p}")
    j = np.arange(p)
    if k == 2:
        theta = 2.0 * np.pi * j / p
        return LandmarkConfig(np.column_stack([np.cos(theta), np.sin(theta)]))
    if k == 3:
        y = 1.0 - 2.0 * (j + 0.5) / p
        r = np.sqrt(1.0 - y * y)
        theta = _GOLDEN_ANGLE * j
        return LandmarkConfig(np.column_stack([r * np.cos(theta), y, r * np.sin(theta)]))
    raise InvalidSpec(f"k must be 2 or 3, got {k}")


def simulate(cfg: SimConfig) -> ShapeSample:
    """Draw one sample. Deterministic in ``cfg``; specimen ``i`` uses its own seed substream."""
    base = base_shape(cfg.p, cfg.k).coords
    eps_line = np.linspace(cfg.shear_range[0], cfg.shear_range[1], cfg.n)
    z = np.linspace(cfg.z_range[0], cfg.z_range[1], cfg.n)
    coords = np.empty((cfg.n, cfg.p, cfg.k))
    sizes = np.empty(cfg.n)
    shears = np.empty(cfg.n)
    for i in range(cfg.n):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(i,)))
        x = base + rng.normal(0.0, cfg.sigma, size=base.shape)
        eps = eps_line[i] + rng.normal(0.0, cfg.shear_noise_sd)
        x[:, 0] = x[:, 0] + eps * x[:, 1]
        s = z[i] ** cfg.rho + rng.normal(0.0, cfg.size_noise_sd)
        while s <= 0:
            s = z[i] ** cfg.rho + rng.normal(0.0, cfg.size_noise_sd)
        coords[i] = s * x
        sizes[i] = s
        shears[i] = eps
    return ShapeSample(coords, sizes, shears, z, cfg)


def default_config(n: int, p: int, k: int = 2, seed: int = 0) -> SimConfig:
    """Baseline: noise variance 0.5, shear in [-0.75, 0.75], size exponent 4."""
    return SimConfig(n=n, p=p, k=k, seed=seed)


def sensitivity_presets(n: int, p: int, k: int = 2, seed: int = 0) -> dict[str, SimConfig]:
    """The six one-factor departures from the baseline, keyed by label."""
    base = default_config(n, p, k, seed)
    return {
        "shear_low": base.with_(shear_range=(-0.1, 0.1)),
        "shear_high": base.with_(shear_range=(-1.4, 1.4)),
        "rho_2": base.with_(rho=2.0),
        "rho_5": base.with_(rho=5.0),
        "sigma_0.05": base.with_(sigma=0.05),
        "sigma_1": base.with_(sigma=1.0),
    }
