"""Geometric primitives on single landmark configurations.

A configuration is a ``p x k`` matrix of ``p`` landmarks in ``k`` dimensions
(``k`` is 2 or 3). Every function here is pure; inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateShape, ShapeMismatch

# Centroid sizes below this are treated as zero.
_SIZE_EPS = 1e-300


@dataclass(frozen=True)
class LandmarkConfig:
    """One specimen: ``p`` landmarks by ``k`` coordinates.

    The coordinate array is copied and marked read-only on construction.
    """

    coords: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.array(self.coords, dtype=float, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"coords must be 2-D (p x k), got shape {arr.shape}")
        p, k = arr.shape
        if p < 3:
            raise ValueError(f"need at least 3 landmarks, got {p}")
        if k not in (2, 3):
            raise ValueError(f"dimension k must be 2 or 3, got {k}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coords contain non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    @property
    def p(self) -> int:
        return self.coords.shape[0]

    @property
    def k(self) -> int:
        return self.coords.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LandmarkConfig):
            return NotImplemented
        return self.coords.shape == other.coords.shape and bool(np.array_equal(self.coords, other.coords))

    def __hash__(self) -> int:
        return hash((self.coords.shape, self.coords.tobytes()))

    def __repr__(self) -> str:
        return f"LandmarkConfig(p={self.p}, k={self.k})"


@dataclass(frozen=True)
class SimilarityTransform:
    """Rotation, isotropic scale and translation: ``x -> scale * x @ rotation + translation``."""

    rotation: np.ndarray
    scale: float = 1.0
    translation: np.ndarray | None = None

    def __post_init__(self) -> None:
        rot = np.asarray(self.rotation, dtype=float)
        k = rot.shape[0]
        if rot.shape != (k, k):
            raise ValueError("rotation must be square")
        if not np.allclose(rot.T @ rot, np.eye(k), atol=1e-10):
            raise ValueError("rotation is not orthogonal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-10:
            raise ValueError("rotation is not proper (det != +1)")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        trans = np.zeros(k) if self.translation is None else np.asarray(self.translation, dtype=float).reshape(k)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    def apply(self, config: LandmarkConfig) -> LandmarkConfig:
        return LandmarkConfig(self.scale * config.coords @ self.rotation + self.translation)


def as_array(config: LandmarkConfig | np.ndarray) -> np.ndarray:
    if isinstance(config, LandmarkConfig):
        return config.coords
    return np.asarray(config, dtype=float)


def stack(configs: Sequence[LandmarkConfig | np.ndarray]) -> np.ndarray:
    """Stack configurations into an ``(n, p, k)`` array, checking they agree."""
    if isinstance(configs, np.ndarray):
        if configs.ndim != 3:
            raise ShapeMismatch(f"expected an (n, p, k) array, got shape {configs.shape}")
        return np.asarray(configs, dtype=float)
    arrays = [as_array(c) for c in configs]
    if not arrays:
        return np.empty((0, 0, 0))
    first = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != first:
            raise ShapeMismatch(f"configuration shapes differ: {first} vs {a.shape}")
    return np.stack(arrays)


def center(config: LandmarkConfig, robust: bool = False) -> LandmarkConfig:
    """Translate a configuration so its column-wise mean (or median) is zero."""
    x = as_array(config)
    loc = np.median(x, axis=0) if robust else x.mean(axis=0)
    return LandmarkConfig(x - loc)


def centroid_size(config: LandmarkConfig) -> float:
    """Square root of summed squared landmark distances from the centroid."""
    x = as_array(config)
    size = float(np.linalg.norm(x - x.mean(axis=0)))
    if size <= _SIZE_EPS:
        raise DegenerateShape("all landmarks coincide; centroid size is zero")
    return size


def rotation_matrices(sources: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Proper rotations taking each of ``sources`` (n, p, k) onto ``target`` (p, k).

    Uses the SVD of ``source.T @ target`` and flips the last singular vector
    when the unconstrained optimum would be a reflection.
    """
    m = np.einsum("npi,pj->nij", sources, target)
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    d[d == 0] = 1.0
    u[:, :, -1] *= d[:, None]
    return u @ vt


def _rotation(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    return rotation_matrices(source[None], target)[0]


def optimal_rotation(source: LandmarkConfig, target: LandmarkConfig) -> SimilarityTransform:
    """Proper rotation ``R`` minimising ``||source @ R - target||_F``.

    Both configurations are expected to be centered already.
    """
    s, t = as_array(source), as_array(target)
    if s.shape != t.shape:
        raise ShapeMismatch(f"cannot rotate {s.shape} onto {t.shape}")
    return SimilarityTransform(rotation=_rotation(s, t))


def _preshape(x: np.ndarray) -> np.ndarray:
    c = x - x.mean(axis=0)
    size = np.linalg.norm(c)
    if size <= _SIZE_EPS:
        raise DegenerateShape("all landmarks coincide; centroid size is zero")
    return c / size


def procrustes_distance(a: LandmarkConfig, b: LandmarkConfig) -> float:
    """Full Procrustes distance: center, scale to unit size, rotate, then Frobenius norm."""
    xa, xb = as_array(a), as_array(b)
    if xa.shape != xb.shape:
        raise ShapeMismatch(f"cannot compare {xa.shape} with {xb.shape}")
    pa, pb = _preshape(xa), _preshape(xb)
    r = _rotation(pa, pb)
    return float(np.linalg.norm(pa @ r - pb))


def registered_displacement(
    a: Sequence[LandmarkConfig] | np.ndarray,
    b: Sequence[LandmarkConfig] | np.ndarray,
) -> np.ndarray:
    """Per-specimen distance between two alignments of the same specimens.

    Two superimpositions of one sample agree only up to a common rotation of
    the whole frame, so ``a`` is first rotated as a block onto ``b`` with a
    single rotation. Each specimen keeps the coordinates its alignment gave
    it; the returned value is ``||a_i @ R - b_i||_F`` per specimen.
    """
    xa, xb = stack(a), stack(b)
    if xa.shape != xb.shape:
        raise ShapeMismatch(f"alignments differ in shape: {xa.shape} vs {xb.shape}")
    n, p, k = xa.shape
    r = _rotation(xa.reshape(n * p, k), xb.reshape(n * p, k))
    return np.linalg.norm((xa @ r - xb).reshape(n, -1), axis=1)


def vectorize(config: LandmarkConfig) -> np.ndarray:
    """Landmark-major flattening: ``(x1, y1[, z1], x2, y2[, z2], ...)``."""
    return as_array(config).reshape(-1).copy()


def devectorize(vector: np.ndarray, k: int) -> LandmarkConfig:
    v = np.asarray(vector, dtype=float)
    if v.ndim != 1 or v.size % k:
        raise ShapeMismatch(f"vector of length {v.size} does not split into rows of {k}")
    return LandmarkConfig(v.reshape(-1, k))


def vectorize_many(configs: Sequence[LandmarkConfig] | np.ndarray) -> np.ndarray:
    x = stack(configs)
    return x.reshape(x.shape[0], -1)


# -- landmark text format ----------------------------------------------------


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def format_landmarks(configs: Iterable[LandmarkConfig], ids: Iterable[object] | None = None) -> str:
    configs = list(configs)
    ids = list(range(len(configs))) if ids is None else list(ids)
    if len(ids) != len(configs):
        raise ValueError("ids and configs differ in length")
    blocks = []
    for ident, cfg in zip(ids, configs):
        lines = [f"specimen {ident} p={cfg.p} k={cfg.k}"]
        lines.extend(" ".join(_fmt(v) for v in row) for row in cfg.coords)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def write_landmarks(path: str | Path, configs: Iterable[LandmarkConfig], ids: Iterable[object] | None = None) -> None:
    Path(path).write_text(format_landmarks(configs, ids), encoding="utf-8")


def parse_landmarks(text: str) -> tuple[list[str], list[LandmarkConfig]]:
    """Parse the block format written by :func:`format_landmarks`.

    Returns:
        Specimen ids (as strings) and their configurations, in file order.
    """
    ids: list[str] = []
    configs: list[LandmarkConfig] = []
    lines = [ln.strip() for ln in text.splitlines()]
    i = 0
    while i < len(lines):
        if not lines[i]:
            i += 1
            continue
        head = lines[i].split()
        if len(head) != 4 or head[0] != "specimen" or not head[2].startswith("p=") or not head[3].startswith("k="):
            raise ValueError(f"line {i + 1}: malformed specimen header {lines[i]!r}")
        p, k = int(head[2][2:]), int(head[3][2:])
        rows = []
        for j in range(p):
            if i + 1 + j >= len(lines) or not lines[i + 1 + j]:
                raise ValueError(f"specimen {head[1]}: expected {p} coordinate lines")
            row = [float(v) for v in lines[i + 1 + j].split()]
            if len(row) != k:
                raise ValueError(f"specimen {head[1]}: expected {k} coordinates per line")
            rows.append(row)
        ids.append(head[1])
        configs.append(LandmarkConfig(np.array(rows)))
        i += 1 + p
    return ids, configs


def read_landmarks(path: str | Path) -> tuple[list[str], list[LandmarkConfig]]:
    return parse_landmarks(Path(path).read_text(encoding="utf-8"))
