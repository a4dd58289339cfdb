"""Multi-scale random Fourier input encoding and its induced stationary kernel.

Coordinates are mapped through a bank of frozen Gaussian projection
matrices, one per scale, and each projection contributes a sin block
followed by a cos block. Wider scales inject higher frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .rng import Rng

# Geometric ladder of scales used when a config does not specify its own.
DEFAULT_SCALES = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class FourierConfig:
    """Shape and sampling parameters of the Fourier encoding.

    num_maps may be zero, in which case the encoding is empty and models
    fall back to raw coordinates.
    """

    num_maps: int
    scales: tuple[float, ...]
    rows_per_map: int
    input_dim: int
    seed: int

    def __post_init__(self):
        if self.num_maps < 0:
            raise ConfigError("num_maps must be nonnegative")
        if len(self.scales) != self.num_maps:
            raise ConfigError(
                f"expected {self.num_maps} scales, got {len(self.scales)}"
            )
        if any(s <= 0.0 for s in self.scales):
            raise ConfigError("all scales must be positive")
        if self.rows_per_map < 1:
            raise ConfigError("rows_per_map must be at least 1")
        if self.input_dim < 1:
            raise ConfigError("input_dim must be at least 1")


def default_fourier_config(input_dim: int, seed: int, rows_per_map: int = 4) -> FourierConfig:
    return FourierConfig(
        num_maps=len(DEFAULT_SCALES),
        scales=DEFAULT_SCALES,
        rows_per_map=rows_per_map,
        input_dim=input_dim,
        seed=seed,
    )


def encoding_dim(config: FourierConfig) -> int:
    """Length of the encoded feature vector: a sin and a cos block per map."""
    return 2 * config.rows_per_map * config.num_maps


@dataclass
class FourierMap:
    """Frozen encoding: the sampled projection matrices plus their config."""

    config: FourierConfig
    bases: tuple[np.ndarray, ...] = field(repr=False)


def sample_fourier_map(config: FourierConfig) -> FourierMap:
    """Draw the per-scale Gaussian projection matrices.

    Fully determined by (config, seed); map k has entries with standard
    deviation scales[k].
    """
    rng = Rng(config.seed)
    bases = []
    for k in range(config.num_maps):
        b = config.scales[k] * rng.normal_matrix(config.rows_per_map, config.input_dim)
        bases.append(b)
    return FourierMap(config=config, bases=tuple(bases))


def encode_batch(fmap: FourierMap, coords: np.ndarray) -> np.ndarray:
    """Encode a batch of coordinates, shape (b, input_dim) -> (b, 2*rows*maps).

    Block layout is [sin_1, cos_1, ..., sin_N, cos_N]; serialization relies
    on this order.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != fmap.config.input_dim:
        raise ValueError(
            f"expected coordinates of shape (b, {fmap.config.input_dim}), "
            f"got {coords.shape}"
        )
    blocks = []
    for b in fmap.bases:
        phase = 2.0 * np.pi * (coords @ b.T)
        blocks.append(np.sin(phase))
        blocks.append(np.cos(phase))
    if not blocks:
        return np.zeros((coords.shape[0], 0))
    return np.concatenate(blocks, axis=1)


def encode(fmap: FourierMap, v) -> np.ndarray:
    """Encode a single coordinate vector."""
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    return encode_batch(fmap, v.reshape(1, -1))[0]


def composed_kernel(fmap: FourierMap, u, v) -> float:
    """Dot product of two encodings.

    By the sin/cos product identity this equals the sum over all basis rows
    b of cos(2*pi*b.(u-v)), so the kernel depends only on u-v: it is
    shift-invariant by construction.
    """
    return float(np.dot(encode(fmap, u), encode(fmap, v)))
