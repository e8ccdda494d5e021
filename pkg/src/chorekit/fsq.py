"""Finite scalar quantization with compositional upper/lower codebooks.

Each latent channel is squashed by a sigmoid, scaled to its per-channel level
count and rounded; the rounding rule is half-away-from-zero (np.round rounds
half to even, which would break levels with even L-1). Dequantized values live
in [0, 1]. Level tuples map to flat ids by mixed-radix enumeration with
channel 0 as the least significant digit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np
from scipy.special import expit

from .errors import ValidationError
from .rng import SeededRng

LATENT_CLIP = 20.0


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round halves away from zero (0.5 -> 1, -0.5 -> -1)."""
    x = np.asarray(x)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class FsqCodebook:
    levels: tuple[int, ...]

    def __post_init__(self):
        if not self.levels or any(l < 2 for l in self.levels):
            raise ValidationError(f"every channel needs at least 2 levels, got {self.levels}")
        object.__setattr__(self, "levels", tuple(int(l) for l in self.levels))

    @property
    def channels(self) -> int:
        return len(self.levels)

    @property
    def size(self) -> int:
        return prod(self.levels)


DEFAULT_LEVELS = (8, 5, 5, 5)


def default_codebook() -> FsqCodebook:
    return FsqCodebook(DEFAULT_LEVELS)


def fsq_quantize(z: np.ndarray, cb: FsqCodebook) -> tuple[np.ndarray, np.ndarray]:
    """Quantize latents (..., d) to (levels i64, values f64), values in [0, 1]."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != cb.channels:
        raise ValidationError(f"latent width {z.shape[-1]} != codebook channels {cb.channels}")
    if not np.all(np.isfinite(z)):
        raise ValidationError("latents must be finite")
    span = np.array(cb.levels, dtype=np.float64) - 1.0
    levels = round_half_away(expit(z) * span).astype(np.int64)
    return levels, levels / span


def levels_to_index(levels: np.ndarray, cb: FsqCodebook) -> np.ndarray:
    """Mixed-radix flatten (..., d) -> (...), channel 0 least significant."""
    levels = np.asarray(levels, dtype=np.int64)
    if levels.shape[-1] != cb.channels:
        raise ValidationError(f"level width {levels.shape[-1]} != codebook channels {cb.channels}")
    caps = np.array(cb.levels, dtype=np.int64)
    if np.any(levels < 0) or np.any(levels >= caps):
        raise ValidationError("levels out of range for codebook")
    multipliers = np.concatenate([[1], np.cumprod(caps[:-1])])
    return np.sum(levels * multipliers, axis=-1)


def index_to_levels(index: np.ndarray, cb: FsqCodebook) -> np.ndarray:
    """Inverse of levels_to_index; accepts (...) and returns (..., d)."""
    index = np.asarray(index, dtype=np.int64)
    if np.any(index < 0) or np.any(index >= cb.size):
        raise ValidationError(f"index out of range [0, {cb.size})")
    out = np.empty(index.shape + (cb.channels,), dtype=np.int64)
    rest = index
    for i, cap in enumerate(cb.levels):
        out[..., i] = rest % cap
        rest = rest // cap
    return out


def canonical_latents(cb: FsqCodebook, clip: float = LATENT_CLIP) -> np.ndarray:
    """(size, d) pre-sigmoid latents whose quantization enumerates every id.

    Channel latent for level l is logit(l / (L-1)); the endpoints 0 and 1 have
    infinite logits and are clipped to +-clip, which still rounds to the
    correct extreme level for any practical level count.
    """
    all_levels = index_to_levels(np.arange(cb.size), cb)
    span = np.array(cb.levels, dtype=np.float64) - 1.0
    v = all_levels / span
    with np.errstate(divide="ignore"):
        z = np.log(v) - np.log1p(-v)
    return np.clip(z, -clip, clip)


@dataclass(frozen=True)
class CompositionalCodebooks:
    """Disjoint id spaces: upper ids [0, k_u), lower ids [k_u, k_u + k_l)."""

    upper: FsqCodebook = field(default_factory=default_codebook)
    lower: FsqCodebook = field(default_factory=default_codebook)

    @property
    def lower_offset(self) -> int:
        return self.upper.size

    @property
    def vocab_size(self) -> int:
        return self.upper.size + self.lower.size


def tokenize_clip(
    upper_latents: np.ndarray,
    lower_latents: np.ndarray,
    books: CompositionalCodebooks,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-timestep ids from two latent tracks; lower ids carry the offset."""
    upper_levels, _ = fsq_quantize(upper_latents, books.upper)
    lower_levels, _ = fsq_quantize(lower_latents, books.lower)
    upper_ids = levels_to_index(upper_levels, books.upper)
    lower_ids = levels_to_index(lower_levels, books.lower) + books.lower_offset
    return upper_ids.astype(np.int64), lower_ids.astype(np.int64)


class UsageHistogram:
    """Per-code usage counts over a fixed id space [0, size)."""

    def __init__(self, size: int):
        if size < 1:
            raise ValidationError("histogram needs a positive code count")
        self.counts = np.zeros(size, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def observe(self, ids: np.ndarray) -> None:
        ids = np.asarray(ids, dtype=np.int64).ravel()
        if ids.size and (ids.min() < 0 or ids.max() >= self.size):
            raise ValidationError(f"ids out of range [0, {self.size})")
        self.counts += np.bincount(ids, minlength=self.size)

    def merge(self, other: "UsageHistogram") -> "UsageHistogram":
        if other.size != self.size:
            raise ValidationError("histogram sizes differ")
        merged = UsageHistogram(self.size)
        merged.counts = self.counts + other.counts
        return merged


def cur(hist: UsageHistogram, thresholds=(1, 5, 10)) -> np.ndarray:
    """Fraction of codes whose count is >= each threshold (>= by convention)."""
    thresholds = list(thresholds)
    if thresholds != sorted(thresholds):
        raise ValidationError("thresholds must be sorted ascending")
    return np.array([float(np.mean(hist.counts >= t)) for t in thresholds])


@dataclass(frozen=True)
class VqCodebook:
    """Fixed random codebook for the nearest-neighbor baseline quantizer."""

    vectors: np.ndarray  # (k, d)

    @staticmethod
    def seeded(size: int, channels: int, seed: int) -> "VqCodebook":
        rng = SeededRng(seed).spawn("vq-codebook")
        return VqCodebook(vectors=rng.normal((size, channels)))


def vq_quantize(z: np.ndarray, cb: VqCodebook) -> tuple[np.ndarray, np.ndarray]:
    """Nearest codebook row by Euclidean distance; ties go to the lower id."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != cb.vectors.shape[1]:
        raise ValidationError(
            f"latent width {z.shape[-1]} != codebook width {cb.vectors.shape[1]}"
        )
    flat = z.reshape(-1, z.shape[-1])
    d2 = np.sum(flat**2, axis=1, keepdims=True) - 2.0 * flat @ cb.vectors.T + np.sum(
        cb.vectors**2, axis=1
    )
    ids = np.argmin(d2, axis=1)
    return ids.reshape(z.shape[:-1]).astype(np.int64), cb.vectors[ids].reshape(z.shape)
