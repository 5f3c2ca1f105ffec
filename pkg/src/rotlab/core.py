"""Deterministic numeric primitives shared by all other modules.

Everything here works on float64 numpy arrays. Random sampling goes through
RngStream, a thin wrapper around numpy's PCG64 generator with explicit
seeding, so that every experiment is reproducible bit-for-bit from its seed.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

# Cosines may land marginally outside [-1, 1] due to rounding; anything past
# this tolerance is treated as a bug in the caller, not rounding noise.
COS_CLAMP_TOL = 1e-9


class RngStream:
    """Seeded random stream (PCG64).

    The generator algorithm is fixed: ``numpy.random.Generator`` over
    ``numpy.random.PCG64`` seeded with ``SeedSequence([seed, key])``. The
    optional ``key`` gives independent substreams from one experiment seed
    (e.g. system init vs. imbalance assignment) without interleaving draws.
    Identical (seed, key) always reproduces the identical sample sequence.
    """

    def __init__(self, seed: int, key: int = 0):
        self.seed = int(seed)
        self.key = int(key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, self.key]))
        )

    def standard_normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def spawn(self, key: int) -> "RngStream":
        """Independent stream derived from the same seed with a different key."""
        return RngStream(self.seed, key)


def sample_normal(rng: RngStream, n: int, std: float) -> np.ndarray:
    """n i.i.d. draws from N(0, std^2), deterministic given the stream state.

    std=0 yields exact zeros and still consumes n draws from the stream, so
    the downstream sequence does not depend on the value of std.
    """
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return rng.standard_normal(n) * std


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in radians between two nonzero vectors: arccos(<a,b>/(|a||b|)).

    The cosine is clamped into [-1, 1] only when it exceeds the interval by
    at most COS_CLAMP_TOL; larger violations raise, since they indicate a
    caller bug rather than rounding.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0:
        raise ValueError("angle_between: argument 'a' has zero norm")
    if nb == 0.0:
        raise ValueError("angle_between: argument 'b' has zero norm")
    cos = float(a @ b) / (na * nb)
    if cos > 1.0 or cos < -1.0:
        if abs(cos) - 1.0 > COS_CLAMP_TOL:
            raise ValueError(
                f"angle_between: cosine {cos!r} outside [-1, 1] beyond rounding tolerance"
            )
        cos = max(-1.0, min(1.0, cos))
    return math.acos(cos)


def project_out(v: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Component of v orthogonal to basis: v - (<v,b>/<b,b>) b."""
    v = np.asarray(v, dtype=np.float64)
    basis = np.asarray(basis, dtype=np.float64)
    bb = float(basis.ravel() @ basis.ravel())
    if bb == 0.0:
        raise ValueError("project_out: basis has zero norm")
    return v - (float(v.ravel() @ basis.ravel()) / bb) * basis


def rms_downsample(series: Sequence[float], factor: int) -> np.ndarray:
    """RMS-average consecutive blocks of `factor` samples.

    A trailing partial block is averaged over its actual length. Empty input
    gives empty output. factor=1 is the identity.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size == 0:
        return x
    out = np.empty(int(np.ceil(x.size / factor)), dtype=np.float64)
    for i in range(out.size):
        block = x[i * factor : (i + 1) * factor]
        out[i] = math.sqrt(float(np.mean(block * block)))
    return out


class StreamingMoments:
    """Running count, mean and mean-of-squares, updated one sample at a time.

    Samples may be scalars or arrays (accumulated elementwise). Uses the
    numerically stable incremental form mean += (x - mean)/n.
    """

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.mean_sq = 0.0

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64)
        self.count += 1
        if self.count == 1:
            self.mean = x.copy() if x.ndim else float(x)
            self.mean_sq = (x * x) if x.ndim else float(x * x)
            return
        self.mean = self.mean + (x - self.mean) / self.count
        self.mean_sq = self.mean_sq + (x * x - self.mean_sq) / self.count

    @property
    def rms(self):
        return np.sqrt(self.mean_sq)
