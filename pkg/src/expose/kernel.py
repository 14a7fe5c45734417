"""Gaussian RBF kernel and its random Fourier (Random Kitchen Sinks) feature map."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

GAUSSIAN_RBF = "gaussian-rbf"

# Recorded in model files; changing the sampling code requires a new id.
GENERATOR_ID = "numpy-pcg64-standard-normal"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus bandwidth ``sigma2`` in exp(-|x-y|^2 / (2 sigma2)).

    ``bound`` is M with k(x, x) <= M^2; it is 1 for the Gaussian kernel.
    """

    bandwidth: float
    family: str = GAUSSIAN_RBF
    bound: float = 1.0

    def __post_init__(self):
        if self.family != GAUSSIAN_RBF:
            raise InputError(f"unsupported kernel family {self.family!r}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InputError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.bound != 1.0:
            raise InputError("gaussian-rbf kernel has bound M = 1")


def _as_vector(x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"{name} must be a 1-d vector, got shape {x.shape}")
    return x


def evaluate_kernel(spec: KernelSpec, x, y) -> float:
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    diff = x - y
    return float(np.exp(-(diff @ diff) / (2.0 * spec.bandwidth)))


def sample_frequencies(input_dim, expansions, bandwidth, seed):
    """Draw the r x d frequency matrix with entries N(0, 1/bandwidth).

    Variance 1/sigma2 is what Bochner's theorem gives for the kernel
    exp(-|x-y|^2 / (2 sigma2)).
    """
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    z = rng.standard_normal((expansions, input_dim))
    z *= 1.0 / np.sqrt(bandwidth)
    return z


@dataclass(frozen=True, eq=False)
class RksFeatureMap:
    """Frozen random projection Z realizing x -> [cos(Zx); sin(Zx)] / sqrt(r)."""

    frequencies: np.ndarray
    bandwidth: float
    seed: int
    expansions: int = field(init=False)
    input_dim: int = field(init=False)

    def __post_init__(self):
        z = np.array(self.frequencies, dtype=np.float64)
        if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
            raise InputError(f"frequencies must be a non-empty r x d matrix, got {z.shape}")
        z.setflags(write=False)
        object.__setattr__(self, "frequencies", z)
        object.__setattr__(self, "expansions", z.shape[0])
        object.__setattr__(self, "input_dim", z.shape[1])

    @property
    def feature_dim(self) -> int:
        return 2 * self.expansions

    @property
    def fingerprint(self):
        return (int(self.seed), self.expansions, self.input_dim, float(self.bandwidth))

    def checksum(self) -> str:
        """SHA-256 of the first frequency row (little-endian float64)."""
        row = np.ascontiguousarray(self.frequencies[0], dtype="<f8")
        return hashlib.sha256(row.tobytes()).hexdigest()

    def embed(self, x):
        return embed(self, x)


def build_rks_map(spec: KernelSpec, input_dim: int, expansions: int, seed: int) -> RksFeatureMap:
    if int(input_dim) < 1 or int(expansions) < 1:
        raise InputError(
            f"input_dim and expansions must be >= 1, got d={input_dim}, r={expansions}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise InputError(f"seed must be an unsigned 64-bit integer, got {seed}")
    z = sample_frequencies(int(input_dim), int(expansions), spec.bandwidth, seed)
    return RksFeatureMap(z, float(spec.bandwidth), seed)


def embed(fmap: RksFeatureMap, x) -> np.ndarray:
    """Feature vector of length 2r for a d-vector, or an (m, 2r) matrix for m rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != fmap.input_dim:
        raise InputError(
            f"dimension mismatch: map expects d={fmap.input_dim}, got shape {x.shape}")
    proj = x @ fmap.frequencies.T
    scale = 1.0 / np.sqrt(fmap.expansions)
    return np.concatenate([np.cos(proj), np.sin(proj)], axis=-1) * scale


def approx_kernel(fmap: RksFeatureMap, x, y) -> float:
    return float(embed(fmap, _as_vector(x)) @ embed(fmap, _as_vector(y, "y")))
