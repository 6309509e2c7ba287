"""Feature quantization: average pooling and compact bilinear pooling.

Compact bilinear pooling uses the degree-2 tensor sketch: each spatial
location ``x`` is count-sketched with two independent hash/sign pairs and the
two sketches are circularly convolved, so that

    <TS(x), TS(y)>  is an unbiased estimate of  <x, y>^2.

Summing the per-location sketches over all ``S = W * H`` locations gives an
estimate of the pairwise kernel sum over all location pairs (the j == k terms
included).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ValidationError


def average_pool(features) -> np.ndarray:
    if len(features) == 0:
        raise ValidationError("average_pool of an empty set")
    dims = {len(f) for f in features}
    if len(dims) != 1:
        raise ValidationError(f"feature dimension mismatch: {sorted(dims)}")
    return np.mean(np.asarray(features, dtype=np.float64), axis=0)


@dataclass(frozen=True, eq=False)
class SketchParams:
    """Hash and sign maps for two independent count sketches ``R^D -> R^d``.

    Maps are drawn from numpy's PCG64 generator seeded with the entropy
    ``SeedSequence([seed, D, d])``, so they are a pure function of
    ``(seed, D, d)`` on every platform.
    """

    D: int
    d: int
    seed: int
    h: np.ndarray
    s: np.ndarray
    h2: np.ndarray
    s2: np.ndarray

    @classmethod
    def create(cls, D: int, d: int, seed: int = 0) -> "SketchParams":
        if D < 1 or d < 1:
            raise ValidationError(f"sketch dimensions must be positive, got D={D}, d={d}")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, D, d])))
        h = rng.integers(0, d, size=D)
        s = rng.integers(0, 2, size=D) * 2.0 - 1.0
        h2 = rng.integers(0, d, size=D)
        s2 = rng.integers(0, 2, size=D) * 2.0 - 1.0
        for a in (h, s, h2, s2):
            a.setflags(write=False)
        return cls(D, d, seed, h, s, h2, s2)


def count_sketch(x, p: SketchParams, second: bool = False) -> np.ndarray:
    """``out[k] = sum_{j : h(j) = k} s(j) x[j]``; works row-wise on 2-d input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.D:
        raise ValidationError(f"input dimension {x.shape[-1]} does not match sketch D={p.D}")
    h, s = (p.h2, p.s2) if second else (p.h, p.s)
    out = np.zeros(x.shape[:-1] + (p.d,))
    np.add.at(out, (..., h), x * s)
    return out


def circular_convolution_direct(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = a.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(d):
        out[..., k] = np.sum(a * np.roll(b[..., ::-1], k + 1, axis=-1), axis=-1)
    return out


def circular_convolution_fft(a, b) -> np.ndarray:
    d = np.shape(a)[-1]
    return np.fft.irfft(np.fft.rfft(a, axis=-1) * np.fft.rfft(b, axis=-1), n=d, axis=-1)


def tensor_sketch(x, p: SketchParams, method: str = "fft") -> np.ndarray:
    conv = circular_convolution_fft if method == "fft" else circular_convolution_direct
    return conv(count_sketch(x, p), count_sketch(x, p, second=True))


def signed_sqrt_l2(v: np.ndarray) -> np.ndarray:
    v = np.sign(v) * np.sqrt(np.abs(v))
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def compact_bilinear_pool(feature_map, p: SketchParams, normalize: bool = True, method: str = "fft") -> np.ndarray:
    """Pool a ``W x H x D`` map (or an ``S x D`` matrix of locations) into ``d`` values."""
    fm = np.asarray(feature_map, dtype=np.float64)
    if fm.ndim < 2:
        raise ValidationError("feature map needs at least one spatial axis")
    if not np.all(np.isfinite(fm)):
        raise ValidationError("feature map contains non-finite values")
    if fm.shape[-1] != p.D:
        raise ValidationError(f"feature map has {fm.shape[-1]} channels, sketch expects {p.D}")
    if p.d < 2:
        raise ValidationError(f"sketch dimension must be >= 2, got {p.d}")
    locations = fm.reshape(-1, p.D)
    out = tensor_sketch(locations, p, method=method).sum(axis=0)
    return signed_sqrt_l2(out) if normalize else out


def kernel_estimates(X, Y, p: SketchParams, method: str = "fft") -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``(<TS(x), TS(y)>, <x, y>^2)`` for paired rows of ``X`` and ``Y``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2:
        raise ValidationError(f"paired inputs must share a 2-d shape, got {X.shape} and {Y.shape}")
    est = np.sum(tensor_sketch(X, p, method) * tensor_sketch(Y, p, method), axis=1)
    exact = np.einsum("ij,ij->i", X, Y) ** 2
    return est, exact
