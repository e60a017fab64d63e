"""Deterministic vector math shared by every other module.

All functions operate on float64 numpy arrays and are pure; randomness only
enters through explicitly seeded generators from :func:`make_rng`.
"""

from __future__ import annotations

import numpy as np

from .errors import DimMismatch, ZeroNorm

ZERO_NORM_EPS = 1e-30


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator. Same seed, same draw sequence, any platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_vector(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise DimMismatch(f"expected 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite components")
    return v


def unit_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < ZERO_NORM_EPS:
        raise ZeroNorm(f"cannot normalize vector with norm {n!r}")
    return v / n


def cosine(a, b) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1] to absorb rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"shape {a.shape} vs {b.shape}")
    return float(np.clip(a @ b, -1.0, 1.0))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def softplus(z):
    # max(z,0) + log1p(e^{-|z|}): exact and overflow-safe for any z
    z = np.asarray(z, dtype=np.float64)
    out = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return out if out.ndim else float(out)


def logsumexp_rows(Z: np.ndarray) -> np.ndarray:
    m = np.max(Z, axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(Z - m), axis=1, keepdims=True)))[:, 0]


def softmax_rows(Z: np.ndarray) -> np.ndarray:
    m = np.max(Z, axis=1, keepdims=True)
    e = np.exp(Z - m)
    return e / np.sum(e, axis=1, keepdims=True)


def finite_diff_grad(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one component at a time."""
    x = np.array(x, dtype=np.float64)  # own a contiguous copy; we poke components in place
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        fp = f(x)
        flat[j] = orig - h
        fm = f(x)
        flat[j] = orig
        gf[j] = (fp - fm) / (2.0 * h)
    return g
