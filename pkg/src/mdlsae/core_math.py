"""Numeric kernels shared by the rest of the package.

Entropies are always in bits. Matrices are plain 2-D ``numpy`` float arrays;
histograms are 1-D probability vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HIST_ATOL = 1e-9


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator backed by PCG64.

    PCG64 is a documented, portable bit generator: the same 64-bit seed gives
    the same stream on every platform numpy supports.
    """
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def bernoulli_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability outside [0, 1]: {p!r}")
    if p == 0.0 or p == 1.0:
        return 0.0
    q = 1.0 - p
    return -p * math.log2(p) - q * math.log2(q)


def check_histogram(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.size == 0:
        raise ValueError("histogram must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(h)) or np.any(h < 0) or np.any(h > 1):
        raise ValueError("histogram entries must lie in [0, 1]")
    total = float(h.sum())
    if abs(total - 1.0) > HIST_ATOL:
        raise ValueError(f"histogram sums to {total!r}, expected 1")
    return h


def discrete_entropy(h) -> float:
    """Shannon entropy of a normalized histogram; empty bins contribute 0."""
    h = check_histogram(h)
    nz = h[h > 0]
    return float(-(nz * np.log2(nz)).sum())


def quantize_indices(values, bits: int, lo: float, hi: float) -> np.ndarray:
    """Index of the nearest of ``2**bits`` uniform levels on ``[lo, hi]``.

    Values are clamped first. Halfway cases round away from zero.
    """
    if int(bits) != bits or bits < 1:
        raise ValueError(f"bits must be a positive integer, got {bits!r}")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got lo={lo!r}, hi={hi!r}")
    top = 2 ** int(bits) - 1
    v = np.clip(np.asarray(values, dtype=float), lo, hi)
    t = (v - lo) / (hi - lo) * top
    # t >= 0, so floor(t + 0.5) is round-half-away-from-zero
    return np.clip(np.floor(t + 0.5), 0, top).astype(np.int64)


def dequantize_indices(idx, bits: int, lo: float, hi: float) -> np.ndarray:
    top = 2 ** int(bits) - 1
    idx = np.asarray(idx)
    out = lo + (hi - lo) * (idx / top)
    return np.where(idx == top, hi, out)


def quantize_uniform(values, bits: int, lo: float, hi: float) -> np.ndarray:
    """Clamp to ``[lo, hi]`` and snap to the nearest of ``2**bits`` levels."""
    return dequantize_indices(quantize_indices(values, bits, lo, hi), bits, lo, hi)


@dataclass
class AdamState:
    """Moment accumulators for one parameter array."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        params = np.asarray(params, dtype=float)
        return cls(np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``.

    Inputs are not modified.
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * (grads * grads)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


@dataclass
class Adam:
    """Adam over a dict of named parameter arrays, updated in place."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            state = self.states.get(name)
            if state is None:
                state = AdamState.zeros_like(params[name])
            params[name], self.states[name] = adam_step(
                params[name], g, state, self.lr, self.beta1, self.beta2, self.eps)
