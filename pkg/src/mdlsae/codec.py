"""Description length of SAE latent codes.

Each feature's activations are discretized into an explicit "inactive" bin
plus ``2**B`` uniform levels over the feature's own value range, and the
code length of a sample is the sum of per-feature histogram entropies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core_math import dequantize_indices, discrete_entropy, quantize_indices
from .sae import mse

MAX_BITS = 16


@dataclass(frozen=True)
class FeatureHistogram:
    """Sparse histogram: inactive bin plus the occupied quantization levels."""

    zero_probability: float
    levels: np.ndarray
    level_probabilities: np.ndarray

    @property
    def firing_probability(self) -> float:
        return float(self.level_probabilities.sum())

    def probabilities(self) -> np.ndarray:
        return np.concatenate([[self.zero_probability], self.level_probabilities])

    def entropy(self) -> float:
        return discrete_entropy(self.probabilities())

    def conditioned_on(self, p_parent: float) -> "FeatureHistogram":
        """Histogram restricted to samples where an enclosing parent fires."""
        if p_parent <= 0:
            return FeatureHistogram(1.0, self.levels[:0], self.level_probabilities[:0])
        lp = self.level_probabilities / p_parent
        return FeatureHistogram(max(0.0, 1.0 - float(lp.sum())), self.levels, lp)


@dataclass(frozen=True)
class FeatureStats:
    histograms: tuple
    quant_bits: int
    feature_min: np.ndarray
    feature_max: np.ndarray
    n_samples: int

    @property
    def firing_probability(self) -> np.ndarray:
        return np.array([h.firing_probability for h in self.histograms])

    @property
    def dict_size(self) -> int:
        return len(self.histograms)

    @property
    def alive_features(self) -> int:
        return int(np.count_nonzero(self.firing_probability > 0))


@dataclass(frozen=True)
class DlReport:
    mean_L0: float
    dict_size: int
    alive_features: int
    entropy_dl_bits: float
    upper_bound_dl_bits: float
    quant_bits: int
    test_mse: float
    quantized_test_mse: float = float("nan")
    # informational only: parameter count x B
    decoder_bits: float = float("nan")

    def record(self) -> dict:
        return {
            "mean_L0": self.mean_L0,
            "dict_size": self.dict_size,
            "alive_features": self.alive_features,
            "entropy_dl_bits": self.entropy_dl_bits,
            "upper_bound_dl_bits": self.upper_bound_dl_bits,
            "quant_bits": self.quant_bits,
            "test_mse": self.test_mse,
            "quantized_test_mse": self.quantized_test_mse,
            "decoder_bits": self.decoder_bits,
        }


def feature_ranges(latents: np.ndarray):
    """Per-feature ``[lo, hi]``: ``[0, max]`` for non-negative features."""
    lo = np.minimum(latents.min(axis=0), 0.0)
    hi = np.maximum(latents.max(axis=0), 0.0)
    return lo, hi


def quantize_latents(latents, bits: int, ranges=None):
    """Quantize nonzero latents per feature; zeros stay exactly zero.

    Returns ``(quantized, level_index)`` where ``level_index`` is -1 for
    inactive entries.
    """
    z = np.asarray(latents, dtype=float)
    lo, hi = feature_ranges(z) if ranges is None else ranges
    active = z != 0
    idx = np.full(z.shape, -1, dtype=np.int64)
    out = np.zeros_like(z)
    for j in np.flatnonzero(active.any(axis=0)):
        rows = active[:, j]
        if hi[j] > lo[j]:
            q = quantize_indices(z[rows, j], bits, lo[j], hi[j])
            idx[rows, j] = q
            out[rows, j] = dequantize_indices(q, bits, lo[j], hi[j])
    return out, idx


def collect_stats(latents, quant_bits: int) -> FeatureStats:
    z = np.asarray(latents, dtype=float)
    if z.ndim != 2 or z.shape[0] < 1:
        raise ValueError("latents must be a non-empty n x D matrix")
    if int(quant_bits) != quant_bits or quant_bits < 1:
        raise ValueError(f"quant_bits must be a positive integer, got {quant_bits!r}")
    n = z.shape[0]
    lo, hi = feature_ranges(z)
    _, idx = quantize_latents(z, quant_bits, (lo, hi))
    hists = []
    for j in range(z.shape[1]):
        col = idx[:, j]
        on = col[col >= 0]
        levels, counts = np.unique(on, return_counts=True)
        probs = counts / n
        hists.append(FeatureHistogram((n - on.size) / n, levels, probs))
    return FeatureStats(tuple(hists), int(quant_bits), lo, hi, n)


def entropy_dl(stats: FeatureStats) -> float:
    """Bits per sample: sum of per-feature histogram entropies."""
    return float(sum(h.entropy() for h in stats.histograms))


def upper_bound_dl(L0: float, D: int, B: float) -> float:
    """``L0 * (B + log2 D)`` bits per sample."""
    if L0 < 0 or D < 1 or B < 0:
        raise ValueError(f"need L0 >= 0, D >= 1, B >= 0; got {L0}, {D}, {B}")
    return L0 * (B + math.log2(D))


def onehot_paper_arithmetic(vocab: int, seq_len: int, B: int) -> float:
    """``B * seq_len * log2(vocab)``: reproduces the printed one-hot figure.

    This is not ``upper_bound_dl(1, vocab**seq_len, B)``, which gives
    ``B + seq_len * log2(vocab)``.
    """
    if min(vocab, seq_len, B) < 1:
        raise ValueError("vocab, seq_len and B must all be >= 1")
    return B * seq_len * math.log2(vocab)


def onehot_upper_bound(vocab: int, seq_len: int, B: int) -> float:
    """The bound ``L0 (B + log2 D)`` with ``L0 = 1``, ``D = vocab**seq_len``."""
    return B + seq_len * math.log2(vocab)


@dataclass(frozen=True)
class PrecisionResult:
    bits: int
    mse: float
    feasible: bool
    unquantized_mse: float
    mse_by_bits: dict = field(default_factory=dict)


def effective_precision_search(model, data, epsilon: float,
                               max_bits: int = MAX_BITS) -> PrecisionResult:
    """Smallest ``B`` in ``[1, max_bits]`` whose quantized reconstruction MSE < epsilon.

    Scans upward from 1 bit, so the result is the minimal feasible B even when
    the loss is not monotone in B. When nothing is feasible the result has
    ``feasible=False`` and carries the ``max_bits`` loss.
    """
    data = np.asarray(data, dtype=float)
    z = model.transform(data)
    base = mse(data, model.inverse_transform(z))
    if not base < epsilon:
        raise ValueError(f"unquantized loss {base!r} is not below epsilon={epsilon!r}")
    ranges = feature_ranges(z)
    losses = {}
    for bits in range(1, max_bits + 1):
        zq, _ = quantize_latents(z, bits, ranges)
        losses[bits] = mse(data, model.inverse_transform(zq))
        if losses[bits] < epsilon:
            return PrecisionResult(bits, losses[bits], True, base, losses)
    return PrecisionResult(max_bits, losses[max_bits], False, base, losses)


def decoder_bits(model, bits: int) -> float:
    return float((model.W_dec_.size + model.b_dec_.size) * bits)


def dl_report(model, data, bits: int, quantized_mse: float = float("nan")) -> DlReport:
    """Measure the DL of ``model``'s latents on ``data`` at ``bits`` precision."""
    data = np.asarray(data, dtype=float)
    z = model.transform(data)
    stats = collect_stats(z, bits)
    l0 = float(np.count_nonzero(z, axis=1).mean())
    alive = stats.alive_features
    return DlReport(
        mean_L0=l0,
        dict_size=z.shape[1],
        alive_features=alive,
        entropy_dl_bits=entropy_dl(stats),
        upper_bound_dl_bits=upper_bound_dl(l0, max(alive, 1), bits),
        quant_bits=bits,
        test_mse=mse(data, model.inverse_transform(z)),
        quantized_test_mse=quantized_mse,
        decoder_bits=decoder_bits(model, bits),
    )


class HierarchyViolation(ValueError):
    def __init__(self, child, parent, count):
        super().__init__(f"feature {child} active while parent {parent} inactive "
                         f"on {count} samples")
        self.child, self.parent = child, parent


@dataclass(frozen=True)
class FeatureTree:
    """Parent links; features absent from ``parent`` (or mapped to None) are roots."""

    parent: Mapping[int, Optional[int]] = field(default_factory=dict)

    def __post_init__(self):
        for start in self.parent:
            seen = {start}
            node = self.parent.get(start)
            while node is not None:
                if node in seen:
                    raise ValueError(f"cycle in feature tree through {node}")
                seen.add(node)
                node = self.parent.get(node)

    def edges(self):
        return [(c, p) for c, p in sorted(self.parent.items()) if p is not None]


def tree_dl(stats: FeatureStats, tree: FeatureTree, activity) -> float:
    """DL when each child is coded only while its parent fires.

    ``activity`` is the ``n x D`` boolean firing matrix the stats came from;
    it is used to check that a child never fires without its parent.
    """
    act = np.asarray(activity, dtype=bool)
    D = stats.dict_size
    if act.ndim != 2 or act.shape[1] != D:
        raise ValueError(f"activity must be n x {D}")
    parents = {}
    for child, par in tree.edges():
        if not (0 <= child < D and 0 <= par < D):
            raise ValueError(f"tree edge {child}->{par} outside 0..{D - 1}")
        bad = int(np.count_nonzero(act[:, child] & ~act[:, par]))
        if bad:
            raise HierarchyViolation(child, par, bad)
        parents[child] = par
    p_fire = stats.firing_probability
    total = 0.0
    for j, h in enumerate(stats.histograms):
        if j in parents:
            p_par = float(p_fire[parents[j]])
            total += p_par * h.conditioned_on(p_par).entropy()
        else:
            total += h.entropy()
    return total
