"""Closed-form description lengths for two boolean toy worlds.

Splitting world: features A and B with correlation ``rho``. Coding either as
two features {A, B} or as three mutually exclusive features
{A and not B, B and not A, A and B}.

Hierarchy world: B (bird) implies A (animal). Coding either as two mutually
exclusive features {A and not B, B} or as a tree where B is sent only when A
is active.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .core_math import bernoulli_entropy

PROB_SLACK = 1e-12
TIE_TOL = 1e-12


def _prob(x: float) -> float:
    """Clip float noise at the edges of [0, 1]; reject anything further out."""
    if -PROB_SLACK <= x < 0.0:
        return 0.0
    if 1.0 < x <= 1.0 + PROB_SLACK:
        return 1.0
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"probability outside [0, 1]: {x!r}")
    return x


def H(p: float) -> float:
    return bernoulli_entropy(_prob(p))


@dataclass(frozen=True)
class ToyWorld:
    """Two boolean features A and B.

    Give ``rho`` (Pearson correlation) for the splitting model, or
    ``p_b_given_a`` for the hierarchy model, where ``p_b`` is derived.
    """

    p_a: float
    p_b: float = 0.0
    rho: float = 0.0
    p_b_given_a: Optional[float] = None

    def __post_init__(self):
        _prob(self.p_a)
        if self.p_b_given_a is not None:
            _prob(self.p_b_given_a)
            object.__setattr__(self, "p_b", self.p_a * self.p_b_given_a)
        _prob(self.p_b)
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho outside [-1, 1]: {self.rho!r}")
        j = self._raw_joint()
        lo = max(0.0, self.p_a + self.p_b - 1.0)
        hi = min(self.p_a, self.p_b)
        if not lo - PROB_SLACK <= j <= hi + PROB_SLACK:
            raise ValueError(
                f"infeasible world: p_ab={j!r} outside [{lo!r}, {hi!r}]")

    @classmethod
    def hierarchy(cls, p_a: float, p_b_given_a: float) -> "ToyWorld":
        return cls(p_a=p_a, p_b_given_a=p_b_given_a)

    def _raw_joint(self) -> float:
        if self.p_b_given_a is not None:
            return self.p_b
        pa, pb = self.p_a, self.p_b
        return pa * pb + self.rho * math.sqrt(pa * (1 - pa) * pb * (1 - pb))

    @property
    def p_ab(self) -> float:
        lo = max(0.0, self.p_a + self.p_b - 1.0)
        hi = min(self.p_a, self.p_b)
        j = self._raw_joint()
        # snap onto the feasible interval's ends so e.g. rho=1 is exact
        if j <= lo + PROB_SLACK:
            return lo
        if j >= hi - PROB_SLACK:
            return hi
        return j


@dataclass(frozen=True)
class CodingComparison:
    l0_scheme1: float
    dl_scheme1: float
    l0_scheme2: float
    dl_scheme2: float
    preferred: str
    # hierarchy model only: expected nonzero count of scheme 2
    l0_scheme2_expected: Optional[float] = None

    def record(self) -> dict:
        rec = {
            "l0_scheme1": self.l0_scheme1,
            "dl_scheme1": self.dl_scheme1,
            "l0_scheme2": self.l0_scheme2,
            "dl_scheme2": self.dl_scheme2,
            "preferred": self.preferred,
        }
        if self.l0_scheme2_expected is not None:
            rec["l0_scheme2_expected"] = self.l0_scheme2_expected
        return rec


def _preference(dl1: float, dl2: float) -> str:
    if abs(dl1 - dl2) <= TIE_TOL:
        return "tie"
    return "scheme1" if dl1 < dl2 else "scheme2"


def split_analysis(world: ToyWorld) -> CodingComparison:
    """Scheme 1 = no splitting {A, B}; scheme 2 = split into three features."""
    pa, pb, pab = world.p_a, world.p_b, world.p_ab
    dl_no = H(pa) + H(pb)
    dl_split = H(pa - pab) + H(pb - pab) + H(pab)
    return CodingComparison(pa + pb, dl_no, pa + pb - pab, dl_split,
                            _preference(dl_no, dl_split))


def split_l0_dominance_check(world: ToyWorld) -> bool:
    c = split_analysis(world)
    return c.l0_scheme2 < c.l0_scheme1


def hier_analysis(world: ToyWorld) -> CodingComparison:
    """Scheme 1 = flat {A and not B, B}; scheme 2 = B coded only when A fires.

    ``l0_scheme2`` is ``p_a + p_b_given_a``; ``l0_scheme2_expected`` is the
    expected nonzero count ``p_a + p_b``.
    """
    if world.p_b > world.p_a + PROB_SLACK:
        raise ValueError(f"hierarchy needs p_b <= p_a, got {world.p_b} > {world.p_a}")
    pa, pb = world.p_a, world.p_b
    pba = world.p_b_given_a
    if pba is None:
        pba = pb / pa if pa > 0 else 0.0
    dl_flat = H(pa - pb) + H(pb)
    dl_hier = H(pa) + pa * H(pba)
    return CodingComparison(pa, dl_flat, pa + pba, dl_hier,
                            _preference(dl_flat, dl_hier), pa + pb)


def split_dl_gap(p: float, rho: float) -> float:
    """``DL_split - DL_nosplit`` in the symmetric world ``p_a = p_b = p``."""
    c = split_analysis(ToyWorld(p, p, rho))
    return c.dl_scheme2 - c.dl_scheme1


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float,
           max_steps: int = 200):
    """Root of ``f`` on ``[lo, hi]`` by bisection, or None without a sign change."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo, 0
    if f_hi == 0:
        return hi, 0
    if (f_lo > 0) == (f_hi > 0):
        return None, 0
    steps = 0
    while hi - lo > tol and steps < max_steps:
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        steps += 1
        if f_mid == 0:
            return mid, steps
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi), steps


def split_phase_boundary(p_grid, tol: float = 1e-6):
    """For each ``p``, the correlation above which splitting is preferred.

    Returns ``[(p, rho_star)]``; ``rho_star`` is None when the gap does not
    change sign on [0, 1].
    """
    out = []
    for p in p_grid:
        p = float(p)
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {p!r}")
        root, _ = bisect(lambda r: split_dl_gap(p, r), 0.0, 1.0, tol)
        out.append((p, root))
    return out


def split_phase_grid(p_values, rho_values):
    """Plot-ready records over a symmetric ``(p, rho)`` grid; infeasible points skipped."""
    rows = []
    for p in p_values:
        for rho in rho_values:
            try:
                w = ToyWorld(float(p), float(p), float(rho))
            except ValueError:
                continue
            c = split_analysis(w)
            rows.append({
                "p": float(p), "rho": float(rho),
                "dl_split": c.dl_scheme2, "dl_nosplit": c.dl_scheme1,
                "l0_split": c.l0_scheme2, "l0_nosplit": c.l0_scheme1,
                "preferred": {"scheme1": "nosplit", "scheme2": "split"}.get(
                    c.preferred, "tie"),
            })
    return rows


def hier_phase_grid(p_a_values, p_b_given_a_values):
    rows = []
    for pa in p_a_values:
        for pba in p_b_given_a_values:
            c = hier_analysis(ToyWorld.hierarchy(float(pa), float(pba)))
            rows.append({
                "p_a": float(pa), "p_b_given_a": float(pba),
                "dl_hier": c.dl_scheme2, "dl_flat": c.dl_scheme1,
                "l0_hier": c.l0_scheme2, "l0_hier_expected": c.l0_scheme2_expected,
                "l0_flat": c.l0_scheme1,
                "preferred": {"scheme1": "flat", "scheme2": "hier"}.get(
                    c.preferred, "tie"),
            })
    return rows


# --- enumeration oracle -----------------------------------------------------
# Written against the four (A, B) outcomes directly so it shares no code with
# the closed forms above.

@dataclass(frozen=True)
class CodingScheme:
    """Dictionary features as boolean functions of ``(a, b)``, plus parent links."""

    features: Mapping[str, Callable[[bool, bool], bool]]
    parents: Mapping[str, str] = field(default_factory=dict)


NO_SPLIT = CodingScheme({"A": lambda a, b: a, "B": lambda a, b: b})
SPLIT = CodingScheme({
    "A_not_B": lambda a, b: a and not b,
    "B_not_A": lambda a, b: b and not a,
    "A_and_B": lambda a, b: a and b,
})
FLAT_HIERARCHY = CodingScheme({
    "generic_animal": lambda a, b: a and not b,
    "bird": lambda a, b: b,
})
TREE_HIERARCHY = CodingScheme(
    {"animal": lambda a, b: a, "bird": lambda a, b: b},
    parents={"bird": "animal"},
)


def _bits(dist) -> float:
    return -sum(q * math.log2(q) for q in dist if q > 0)


def _outcomes(world: ToyWorld):
    pa, pb = world.p_a, world.p_b
    p11 = world.p_ab
    cells = {
        (True, True): p11,
        (True, False): pa - p11,
        (False, True): pb - p11,
        (False, False): 1.0 - pa - pb + p11,
    }
    return {k: max(v, 0.0) for k, v in cells.items()}


def enumeration_oracle(world: ToyWorld, scheme: CodingScheme) -> float:
    """Exact bits per sample of ``scheme`` by summing over all (A, B) outcomes."""
    for child, par in scheme.parents.items():
        if child not in scheme.features or par not in scheme.features:
            raise ValueError(f"scheme references undefined feature in {child}->{par}")
    cells = _outcomes(world)
    total = 0.0
    for name, fn in scheme.features.items():
        par = scheme.parents.get(name)
        if par is None:
            on = sum(p for (a, b), p in cells.items() if fn(a, b))
            total += _bits((on, 1.0 - on))
            continue
        pfn = scheme.features[par]
        if any(fn(a, b) and not pfn(a, b) for (a, b), p in cells.items() if p > 0):
            raise ValueError(f"feature {name} can fire without parent {par}")
        p_par = sum(p for (a, b), p in cells.items() if pfn(a, b))
        if p_par == 0:
            continue
        p_both = sum(p for (a, b), p in cells.items() if fn(a, b) and pfn(a, b))
        c = p_both / p_par
        total += p_par * _bits((c, 1.0 - c))
    return total


def grid_probabilities(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)
