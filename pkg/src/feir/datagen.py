"""Synthetic score-matrix generators: i.i.d. truncated-normal matrices, an
independent suitability/utility pair, and the structured scenarios where some
items (or some users) score systematically higher.

Scores come from a normal distribution truncated to the open interval (0, 1);
the interval is what the scenario fixes, the moments are conventions and stay
configurable. Unstructured families default to Normal(0.5, 0.25^2). The
structured families default to a tighter within-group spread (0.1) so that a
boost of +0.3 on the pre-truncation mean separates the advantaged group
unambiguously; with the wide spread the groups blur together and the scenario
loses its point. Sampling is by inverse CDF on seed-derived uniform streams,
so every generator is a pure function of its GenSpec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import truncnorm

from .core import ScorePair

FAMILIES = ("random", "su_pair", "item_groups", "user_groups")

BASE_LOC = 0.5
_EDGE = 1e-12  # keep inverse-CDF output strictly inside (0, 1)

_DEFAULT_DIMS = {
    "su_pair": (50, 50),
    "item_groups": (20, 100),
    "user_groups": (20, 100),
}

_DEFAULT_SCALE = {
    "random": 0.25,
    "su_pair": 0.25,
    "item_groups": 0.1,
    "user_groups": 0.1,
}


@dataclass(frozen=True)
class GenSpec:
    family: str
    m: int | None = None
    n: int | None = None
    seed: int = 0
    group_fraction: float = 0.5
    group_boost: float = 0.3
    loc: float = BASE_LOC
    scale: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        m, n = self.m, self.n
        if m is None or n is None:
            default = _DEFAULT_DIMS.get(self.family)
            if default is None:
                raise ValueError(f"family {self.family!r} needs explicit m and n")
            m = m if m is not None else default[0]
            n = n if n is not None else default[1]
            object.__setattr__(self, "m", m)
            object.__setattr__(self, "n", n)
        if self.scale is None:
            object.__setattr__(self, "scale", _DEFAULT_SCALE[self.family])
        if self.m < 2 or self.n < 2:
            raise ValueError("need m >= 2 and n >= 2")
        if not (0.0 < self.group_fraction < 1.0):
            raise ValueError("group_fraction must lie in (0, 1)")
        if self.group_boost <= 0.0:
            raise ValueError("group_boost must be positive")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")

    def label(self) -> str:
        base = f"{self.family}(m={self.m},n={self.n},seed={self.seed},loc={self.loc},scale={self.scale}"
        if self.family in ("item_groups", "user_groups"):
            base += f",fraction={self.group_fraction},boost={self.group_boost}"
        return base + ")"


def _truncated_normal(shape, seed_key, loc, scale) -> np.ndarray:
    """Inverse-CDF samples of Normal(loc, scale^2) truncated to (0, 1).

    `loc` may be an array broadcasting against `shape` (boosted rows/columns).
    """
    rng = np.random.default_rng(seed_key)
    u = rng.random(shape)
    u = np.clip(u, _EDGE, 1.0 - _EDGE)
    loc = np.broadcast_to(np.asarray(loc, dtype=float), shape)
    alpha = (0.0 - loc) / scale
    beta = (1.0 - loc) / scale
    x = truncnorm.ppf(u, alpha, beta, loc=loc, scale=scale)
    return np.clip(x, _EDGE, 1.0 - _EDGE)


def boosted_rows(spec: GenSpec) -> np.ndarray:
    """Row indices of the advantaged user group (first rows by convention)."""
    return np.arange(int(round(spec.group_fraction * spec.m)))


def boosted_cols(spec: GenSpec) -> np.ndarray:
    """Column indices of the boosted item group (first columns by convention)."""
    return np.arange(int(round(spec.group_fraction * spec.n)))


def gen_random(spec: GenSpec) -> ScorePair:
    """One truncated-normal matrix serving as both utility and suitability."""
    if spec.family != "random":
        raise ValueError("spec.family must be 'random'")
    M = _truncated_normal((spec.m, spec.n), [spec.seed, 0], spec.loc, spec.scale)
    return ScorePair.single(M)


def gen_su_pair(spec: GenSpec) -> ScorePair:
    """Independent suitability and utility matrices of the same shape."""
    if spec.family != "su_pair":
        raise ValueError("spec.family must be 'su_pair'")
    U = _truncated_normal((spec.m, spec.n), [spec.seed, 1], spec.loc, spec.scale)
    S = _truncated_normal((spec.m, spec.n), [spec.seed, 2], spec.loc, spec.scale)
    return ScorePair(U=U, S=S, shared=False)


def gen_item_groups(spec: GenSpec) -> ScorePair:
    """Some items score higher for everyone: boosted columns get +group_boost
    on the pre-truncation mean, so all users chase the same items."""
    if spec.family != "item_groups":
        raise ValueError("spec.family must be 'item_groups'")
    loc = np.full((1, spec.n), spec.loc)
    loc[0, boosted_cols(spec)] += spec.group_boost
    M = _truncated_normal((spec.m, spec.n), [spec.seed, 3], loc, spec.scale)
    return ScorePair.single(M)


def gen_user_groups(spec: GenSpec) -> ScorePair:
    """Some users score higher everywhere: boosted rows get +group_boost on
    the pre-truncation mean, putting the rest at a blanket disadvantage."""
    if spec.family != "user_groups":
        raise ValueError("spec.family must be 'user_groups'")
    loc = np.full((spec.m, 1), spec.loc)
    loc[boosted_rows(spec), 0] += spec.group_boost
    M = _truncated_normal((spec.m, spec.n), [spec.seed, 4], loc, spec.scale)
    return ScorePair.single(M)


def generate(spec: GenSpec) -> ScorePair:
    return {
        "random": gen_random,
        "su_pair": gen_su_pair,
        "item_groups": gen_item_groups,
        "user_groups": gen_user_groups,
    }[spec.family](spec)
