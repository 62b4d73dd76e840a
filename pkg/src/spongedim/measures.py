"""Bernoulli measures on a sponge and the dimension functionals they induce."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import MORAN_TOL, SpongeSpec, dotted, parse_dotted
from .roots import bisect_newton

SUM_TOL = 1e-12


class DegenerateDenominator(ZeroDivisionError):
    pass


def xlogx(x: np.ndarray) -> np.ndarray:
    """Elementwise ``x log x`` with ``0 log 0 = 0``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


@dataclass(frozen=True, eq=False)
class ProbVector:
    """Weights on the J-words of ``spec`` (same order as ``spec.j_words``).

    ``marginals[k]`` is the level-``k`` marginal for ``k = 1 .. d-1``
    (``marginals[d-1]`` is ``weights`` itself).
    """

    spec: SpongeSpec
    weights: np.ndarray
    marginals: dict

    @classmethod
    def from_array(cls, spec: SpongeSpec, weights: Sequence[float] | np.ndarray) -> "ProbVector":
        w = np.array(weights, dtype=float)
        if w.shape != (len(spec.j_words),):
            raise ValueError(f"expected {len(spec.j_words)} weights, got shape {w.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        margs = {}
        for k, group in spec.j_groups.items():
            m = np.bincount(group, weights=w, minlength=len(spec.words(k)))
            m.setflags(write=False)
            margs[k] = m
        return cls(spec, w, margs)

    @classmethod
    def uniform(cls, spec: SpongeSpec) -> "ProbVector":
        n = len(spec.j_words)
        return cls.from_array(spec, np.full(n, 1.0 / n))

    @classmethod
    def from_mapping(cls, spec: SpongeSpec, mapping: Mapping[str, float]) -> "ProbVector":
        index = {w: n for n, w in enumerate(spec.j_words)}
        w = np.zeros(len(index))
        for key, val in mapping.items():
            w[index[parse_dotted(key)]] = float(val)
        return cls.from_array(spec, w)

    @property
    def interior(self) -> bool:
        return bool(np.all(self.weights > 0))

    def to_mapping(self) -> dict[str, float]:
        return {dotted(w): float(p) for w, p in zip(self.spec.j_words, self.weights)}


def lambda_k(spec: SpongeSpec, p: ProbVector, k: int) -> float:
    """Level-``k`` entropy increment divided by the level-``k`` mean log-ratio."""
    if not 1 <= k <= spec.d - 1:
        raise ValueError(f"k must be in 1..{spec.d - 1}")
    pk = p.marginals[k]
    num = xlogx(pk).sum()
    if k > 1:
        num -= xlogx(p.marginals[k - 1]).sum()
    den = float(pk @ spec.level_log_ratios[k])
    if den == 0.0:
        raise DegenerateDenominator(f"level-{k} mean log-ratio is 0")
    return float(num / den)


def _moran_functional(spec: SpongeSpec, weights: np.ndarray):
    logs, mask = spec.fiber_log
    # padded slots hold -inf so that exp(t * -inf) = 0 for t > 0; t = 0 is special-cased
    logs_inf = spec.fiber_log_padded
    counts = spec.fiber_counts
    w = weights
    if not np.all(weights > 0):
        used = weights > 0
        w, logs, logs_inf, counts = weights[used], logs[used], logs_inf[used], counts[used]
    cache = {}

    def sums(t):
        if cache.get("t") != t:
            powers = np.exp(t * logs_inf)
            cache["t"] = t
            cache["S"] = powers.sum(axis=1)
            cache["dS"] = (powers * logs).sum(axis=1)
        return cache["S"], cache["dS"]

    def g(t):
        if t == 0.0:
            return g0
        return float(w @ np.log(sums(t)[0]))

    def dg(t):
        S, dS = sums(t) if t > 0 else (counts, logs.sum(axis=1))
        return float(w @ (dS / S))

    g0 = float(w @ np.log(counts))
    return g, dg, g0


def t_of_p(
    spec: SpongeSpec, p: ProbVector | np.ndarray, tol: float = MORAN_TOL, hint: float | None = None
) -> float:
    """Root in ``[0, 1]`` of ``sum_J p_J log(sum_k a_{Jk}^t) = 0``.

    The left side is strictly decreasing, non-negative at 0 and non-positive
    at 1. ``hint`` seeds the first Newton iterate.
    """
    weights = p.weights if isinstance(p, ProbVector) else np.asarray(p, dtype=float)
    g, dg, g0 = _moran_functional(spec, weights)
    if g0 <= 0.0:
        return 0.0
    g1 = g(1.0)
    if g1 >= 0.0:
        return 1.0
    return bisect_newton(g, 0.0, 1.0, dg, xtol=tol, f_lo=g0, f_hi=g1, x0=hint)


def moran_residual(spec: SpongeSpec, p: ProbVector, t: float) -> float:
    g, _, _ = _moran_functional(spec, p.weights)
    return g(t)


@dataclass(frozen=True, eq=False)
class SymbolWeights:
    """Per-leaf probabilities of the Bernoulli measure, ordered as ``spec.leaves``."""

    spec: SpongeSpec
    weights: np.ndarray
    t: float

    def to_mapping(self) -> dict[str, float]:
        return {dotted(w): float(q) for w, q in zip(self.spec.leaves, self.weights)}


def fiber_factors(spec: SpongeSpec, t: float) -> np.ndarray:
    """``a_leaf^t / sum_k a_{Jk}^t`` per leaf."""
    logs, mask = spec.fiber_log
    sums = np.where(mask, np.exp(t * logs), 0.0).sum(axis=1)
    leaf_log = spec.leaf_log_ratio[:, -1]
    return np.exp(t * leaf_log) / sums[spec.leaf_j]


def symbol_weights(spec: SpongeSpec, p: ProbVector) -> SymbolWeights:
    t = t_of_p(spec, p)
    w = p.weights[spec.leaf_j] * fiber_factors(spec, t)
    return SymbolWeights(spec, w, t)


def lambdas(spec: SpongeSpec, p: ProbVector) -> list[float]:
    return [lambda_k(spec, p, k) for k in range(1, spec.d)]


def dim_formula(spec: SpongeSpec, p: ProbVector) -> float:
    """``sum_k lambda_k(p) + t(p)``: the dimension of the Bernoulli measure ``mu_p``."""
    return math.fsum(lambdas(spec, p)) + t_of_p(spec, p)


def dim_from_weights(spec: SpongeSpec, weights: np.ndarray, t_hint: float | None = None) -> float:
    """``dim_formula`` on a raw weight array, skipping ``ProbVector`` checks.

    Used in optimiser inner loops; ``weights`` must already be a probability vector.
    """
    total = 0.0
    prev = 0.0
    for k in range(1, spec.d):
        if k == spec.d - 1:
            pk = weights
        else:
            pk = np.bincount(spec.j_groups[k], weights=weights, minlength=len(spec.words(k)))
        ent = xlogx(pk).sum()
        den = float(pk @ spec.level_log_ratios[k])
        total += (ent - prev) / den
        prev = ent
    return total + t_of_p(spec, weights, hint=t_hint)
