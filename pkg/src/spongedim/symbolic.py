"""Symbolic coding of a sponge: words, basic boxes, cut indices, approximate cubes.

All products of ratios are carried as cumulative log sums; at ``n ~ 1e5``
the products themselves underflow.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .measures import ProbVector, fiber_factors, symbol_weights, t_of_p
from .model import SpongeSpec

# Relative slack for the defining inequality of the cut indices; absorbs the
# rounding of long cumulative sums so that exact ties (uniform specs) resolve
# the way exact arithmetic would.
CUT_RTOL = 1e-13


class WordTooShort(ValueError):
    pass


class BelowThreshold(ValueError):
    """``n`` is below the length from which cut indices are defined."""


class ZeroMass(ValueError):
    pass


class CapExceeded(ValueError):
    pass


class DegenerateScales(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    """Axis-parallel box in coordinate order ``x_1 .. x_d``."""

    corner: tuple[float, ...]
    edges: tuple[float, ...]

    def contains(self, other: "Box", tol: float = 1e-12) -> bool:
        return all(
            c0 - tol <= c1 and c1 + e1 <= c0 + e0 + tol
            for c0, e0, c1, e1 in zip(self.corner, self.edges, other.corner, other.edges)
        )

    def to_row(self) -> list[float]:
        return list(self.corner) + list(self.edges)


def _box_from_levels(corner_by_level: np.ndarray, edge_by_level: np.ndarray) -> Box:
    # level k drives coordinate x_{d+1-k}
    return Box(tuple(float(x) for x in corner_by_level[::-1]), tuple(float(x) for x in edge_by_level[::-1]))


@dataclass(frozen=True, eq=False)
class Word:
    """A finite sequence of leaf indices (positions in ``spec.leaves``)."""

    spec: SpongeSpec
    symbols: np.ndarray

    @classmethod
    def from_leaves(cls, spec: SpongeSpec, leaves: Sequence[Sequence[int]]) -> "Word":
        index = {w: n for n, w in enumerate(spec.leaves)}
        return cls(spec, np.array([index[tuple(x)] for x in leaves], dtype=np.intp))

    def __len__(self) -> int:
        return len(self.symbols)

    def prefix(self, n: int) -> "Word":
        return Word(self.spec, self.symbols[:n])

    @cached_property
    def cum_log(self) -> np.ndarray:
        """``(d, len+1)``; row ``k-1`` is ``[0, sum_{l<=1} log a^k, sum_{l<=2} ...]``."""
        logs = self.spec.leaf_log_ratio[self.symbols].T
        out = np.zeros((self.spec.d, len(self) + 1))
        np.cumsum(logs, axis=1, out=out[:, 1:])
        return out


@dataclass(frozen=True)
class CutIndices:
    """``L[0] = n``, ``L[k]`` the cut index ``L_n^k`` for ``k = 1 .. d-1``."""

    L: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.L[0]


def cut_threshold(spec: SpongeSpec) -> float:
    """Smallest ``n`` for which the cut indices are defined."""
    return float(spec.level_log_ratios[spec.d].min() / spec.level_log_ratios[1].max())


def _cut_tol(spec: SpongeSpec, n: int) -> float:
    scale = float(np.abs(spec.leaf_log_ratio).max())
    return CUT_RTOL * max(n, 1) * max(scale, 1.0)


def cut_indices(spec: SpongeSpec, w: Word, n: int) -> CutIndices:
    """Largest prefix lengths whose level-``k+1`` box edge still dominates the level-1 edge at ``n``."""
    if n < 1 or n < cut_threshold(spec) - 1e-12:
        raise BelowThreshold(f"n={n} below threshold {cut_threshold(spec):.6g}")
    if len(w) < n:
        raise WordTooShort(f"word has {len(w)} symbols, need {n}")
    cum = w.cum_log
    target = cum[0, n] - _cut_tol(spec, n)
    out = [n]
    for k in range(1, spec.d):
        # cum[k, 1..n] is strictly decreasing; count entries still >= target.
        row = cum[k, 1 : n + 1]
        L = int(np.searchsorted(-row, -target, side="right"))
        if L < 1:
            raise BelowThreshold(f"L_n^{k} undefined at n={n}")
        out.append(L)
    return CutIndices(tuple(out))


def cut_indices_all(spec: SpongeSpec, w: Word, ns: Sequence[int] | np.ndarray) -> np.ndarray:
    """Cut indices for many ``n`` on one word; returns ``(len(ns), d)`` ints."""
    ns = np.asarray(ns, dtype=np.intp)
    if ns.size and (ns.min() < max(1.0, cut_threshold(spec) - 1e-12) or ns.max() > len(w)):
        raise BelowThreshold("some n outside [threshold, len(word)]")
    cum = w.cum_log
    scale = max(float(np.abs(spec.leaf_log_ratio).max()), 1.0)
    targets = cum[0, ns] - CUT_RTOL * ns * scale
    out = np.empty((len(ns), spec.d), dtype=np.intp)
    out[:, 0] = ns
    for k in range(1, spec.d):
        L = np.searchsorted(-cum[k, 1:], -targets, side="right")
        out[:, k] = np.minimum(L, ns)
    return out


def sandwich_logs(spec: SpongeSpec, w: Word, cut: CutIndices) -> np.ndarray:
    """``log`` of the approximate-cube edge ratios, one per level ``k = 1 .. d``.

    Each value lies in ``[0, -log min a]`` (up to the cut tolerance).
    """
    cum = w.cum_log
    n = cut.n
    return np.array([cum[k - 1, cut.L[k - 1]] - cum[0, n] for k in range(1, spec.d + 1)])


def _corner_by_level(spec: SpongeSpec, w: Word, lengths: Sequence[int]) -> np.ndarray:
    cum = w.cum_log
    offsets = spec.leaf_offset[w.symbols]
    out = np.empty(spec.d)
    for k in range(spec.d):
        L = lengths[k]
        out[k] = float(offsets[:L, k] @ np.exp(cum[k, :L]))
    return out


def box_of_word(spec: SpongeSpec, w: Word) -> Box:
    """Image of the unit cube under the composed maps of ``w``."""
    n = len(w)
    if n == 0:
        raise ValueError("empty word")
    lengths = [n] * spec.d
    edges = np.exp(w.cum_log[:, n])
    return _box_from_levels(_corner_by_level(spec, w, lengths), edges)


def approx_cube(spec: SpongeSpec, w: Word, n: int) -> Box:
    """Geometric box of the approximate cube ``B_n(w)``."""
    cut = cut_indices(spec, w, n)
    edges = np.array([w.cum_log[k, cut.L[k]] for k in range(spec.d)])
    return _box_from_levels(_corner_by_level(spec, w, cut.L), np.exp(edges))


def _symbol_log_factors(spec: SpongeSpec, p: ProbVector, symbols: np.ndarray, t: float):
    with np.errstate(divide="ignore"):
        log_pj = np.log(p.weights)[spec.leaf_j[symbols]]
        levels = []
        for k in range(1, spec.d - 1):
            levels.append(np.log(p.marginals[k])[spec.leaf_level_index[symbols, k - 1]])
    log_fib = np.log(fiber_factors(spec, t))[symbols]
    return log_pj, levels, log_fib


def log_cube_measure(spec: SpongeSpec, p: ProbVector, w: Word, n: int, t: float | None = None) -> float:
    """``log mu_p(B_n(w))`` from the product formula for approximate cubes."""
    cut = cut_indices(spec, w, n)
    if t is None:
        t = t_of_p(spec, p)
    syms = w.symbols[:n]
    log_pj, levels, log_fib = _symbol_log_factors(spec, p, syms, t)
    L = cut.L
    d = spec.d
    total = log_pj[: L[d - 2]].sum()
    for k in range(1, d - 1):
        total += levels[k - 1][L[k] : L[k - 1]].sum()
    total += log_fib[: L[d - 1]].sum()
    if not np.isfinite(total):
        raise ZeroMass("p assigns zero weight to a symbol used by the cube")
    return float(total)


def cube_measure(spec: SpongeSpec, p: ProbVector, w: Word, n: int) -> float:
    return math.exp(log_cube_measure(spec, p, w, n))


def sample_word(spec: SpongeSpec, p: ProbVector, n: int, seed) -> Word:
    """``n`` i.i.d. symbols from the Bernoulli measure ``mu_p``."""
    rng = np.random.default_rng(seed)
    probs = symbol_weights(spec, p).weights
    return Word(spec, rng.choice(len(probs), size=n, p=probs / probs.sum()))


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    trials: int
    seed: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n, "trials": self.trials, "seed": self.seed}


def local_dim_sample(spec: SpongeSpec, p: ProbVector, w: Word, n: int, t: float) -> float:
    """``log mu_p(B_n(w)) / sum_{l<=n} log c_l`` for one word."""
    return log_cube_measure(spec, p, w, n, t) / float(w.cum_log[0, n])


def pointwise_dim_estimate(spec: SpongeSpec, p: ProbVector, n: int, trials: int, seed: int) -> Estimate:
    """Monte-Carlo mean of the local dimension ratio over ``trials`` words.

    Trial ``i`` draws its word from a generator seeded with ``(seed, i)``.
    """
    if not p.interior:
        raise ValueError("p must be strictly positive")
    t = t_of_p(spec, p)
    vals = np.array(
        [local_dim_sample(spec, p, sample_word(spec, p, n, [seed, i]), n, t) for i in range(trials)]
    )
    stderr = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
    return Estimate(float(vals.mean()), stderr, n, trials, seed)


# --- n-approximations and box counting ---------------------------------


def approximation_arrays(spec: SpongeSpec, n: int, cap: int = 1_000_000) -> tuple[np.ndarray, np.ndarray]:
    """Corners and edges ``(N, d)`` of all order-``n`` basic boxes, coordinate order."""
    count = len(spec.leaves) ** n
    if count > cap:
        raise CapExceeded(f"{count} boxes exceed cap {cap}")
    offs = spec.leaf_offset
    ratios = np.exp(spec.leaf_log_ratio)
    corner = np.zeros((1, spec.d))
    scale = np.ones((1, spec.d))
    for _ in range(n):
        corner = (corner[:, None, :] + scale[:, None, :] * offs[None, :, :]).reshape(-1, spec.d)
        scale = (scale[:, None, :] * ratios[None, :, :]).reshape(-1, spec.d)
    return corner[:, ::-1].copy(), scale[:, ::-1].copy()


def enumerate_approximation(spec: SpongeSpec, n: int, cap: int = 1_000_000) -> list[Box]:
    corners, edges = approximation_arrays(spec, n, cap)
    return [Box(tuple(map(float, c)), tuple(map(float, e))) for c, e in zip(corners, edges)]


def _cells_of_boxes(corners: np.ndarray, edges: np.ndarray, delta: float, slack: float = 1e-9) -> int:
    lo = np.floor(corners / delta + slack).astype(np.int64)
    hi = np.ceil((corners + edges) / delta - slack).astype(np.int64) - 1
    hi = np.maximum(hi, lo)
    cells = set()
    for a, b in zip(lo, hi):
        for cell in itertools.product(*(range(x, y + 1) for x, y in zip(a, b))):
            cells.add(cell)
    return len(cells)


@dataclass(frozen=True)
class BoxCount:
    """Box-counting slope. An upper sanity indicator only; never equal to VP in general."""

    slope: float
    r2: float
    scales: tuple[float, ...]
    counts: tuple[int, ...]
    label: str = "sanity"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "slope": self.slope,
            "r2": self.r2,
            "scales": list(self.scales),
            "counts": list(self.counts),
        }


def box_count_estimate(data, scales: Sequence[float]) -> BoxCount:
    """Least-squares slope of ``log N(delta)`` against ``log(1/delta)``.

    ``data`` is either an ``(N, d)`` point array or a ``(corners, edges)`` pair /
    list of :class:`Box`.
    """
    scales = sorted(set(float(s) for s in scales), reverse=True)
    if len(scales) < 3:
        raise DegenerateScales("need at least 3 distinct scales")
    if isinstance(data, (list, tuple)) and data and isinstance(data[0], Box):
        corners = np.array([b.corner for b in data])
        edges = np.array([b.edges for b in data])
        counts = [_cells_of_boxes(corners, edges, s) for s in scales]
    elif isinstance(data, tuple) and len(data) == 2:
        corners, edges = (np.asarray(x, dtype=float) for x in data)
        counts = [_cells_of_boxes(corners, edges, s) for s in scales]
    else:
        pts = np.asarray(data, dtype=float)
        counts = [len(np.unique(np.floor(pts / s).astype(np.int64), axis=0)) for s in scales]
    x = np.log(1.0 / np.array(scales))
    y = np.log(np.array(counts, dtype=float))
    if np.ptp(x) == 0:
        raise DegenerateScales("scales collapse")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / sst if sst > 0 else 1.0
    return BoxCount(float(slope), r2, tuple(scales), tuple(int(c) for c in counts))
