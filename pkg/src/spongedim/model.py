"""Self-affine sponge specifications.

A sponge in ``R^d`` is described by a nested alphabet tree. A node at level
``k`` (``1 <= k <= d``) carries the contraction ratio ``a_{i^1...i^k}`` and the
translation ``u_{i^1...i^k}`` of the coordinate that level controls. Level 1
controls the last coordinate ``x_d`` (the coarsest direction) and level ``d``
controls ``x_1``.

Words are 0-based index tuples internally; everything user-facing uses dotted
1-based strings such as ``"2.1.3"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Sequence

import numpy as np

from .roots import bisect_newton

MORAN_TOL = 1e-12
_PACK_TOL = 1e-12


class PackingError(ValueError):
    """Requested sibling counts do not fit at the given ratio."""


class InfeasiblePerturbation(ValueError):
    """No admissible ratio exists for a node during perturbation."""


class DegenerateRange(ValueError):
    """``t_low == t_high``; the genericity hypothesis is vacuous."""


@dataclass(frozen=True)
class AlphabetNode:
    ratio: float
    offset: float = 0.0
    children: tuple["AlphabetNode", ...] = ()


@dataclass(frozen=True)
class Violation:
    path: tuple[int, ...]
    constraint: str
    message: str
    values: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "path": list(self.path),
            "constraint": self.constraint,
            "message": self.message,
            "values": list(self.values),
        }


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...] = ()

    def to_dict(self) -> dict:
        out: dict = {"ok": self.ok}
        if self.violations:
            out["violations"] = [v.to_dict() for v in self.violations]
        return out


def dotted(word: Sequence[int]) -> str:
    """``(1, 0, 2)`` -> ``"2.1.3"``."""
    return ".".join(str(i + 1) for i in word)


def parse_dotted(text: str) -> tuple[int, ...]:
    return tuple(int(part) - 1 for part in text.split("."))


@dataclass(frozen=True)
class SpongeSpec:
    """An iterated function system of diagonal affine maps of ``[0,1]^d``.

    ``tree`` holds the level-1 nodes; the root itself carries no ratio.
    """

    d: int
    tree: tuple[AlphabetNode, ...]

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        object.__setattr__(self, "tree", tuple(self.tree))

    # --- tree access -------------------------------------------------

    def node(self, word: Sequence[int]) -> AlphabetNode:
        nodes = self.tree
        cur = None
        for i in word:
            cur = nodes[i]
            nodes = cur.children
        if cur is None:
            raise KeyError("empty word has no node")
        return cur

    def iter_nodes(self) -> Iterator[tuple[tuple[int, ...], AlphabetNode]]:
        """Depth-first (preorder) walk yielding ``(word, node)``."""
        stack = [((i,), n) for i, n in reversed(list(enumerate(self.tree)))]
        while stack:
            word, node = stack.pop()
            yield word, node
            for i in reversed(range(len(node.children))):
                stack.append((word + (i,), node.children[i]))

    def words(self, level: int) -> list[tuple[int, ...]]:
        return self._words[level]

    @cached_property
    def _words(self) -> dict[int, list[tuple[int, ...]]]:
        out: dict[int, list[tuple[int, ...]]] = {k: [] for k in range(1, self.d + 1)}

        def walk(nodes, prefix):
            for i, n in enumerate(nodes):
                w = prefix + (i,)
                if len(w) <= self.d:
                    out[len(w)].append(w)
                    walk(n.children, w)

        walk(self.tree, ())
        return out

    @property
    def leaves(self) -> list[tuple[int, ...]]:
        return self._words[self.d]

    @property
    def j_words(self) -> list[tuple[int, ...]]:
        return self._words[self.d - 1]

    def ratio(self, word: Sequence[int]) -> float:
        return self.node(word).ratio

    # --- dense arrays used by the numerical code ----------------------

    @cached_property
    def level_log_ratios(self) -> dict[int, np.ndarray]:
        return {
            k: np.array([math.log(self.node(w).ratio) for w in self.words(k)])
            for k in range(1, self.d + 1)
        }

    @cached_property
    def j_groups(self) -> dict[int, np.ndarray]:
        """For level ``k < d``, map each J-word to its level-``k`` ancestor index."""
        out = {}
        for k in range(1, self.d):
            index = {w: n for n, w in enumerate(self.words(k))}
            out[k] = np.array([index[w[:k]] for w in self.j_words], dtype=np.intp)
        return out

    @cached_property
    def fiber_counts(self) -> np.ndarray:
        return np.array([len(self.node(w).children) for w in self.j_words], dtype=np.intp)

    @cached_property
    def fiber_log(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded ``(|J|, max m)`` array of fiber log-ratios and its mask."""
        counts = self.fiber_counts
        width = int(counts.max()) if len(counts) else 0
        logs = np.zeros((len(counts), width))
        mask = np.zeros((len(counts), width), dtype=bool)
        for n, w in enumerate(self.j_words):
            kids = self.node(w).children
            logs[n, : len(kids)] = [math.log(c.ratio) for c in kids]
            mask[n, : len(kids)] = True
        return logs, mask

    @cached_property
    def fiber_log_padded(self) -> np.ndarray:
        """``fiber_log`` with ``-inf`` in the padded slots."""
        logs, mask = self.fiber_log
        return np.where(mask, logs, -np.inf)

    @cached_property
    def leaf_j(self) -> np.ndarray:
        index = {w: n for n, w in enumerate(self.j_words)}
        return np.array([index[w[:-1]] for w in self.leaves], dtype=np.intp)

    @cached_property
    def leaf_log_ratio(self) -> np.ndarray:
        """``(|leaves|, d)``; column ``k-1`` holds the level-``k`` log-ratio."""
        return np.array(
            [[math.log(self.node(w[:k]).ratio) for k in range(1, self.d + 1)] for w in self.leaves]
        )

    @cached_property
    def leaf_offset(self) -> np.ndarray:
        """``(|leaves|, d)``; column ``k-1`` holds the level-``k`` offset."""
        return np.array(
            [[self.node(w[:k]).offset for k in range(1, self.d + 1)] for w in self.leaves]
        )

    @cached_property
    def leaf_level_index(self) -> np.ndarray:
        """``(|leaves|, d)`` index of each leaf's level-``k`` ancestor in ``words(k)``."""
        cols = []
        for k in range(1, self.d + 1):
            index = {w: n for n, w in enumerate(self.words(k))}
            cols.append([index[w[:k]] for w in self.leaves])
        return np.array(cols, dtype=np.intp).T

    # --- d = 3 aliases -----------------------------------------------

    @property
    def c(self) -> np.ndarray:
        return np.exp(self.level_log_ratios[1])

    @property
    def b(self) -> np.ndarray:
        return np.exp(self.level_log_ratios[2])

    def fiber(self, jword: Sequence[int]) -> np.ndarray:
        return np.array([ch.ratio for ch in self.node(jword).children])


# --- validation --------------------------------------------------------


def validate(spec: SpongeSpec) -> ValidationReport:
    """Check every structural and packing constraint of the tree.

    Violations are returned as data; nothing is raised.
    """
    out: list[Violation] = []

    def check_siblings(nodes, prefix, parent_ratio, level):
        if level <= spec.d and not nodes:
            out.append(Violation(prefix, "arity", f"level-{level - 1} node has no children"))
            return
        if level > spec.d:
            if nodes:
                out.append(Violation(prefix, "depth", f"tree deeper than d={spec.d}"))
            return
        total = 0.0
        for i, n in enumerate(nodes):
            w = prefix + (i,)
            total += n.ratio
            if not 0.0 < n.ratio < 1.0:
                out.append(Violation(w, "ratio_range", f"ratio {n.ratio} not in (0,1)", (n.ratio,)))
            if parent_ratio is not None and n.ratio > parent_ratio:
                out.append(
                    Violation(
                        w,
                        "nesting",
                        f"ratio {n.ratio} > parent ratio {parent_ratio}",
                        (n.ratio, parent_ratio),
                    )
                )
            if i == 0 and n.offset < 0.0:
                out.append(Violation(w, "offset_range", f"offset {n.offset} < 0", (n.offset,)))
            nxt = nodes[i + 1].offset if i + 1 < len(nodes) else 1.0
            if i + 1 < len(nodes) and not n.offset < nxt:
                out.append(
                    Violation(w, "offset_order", f"offset {nxt} <= {n.offset}", (n.offset, nxt))
                )
            if nxt - n.offset < n.ratio - _PACK_TOL:
                what = "gap" if i + 1 < len(nodes) else "tail gap"
                out.append(
                    Violation(
                        w,
                        "gap",
                        f"{what} {nxt - n.offset:.6g} < ratio {n.ratio:.6g}",
                        (nxt - n.offset, n.ratio),
                    )
                )
            check_siblings(n.children, w, n.ratio, level + 1)
        if total > 1.0 + _PACK_TOL:
            out.append(
                Violation(prefix, "ratio_sum", f"sibling ratio sum {total:.6g} > 1", (total,))
            )

    check_siblings(spec.tree, (), None, 1)
    return ValidationReport(ok=not out, violations=tuple(out))


def left_pack(nodes: Sequence[AlphabetNode]) -> tuple[AlphabetNode, ...]:
    """Place siblings at cumulative offsets, first one at 0."""
    out = []
    u = 0.0
    for n in nodes:
        out.append(AlphabetNode(n.ratio, u, n.children))
        u += n.ratio
    return tuple(out)


# --- Sierpinski construction -----------------------------------------


@dataclass(frozen=True)
class BaseTriple:
    """Reference ratios ``(a, b, c)`` for levels 3, 2, 1 plus a tolerance ``epsilon``.

    ``ordered`` is False when a fitted triple does not satisfy ``a <= b <= c``.
    """

    a: float
    b: float
    c: float
    epsilon: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "c"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name}={v} not in (0,1)")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")

    @property
    def ordered(self) -> bool:
        return self.a <= self.b <= self.c

    def level_ratios(self) -> tuple[float, float, float]:
        """Reference ratio per level 1, 2, 3."""
        return (self.c, self.b, self.a)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "epsilon": self.epsilon, "ordered": self.ordered}


def make_sierpinski(counts: Sequence[Sequence[int]], base: BaseTriple) -> SpongeSpec:
    """Build an ``(a, b, c; 0)`` sponge from level-wise child counts.

    ``counts[0] = (m,)``; ``counts[k]`` lists the child counts of the level-``k``
    nodes in order. So ``((2,), (2, 2), (2, 2, 2, 2))`` is the full 2x2x2 pattern.
    """
    if len(counts) != 3:
        raise ValueError("counts must have one row per level (d=3)")
    if not base.ordered:
        raise ValueError("base must satisfy a <= b <= c")
    ratios = base.level_ratios()
    for level, row in enumerate(counts):
        cap = ratios[level]
        for m in row:
            if m < 1:
                raise ValueError("every node needs at least one child")
            if m * cap > 1.0 + _PACK_TOL:
                raise PackingError(
                    f"{m} children of ratio {cap:.6g} at level {level + 1} exceed the unit edge"
                )

    cursor = [0] * 3

    def build(level: int) -> tuple[AlphabetNode, ...]:
        m = counts[level][cursor[level]]
        cursor[level] += 1
        kids = []
        for _ in range(m):
            sub = build(level + 1) if level + 1 < 3 else ()
            kids.append(AlphabetNode(ratios[level], 0.0, sub))
        return left_pack(kids)

    tree = build(0)
    for level in range(3):
        if cursor[level] != len(counts[level]):
            raise ValueError(
                f"counts row {level} has {len(counts[level])} entries, tree uses {cursor[level]}"
            )
    return SpongeSpec(3, tree)


# --- perturbation ------------------------------------------------------


def perturb(spec: SpongeSpec, epsilon: float, seed: int) -> SpongeSpec:
    """Multiply each ratio by ``exp(delta)``, ``delta ~ U[-eps, eps]`` per node.

    Draws happen in preorder from one generator, so the output is a function of
    ``(spec, epsilon, seed)``. A draw is clamped when it would break nesting
    (child above its new parent) or the sibling sum bound, reserving room for
    the later siblings' smallest admissible ratios. Every new ratio stays within
    ``exp(+-epsilon)`` of the old one. Offsets are left-packed.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    rng = np.random.default_rng(seed)
    shrink = math.exp(-epsilon)
    grow = math.exp(epsilon)
    below_one = math.nextafter(1.0, 0.0)

    def redo(nodes: Sequence[AlphabetNode], parent_ratio: float) -> tuple[AlphabetNode, ...]:
        deltas = rng.uniform(-epsilon, epsilon, size=len(nodes)) if epsilon > 0 else np.zeros(len(nodes))
        floors = [min(n.ratio * shrink, parent_ratio) for n in nodes]
        used = 0.0
        new = []
        for i, n in enumerate(nodes):
            room = 1.0 - used - sum(floors[i + 1 :])
            hi = min(parent_ratio, room, below_one, n.ratio * grow)
            lo = floors[i]
            if lo > hi * (1 + 1e-15):
                raise InfeasiblePerturbation(f"no admissible ratio for sibling {i}")
            r = min(max(n.ratio * math.exp(deltas[i]), lo), hi)
            used += r
            new.append((r, n))
        out = []
        for r, n in new:
            out.append(AlphabetNode(r, 0.0, redo(n.children, r) if n.children else ()))
        return left_pack(out)

    if not validate(spec).ok:
        raise InfeasiblePerturbation("input spec is not valid")
    return SpongeSpec(spec.d, redo(spec.tree, below_one))


# --- classification against a base triple ------------------------------


def _level_extremes(spec: SpongeSpec) -> dict[int, tuple[float, float]]:
    return {k: (float(v.min()), float(v.max())) for k, v in spec.level_log_ratios.items()}


def classify(spec: SpongeSpec, base: BaseTriple) -> float:
    """Smallest ``eps`` such that ``spec`` is an ``(a, b, c; eps)``-sponge."""
    if spec.d != 3:
        raise ValueError("classify is defined for d=3")
    worst = 0.0
    for k, ref in zip((1, 2, 3), base.level_ratios()):
        logs = spec.level_log_ratios[k]
        worst = max(worst, float(np.max(np.abs(logs - math.log(ref)))))
    return worst


def fit_base(spec: SpongeSpec) -> BaseTriple:
    """Per-level log-midpoint of the ratio range, the sup-norm minimiser.

    The returned triple's ``ordered`` property reports whether ``a <= b <= c``;
    levels are never swapped.
    """
    if spec.d != 3:
        raise ValueError("fit_base is defined for d=3")
    ext = _level_extremes(spec)
    c, b, a = (math.exp(0.5 * (ext[k][0] + ext[k][1])) for k in (1, 2, 3))
    base = BaseTriple(a, b, c)
    return BaseTriple(a, b, c, classify(spec, base))


# --- fiber Moran roots -------------------------------------------------


def moran_root(ratios: Sequence[float] | np.ndarray, tol: float = MORAN_TOL) -> float:
    """Unique ``t`` in ``[0, 1]`` with ``sum(r**t) == 1``."""
    logs = np.log(np.asarray(ratios, dtype=float))
    if len(logs) == 1:
        return 0.0

    def g(t):
        return float(np.exp(t * logs).sum()) - 1.0

    def dg(t):
        return float((np.exp(t * logs) * logs).sum())

    g1 = g(1.0)
    if g1 >= 0.0:
        return 1.0
    return bisect_newton(g, 0.0, 1.0, dg, xtol=tol, f_lo=float(len(logs) - 1), f_hi=g1)


@dataclass(frozen=True)
class TBounds:
    t_low: float
    t_high: float
    per_pair: dict[tuple[int, ...], float] = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.t_high - self.t_low

    def to_dict(self) -> dict:
        return {
            "t_low": self.t_low,
            "t_high": self.t_high,
            "per_pair": {dotted(w): t for w, t in self.per_pair.items()},
        }


def t_bounds(spec: SpongeSpec) -> TBounds:
    per = {w: moran_root(spec.fiber(w)) for w in spec.j_words}
    vals = list(per.values())
    return TBounds(min(vals), max(vals), per)


@dataclass(frozen=True)
class HipReport:
    """Grid surrogate for the genericity hypothesis.

    ``witnesses[n]`` is ``(parent, j, j')`` (0-based) where two sibling fibers
    have different power sums at ``grid[n]``, or ``None``. This checks finitely
    many ``t`` values and proves nothing between them.
    """

    holds: bool
    grid: tuple[float, ...]
    witnesses: tuple[Optional[tuple[tuple[int, ...], int, int]], ...]
    note: str = "finite grid check over the open interval (t_low, t_high); not a proof"

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "note": self.note,
            "grid": list(self.grid),
            "witnesses": [
                None if w is None else {"parent": dotted(w[0]), "j": w[1] + 1, "j_prime": w[2] + 1}
                for w in self.witnesses
            ],
        }


def fiber_power_sums(spec: SpongeSpec, t: float) -> np.ndarray:
    """``sum_k a_{Jk}^t`` for every J-word."""
    logs, mask = spec.fiber_log
    return np.where(mask, np.exp(t * logs), 0.0).sum(axis=1)


def check_hip(spec: SpongeSpec, grid_size: int = 101, rtol: float = 1e-10) -> HipReport:
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    tb = t_bounds(spec)
    if tb.t_high - tb.t_low <= MORAN_TOL:
        raise DegenerateRange(f"t_low == t_high == {tb.t_low:.12g}")
    grid = np.linspace(tb.t_low, tb.t_high, grid_size + 2)[1:-1]
    parents: dict[tuple[int, ...], list[int]] = {}
    for n, w in enumerate(spec.j_words):
        parents.setdefault(w[:-1], []).append(n)
    witnesses = []
    for t in grid:
        sums = fiber_power_sums(spec, float(t))
        found = None
        for parent, members in parents.items():
            ref = sums[members[0]]
            for pos, n in enumerate(members[1:], start=1):
                if abs(sums[n] - ref) > rtol * max(abs(sums[n]), abs(ref)):
                    found = (parent, 0, pos)
                    break
            if found:
                break
        witnesses.append(found)
    return HipReport(
        holds=all(w is not None for w in witnesses),
        grid=tuple(float(t) for t in grid),
        witnesses=tuple(witnesses),
    )
