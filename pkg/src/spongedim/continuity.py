"""Perturbation experiments around Sierpinski sponges.

``sweep`` perturbs a Sierpinski spec at several sizes ``eps`` and records how
far VP moves; the fitted envelope constant ``C_hat`` is the empirical
stand-in for the Lipschitz constant of VP at the base. ``sandwich_check``
tests fresh perturbations against that envelope. Hausdorff dimension itself
is never computed; only the interval ``[VP, VP + C eps]`` that is known to
contain it.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .measures import ProbVector, dim_formula
from .model import (
    AlphabetNode,
    BaseTriple,
    DegenerateRange,
    SpongeSpec,
    classify,
    fit_base,
    left_pack,
    perturb,
    t_bounds,
)
from .symbolic import Word, cut_indices_all, cut_threshold, sample_word
from .variational import VPResult, vp

DEFAULT_GRID = (0.0025, 0.005, 0.01, 0.02, 0.04)
BASE_TOL = 1e-12
INSIDE_TOL = 1e-9


class NotSierpinski(ValueError):
    pass


def cell_seed(seed: int, eps_index: int, k: int) -> int:
    """Deterministic 32-bit seed for sweep cell ``(eps_index, k)``."""
    return int(np.random.SeedSequence([seed, eps_index, k]).generate_state(1)[0])


def workers() -> int:
    """Worker count from ``SPONGE_THREADS`` (default 1, sequential)."""
    try:
        return max(1, int(os.environ.get("SPONGE_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    n = workers()
    if n == 1 or len(items) < 2:
        return [fn(*x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, *zip(*items)))


def base_triple(spec: SpongeSpec) -> BaseTriple:
    """The level triple of a Sierpinski spec; raises if ratios are not level-constant."""
    base = fit_base(spec)
    if base.epsilon > BASE_TOL:
        raise NotSierpinski(f"ratios deviate from level constants by eps={base.epsilon:.3g}")
    return BaseTriple(base.a, base.b, base.c)


# --- sweep -------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    seed: int
    vp: float
    deviation: float
    realized_eps: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "seed": self.seed,
            "vp": self.vp,
            "deviation": self.deviation,
            "realized_eps": self.realized_eps,
            "converged": self.converged,
        }


@dataclass(frozen=True, eq=False)
class SweepReport:
    base: BaseTriple
    rows: list
    C_hat: float
    C_ls: float
    linearity_r2: float
    excluded: int
    vp0: float
    argmax0: np.ndarray = field(repr=False)

    def max_deviations(self) -> list[tuple[float, float]]:
        """``(eps, max deviation over converged seeds)`` for each ``eps > 0``."""
        out = {}
        for r in self.rows:
            if r.epsilon > 0 and r.converged:
                out[r.epsilon] = max(out.get(r.epsilon, 0.0), r.deviation)
        return sorted(out.items())

    def ratio_spread(self) -> float:
        """max / median of ``max deviation / eps`` over the grid."""
        ratios = [m / e for e, m in self.max_deviations()]
        if not ratios:
            return math.nan
        med = float(np.median(ratios))
        return max(ratios) / med if med > 0 else math.inf

    def diagnostics(self) -> dict:
        """Alternative linearity measures, reported alongside ``linearity_r2``.

        ``r2_uncentered`` is ``1 - SS_res / sum(y^2)``, the no-intercept convention;
        ``within_factor3`` asks whether every maximum lies in ``[C_ls eps / 3, 3 C_ls eps]``.
        """
        pts = self.max_deviations()
        if not pts:
            return {"r2_uncentered": math.nan, "within_factor3": True}
        x = np.array([e for e, _ in pts])
        y = np.array([m for _, m in pts])
        ss = float(y @ y)
        r2u = 1.0 - float(((y - self.C_ls * x) ** 2).sum()) / ss if ss > 0 else math.nan
        fit = self.C_ls * x
        return {"r2_uncentered": r2u, "within_factor3": bool(np.all((y <= 3 * fit) & (3 * y >= fit)))}

    def summary(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "vp0": self.vp0,
            "C_hat": self.C_hat,
            "C_ls": self.C_ls,
            "linearity_r2": self.linearity_r2,
            "ratio_spread": self.ratio_spread(),
            **self.diagnostics(),
            "excluded": self.excluded,
            "rows": len(self.rows),
            "max_deviations": [[e, m] for e, m in self.max_deviations()],
        }


def fit_envelope(eps: Sequence[float], dev: Sequence[float]) -> tuple[float, float, float]:
    """Least squares ``dev ~ C eps`` through the origin, then inflate to dominate.

    Returns ``(C_hat, C_ls, r2)``. ``r2`` is the centered coefficient of
    determination of the through-origin fit (nan with fewer than two points
    or zero variance).
    """
    x = np.asarray(eps, dtype=float)
    y = np.asarray(dev, dtype=float)
    if x.size == 0:
        return 0.0, 0.0, math.nan
    c_ls = float(x @ y / (x @ x))
    c_hat = max(c_ls, float(np.max(y / x)))
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(((y - c_ls * x) ** 2).sum()) / ss_tot if x.size > 1 and ss_tot > 0 else math.nan
    return c_hat, c_ls, r2


def _sweep_cell(base_spec, eps, seed, starts, init):
    spec = perturb(base_spec, eps, seed)
    res = vp(spec, starts=starts, seed=seed, init=[init])
    return res.value, res.converged


def sweep(
    base_spec: SpongeSpec,
    eps_grid: Sequence[float] = DEFAULT_GRID,
    K: int = 8,
    seed: int = 0,
    starts: int = 4,
    base_starts: int = 16,
) -> SweepReport:
    """Perturb ``base_spec`` ``K`` times at each ``eps`` and fit the VP envelope.

    Each perturbed VP run is warm-started at the base optimiser in addition to
    its ``starts`` own starting points. A zero entry in ``eps_grid`` is folded
    into the single unperturbed row.
    """
    tb = t_bounds(base_spec)
    if not tb.t_low < tb.t_high:
        raise DegenerateRange("base spec has t_low == t_high")
    base = base_triple(base_spec)
    res0 = vp(base_spec, starts=base_starts, seed=seed)
    grid = sorted({float(e) for e in eps_grid if e > 0})
    if any(e < 0 for e in eps_grid):
        raise ValueError("eps must be >= 0")

    cells = [(i, e, k, cell_seed(seed, i, k)) for i, e in enumerate(grid) for k in range(K)]
    w0 = res0.argmax.weights
    results = _pmap(_sweep_cell, [(base_spec, e, s, starts, w0) for _, e, _, s in cells])

    rows = [SweepRow(0.0, seed, res0.value, 0.0, 0.0, res0.converged)]
    for (_, e, _, s), (value, conv) in zip(cells, results):
        realized = classify(perturb(base_spec, e, s), base)
        rows.append(SweepRow(e, s, value, abs(value - res0.value), realized, conv))
    excluded = sum(1 for r in rows if not r.converged)

    report = SweepReport(base, rows, 0.0, 0.0, math.nan, excluded, res0.value, w0)
    maxima = report.max_deviations()
    c_hat, c_ls, r2 = fit_envelope([e for e, _ in maxima], [m for _, m in maxima])
    return SweepReport(base, rows, c_hat, c_ls, r2, excluded, res0.value, w0)


# --- hold-out sandwich -------------------------------------------------


@dataclass(frozen=True)
class SandwichReport:
    epsilon: float
    vp_eps: float
    vp_base: float
    C_hat: float
    lower: float
    upper: float
    inside: bool
    hd_bracket: tuple[float, float]
    note: str = "hd is bracketed, not computed"

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "vp_eps": self.vp_eps,
            "vp_base": self.vp_base,
            "C_hat": self.C_hat,
            "lower": self.lower,
            "upper": self.upper,
            "inside": self.inside,
            "hd_bracket": list(self.hd_bracket),
            "note": self.note,
        }


def sandwich_check(
    spec_eps: SpongeSpec,
    base_spec: SpongeSpec,
    C_hat: float,
    vp_base: Optional[VPResult] = None,
    vp_eps: Optional[VPResult] = None,
    starts: int = 4,
    seed: int = 0,
) -> SandwichReport:
    """Is ``|VP(spec_eps) - VP(base)| <= C_hat * eps``?

    ``eps`` is the classification of ``spec_eps`` against the base triple.
    The report also carries ``[VP(eps), VP(eps) + C_hat eps]``, the interval
    that brackets the Hausdorff dimension of the perturbed sponge.
    """
    base = base_triple(base_spec)
    eps = classify(spec_eps, base)
    if vp_base is None:
        vp_base = vp(base_spec, seed=seed)
    if vp_eps is None:
        vp_eps = vp(spec_eps, starts=starts, seed=seed, init=[vp_base.argmax.weights])
    lower = vp_base.value - C_hat * eps
    upper = vp_base.value + C_hat * eps
    inside = lower - INSIDE_TOL <= vp_eps.value <= upper + INSIDE_TOL
    return SandwichReport(
        eps, vp_eps.value, vp_base.value, C_hat, lower, upper, bool(inside),
        (vp_eps.value, vp_eps.value + C_hat * eps),
    )


# --- transfer of the base optimiser -------------------------------------


def lower_bound_gap(spec_eps: SpongeSpec, base_spec: SpongeSpec, vp_base: Optional[VPResult] = None) -> float:
    """``VP(base) - dim_formula(spec_eps, p*)`` with ``p*`` the base optimiser.

    The two specs must share the alphabet. The sign is not fixed: the
    perturbed spec may do better or worse at ``p*``.
    """
    if spec_eps.j_words != base_spec.j_words or spec_eps.leaves != base_spec.leaves:
        raise ValueError("specs do not share an alphabet")
    if vp_base is None:
        vp_base = vp(base_spec)
    p = ProbVector.from_array(spec_eps, vp_base.argmax.weights)
    return vp_base.value - dim_formula(spec_eps, p)


def scale_ratios(spec: SpongeSpec, epsilon: float, levels: Sequence[int] = (3,)) -> SpongeSpec:
    """Multiply every ratio on the given levels by ``exp(-epsilon)`` (offsets left-packed)."""
    shrink = math.exp(-epsilon)

    def redo(nodes, level):
        out = []
        for n in nodes:
            r = n.ratio * shrink if level in levels else n.ratio
            out.append(AlphabetNode(r, 0.0, redo(n.children, level + 1) if n.children else ()))
        return left_pack(out)

    return SpongeSpec(spec.d, redo(spec.tree, 1))


def t_shift_first_order(t: float, a: float, epsilon: float) -> float:
    """First-order change of ``t(p)`` when all leaf ratios ``a`` become ``a exp(-eps)``."""
    return -epsilon * t / (-math.log(a))


# --- cut-index ratio bands ----------------------------------------------


@dataclass(frozen=True)
class LBoundsReport:
    epsilon: float
    n: int
    samples: int
    A: float
    A1: float
    A2: float
    rho1: float
    rho2: float
    violations1: int
    violations2: int
    band1: tuple[float, float]
    band2: tuple[float, float]
    formula: str = "A = (1 + log c/log b) / (|log b| - eps); the a-level analogue is (1 + log c/log a) / (|log a| - eps) <= A"

    @property
    def violations(self) -> int:
        return self.violations1 + self.violations2

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "n": self.n,
            "samples": self.samples,
            "A": self.A,
            "A1": self.A1,
            "A2": self.A2,
            "rho1": self.rho1,
            "rho2": self.rho2,
            "violations1": self.violations1,
            "violations2": self.violations2,
            "band1": list(self.band1),
            "band2": list(self.band2),
            "formula": self.formula,
        }


def l_band_constant(base: BaseTriple, epsilon: float) -> tuple[float, float]:
    """``(A1, A2)``: the half-widths per unit ``eps`` of the ``L^1/n`` and ``L^2/n`` bands.

    With every level-k log-ratio within ``eps`` of its base value, the cut index
    satisfies ``(|log c| - eps)/(|log b| + eps) - 1/n < L^1/n <= (|log c| + eps)/(|log b| - eps)``,
    and both sides are within ``A1 eps`` of ``log c / log b``.
    """
    lb, la = -math.log(base.b), -math.log(base.a)
    if epsilon >= lb:
        raise ValueError("eps must be below |log b|")
    rho1 = math.log(base.c) / math.log(base.b)
    rho2 = math.log(base.c) / math.log(base.a)
    return (1 + rho1) / (lb - epsilon), (1 + rho2) / (la - epsilon)


def check_L_ratio_bounds(
    spec_eps: SpongeSpec, base: BaseTriple, samples: int, n: int, seed: int, epsilon: Optional[float] = None
) -> LBoundsReport:
    """Count sampled words whose ``L_n^1/n`` or ``L_n^2/n`` leaves its band.

    Words are drawn from the uniform-weight Bernoulli measure; sample ``i`` uses
    the generator seeded with ``(seed, i)``. ``epsilon`` defaults to the
    classification of ``spec_eps`` against ``base``.
    """
    if spec_eps.d != 3:
        raise ValueError("check_L_ratio_bounds is defined for d=3")
    if n < cut_threshold(spec_eps):
        raise ValueError(f"n={n} below threshold")
    eps = classify(spec_eps, base) if epsilon is None else float(epsilon)
    A1, A2 = l_band_constant(base, eps)
    rho1 = math.log(base.c) / math.log(base.b)
    rho2 = math.log(base.c) / math.log(base.a)
    p = ProbVector.uniform(spec_eps)
    slack = 1e-12
    r1, r2 = [], []
    for i in range(samples):
        w = sample_word(spec_eps, p, n, [seed, i])
        L = cut_indices_all(spec_eps, w, [n])[0]
        r1.append(L[1] / n)
        r2.append(L[2] / n)
    r1, r2 = np.array(r1), np.array(r2)
    # cut_indices_all caps L at n, which cannot create a violation: both lower edges are below 1
    v1 = int(np.sum((r1 < rho1 - 1 / n - A1 * eps - slack) | (r1 > rho1 + A1 * eps + slack)))
    v2 = int(np.sum((r2 < rho2 - 1 / n - A2 * eps - slack) | (r2 > rho2 + A2 * eps + slack)))
    return LBoundsReport(
        eps, n, samples, max(A1, A2), A1, A2, rho1, rho2, v1, v2,
        (float(r1.min()), float(r1.max())), (float(r2.min()), float(r2.max())),
    )
