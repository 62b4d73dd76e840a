"""Variational dimension VP and the two-parameter family of Bernoulli weights.

``vp`` maximises ``dim_formula`` over the simplex on J-words.
``vp_grid_oracle`` is an independent brute-force check of it that shares no
solver code with ``vp``.

The family solver (d = 3) works with the ansatz

    p_ij = C * c_i**lam1 * b_ij**lam2 * S_ij**alpha * gamma_i**(rho - 1),
    gamma_i = sum_j b_ij**lam2 * S_ij**alpha,   S_ij = sum_k a_ijk**t,

with ``C`` normalising ``p``. Three nested monotone solves fix
``F(alpha) = sum p_ij log S_ij = 0``, then ``C = 1`` in ``lam1``, then
``H = sum_i p_i log gamma_i = 0`` in ``lam2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .measures import ProbVector, dim_formula, dim_from_weights, lambda_k, t_of_p, xlogx
from .model import BaseTriple, DegenerateRange, SpongeSpec, check_hip, t_bounds
from .roots import NoBracket, bisect_newton, expand_bracket

# --- simplex projection ------------------------------------------------


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = 1}`` (sort-and-threshold)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    out = np.maximum(v - theta, 0.0)
    return out / out.sum()


# --- VP by projected ascent ------------------------------------------


class TooManyWords(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VPResult:
    value: float
    argmax: ProbVector
    starts: int
    spread: float
    interior: bool
    converged: bool
    n_converged: int
    iterations: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "argmax": self.argmax.to_mapping(),
            "starts": self.starts,
            "spread": self.spread,
            "interior": self.interior,
            "converged": self.converged,
            "n_converged": self.n_converged,
            "iterations": self.iterations,
        }


def _objective(spec: SpongeSpec, x: np.ndarray, t_hint: float) -> float:
    return dim_from_weights(spec, x / x.sum(), t_hint)


def _gradient(spec: SpongeSpec, p: np.ndarray, h: float) -> np.ndarray:
    t0 = t_of_p(spec, p)
    g = np.empty_like(p)
    f0 = None
    for i in range(len(p)):
        up = p.copy()
        up[i] += h
        if p[i] >= h:
            dn = p.copy()
            dn[i] -= h
            g[i] = (_objective(spec, up, t0) - _objective(spec, dn, t0)) / (2 * h)
        else:
            if f0 is None:
                f0 = _objective(spec, p, t0)
            g[i] = (_objective(spec, up, t0) - f0) / h
    return g


def _ascend(spec, p0, max_iter, tol, h=1e-6):
    p = project_simplex(p0)
    f = dim_from_weights(spec, p)
    step = 0.1
    for it in range(1, max_iter + 1):
        g = _gradient(spec, p, h)
        pg_norm = float(np.linalg.norm(project_simplex(p + g) - p))
        if pg_norm < tol:
            return p, f, True, it
        while True:
            q = project_simplex(p + step * g)
            fq = dim_from_weights(spec, q)
            if fq >= f + 1e-4 * float(g @ (q - p)):
                break
            step *= 0.5
            if step < 1e-14:
                return p, f, False, it
        p, f = q, fq
        step = min(step * 2.0, 1e3)
    return p, f, False, max_iter


def vp(
    spec: SpongeSpec,
    starts: int = 16,
    max_iter: int = 2000,
    tol: float = 1e-7,
    seed: int = 0,
    init: Optional[Sequence[np.ndarray]] = None,
) -> VPResult:
    """Multi-start projected gradient ascent of ``dim_formula`` on the simplex.

    Start 0 is the barycentre; the remaining ``starts - 1`` are symmetric
    Dirichlet(1) draws from ``default_rng(seed)``. ``init`` adds extra starting
    points (e.g. a neighbouring spec's optimiser). Gradients are central
    differences with step 1e-6 (forward at the boundary). A start converges
    when the projected-gradient norm drops below ``tol``. Non-convergence is
    reported through ``converged``, never raised.
    """
    n = len(spec.j_words)
    rng = np.random.default_rng(seed)
    points = [np.full(n, 1.0 / n)]
    points += [rng.dirichlet(np.ones(n)) for _ in range(max(starts - 1, 0))]
    if init is not None:
        points += [np.asarray(x, dtype=float) for x in init]
    runs = [_ascend(spec, x, max_iter, tol) for x in points] if n > 1 else [(np.ones(1), 0.0, True, 0)]
    best = max(runs, key=lambda r: r[1])
    conv_vals = [r[1] for r in runs if r[2]]
    spread = float(max(conv_vals) - min(conv_vals)) if conv_vals else math.nan
    p = ProbVector.from_array(spec, best[0])
    return VPResult(
        value=dim_formula(spec, p),
        argmax=p,
        starts=len(points),
        spread=spread,
        interior=p.interior,
        converged=bool(best[2]),
        n_converged=len(conv_vals),
        iterations=int(sum(r[3] for r in runs)),
    )


# --- brute-force grid oracle ------------------------------------------


def _compositions(total: int, parts: int):
    """Yield ``(k, parts)`` int arrays of all compositions, chunked by leading coordinates."""
    if parts == 1:
        yield np.array([[total]])
        return
    if parts == 2:
        a = np.arange(total + 1)
        yield np.stack([a, total - a], axis=1)
        return
    for head in itertools.product(range(total + 1), repeat=parts - 2):
        rest = total - sum(head)
        if rest < 0:
            continue
        a = np.arange(rest + 1)
        block = np.empty((rest + 1, parts), dtype=np.int64)
        block[:, : parts - 2] = head
        block[:, parts - 2] = a
        block[:, parts - 1] = rest - a
        yield block


def _batch_dim(spec: SpongeSpec, W: np.ndarray, bisections: int = 6, newton: int = 6) -> np.ndarray:
    """``dim_formula`` for each row of ``W``.

    ``t`` comes from a few vectorised bisections followed by Newton steps
    from the left end of the bracket. The Moran functional is convex and
    decreasing in ``t``, so Newton from the left never overshoots.
    """
    total = np.zeros(len(W))
    prev = np.zeros(len(W))
    for k in range(1, spec.d):
        ind = np.zeros((len(spec.j_words), len(spec.words(k))))
        ind[np.arange(len(spec.j_words)), spec.j_groups[k]] = 1.0
        Pk = W @ ind
        ent = xlogx(Pk).sum(axis=1)
        total += (ent - prev) / (Pk @ spec.level_log_ratios[k])
        prev = ent
    logs = spec.fiber_log_padded
    finite = np.where(np.isfinite(logs), logs, 0.0)
    lo = np.zeros(len(W))
    hi = np.ones(len(W))
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        S = np.exp(mid[:, None, None] * logs[None]).sum(axis=2)
        pos = np.einsum("ij,ij->i", W, np.log(S)) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    t = lo
    for _ in range(newton):
        # t = 0 only for rows whose root is 0; padded slots must still vanish there
        P = np.exp(np.maximum(t, 1e-300)[:, None, None] * logs[None])
        S = P.sum(axis=2)
        G = np.einsum("ij,ij->i", W, np.log(S))
        dG = np.einsum("ij,ij->i", W, (P * finite[None]).sum(axis=2) / S)
        step = np.where(dG < 0, -G / np.where(dG < 0, dG, -1.0), 0.0)
        t = np.clip(t + np.maximum(step, 0.0), 0.0, hi)
    return total + t


def vp_grid_oracle(spec: SpongeSpec, resolution: int, chunk: int = 200_000) -> tuple[float, np.ndarray]:
    """Max of ``dim_formula`` over the simplex grid with ``resolution`` subdivisions.

    Returns ``(value, argmax weights)``.
    """
    n = len(spec.j_words)
    if n > 4:
        raise TooManyWords(f"|J| = {n} > 4")
    best, arg = -math.inf, None
    buf = []
    size = 0

    def flush():
        nonlocal best, arg, buf, size
        if not buf:
            return
        W = np.concatenate(buf).astype(float) / resolution
        vals = _batch_dim(spec, W)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, arg = float(vals[i]), W[i]
        buf, size = [], 0

    for block in _compositions(resolution, n):
        buf.append(block)
        size += len(block)
        if size >= chunk:
            flush()
    flush()
    return best, arg


# --- the family cascade (d = 3) ----------------------------------------


class CascadeError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _segment_logsumexp(x: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    mx = np.full(n_groups, -np.inf)
    np.maximum.at(mx, groups, x)
    return mx + np.log(np.bincount(groups, weights=np.exp(x - mx[groups]), minlength=n_groups))


@dataclass
class _State:
    logp: np.ndarray
    p: np.ndarray
    p_i: np.ndarray
    log_gamma: np.ndarray
    log_C: float
    F: float
    dF: float


class _Family:
    """Fixed ``(spec, t)`` data for the cascade."""

    def __init__(self, spec: SpongeSpec, t: float):
        if spec.d != 3:
            raise ValueError("the family solver is defined for d=3")
        self.spec = spec
        self.t = t
        self.groups = spec.j_groups[1]
        self.m = len(spec.words(1))
        self.log_c = spec.level_log_ratios[1]
        self.log_b = spec.level_log_ratios[2]
        logs, mask = spec.fiber_log
        self.ls = np.log(np.where(mask, np.exp(t * logs), 0.0).sum(axis=1))
        self._alpha_hint = 0.0
        self._lam1_hint = 0.0

    def state(self, alpha: float, lam1: float, lam2: float, rho: float) -> _State:
        g = self.groups
        x = lam2 * self.log_b + alpha * self.ls
        log_gamma = _segment_logsumexp(x, g, self.m)
        y = lam1 * self.log_c + rho * log_gamma
        ymax = y.max()
        log_Z = ymax + math.log(np.exp(y - ymax).sum())
        logp = lam1 * self.log_c[g] + x + (rho - 1.0) * log_gamma[g] - log_Z
        p = np.exp(logp)
        p_i = np.exp(y - log_Z)
        ls = self.ls
        F = float(p @ ls)
        m_i = np.bincount(g, weights=p * ls, minlength=self.m) / p_i
        within = float(p @ ls**2) - float(p_i @ m_i**2)
        between = float(p_i @ m_i**2) - F * F
        return _State(logp, p, p_i, log_gamma, -log_Z, F, rho * between + within)

    def limits(self) -> tuple[float, float]:
        """``(log B_t, log A_t)``: limits of F as alpha -> -inf / +inf."""
        return float(self.ls.min()), float(self.ls.max())

    def alpha(self, lam1: float, lam2: float, rho: float) -> float:
        if np.ptp(self.ls) == 0.0:
            if self.ls[0] == 0.0:
                return 0.0
            lb, la = self.limits()
            raise NoBracket("all fiber sums coincide; F is constant", lb, la)

        def F(a):
            return self.state(a, lam1, lam2, rho).F

        def dF(a):
            return self.state(a, lam1, lam2, rho).dF

        try:
            lo, hi, flo, fhi = expand_bracket(F, center=self._alpha_hint, width=1.0)
        except NoBracket as exc:
            lb, la = self.limits()
            raise NoBracket(
                f"F keeps one sign for |alpha| <= 1e6 (log B_t={lb:.6g}, log A_t={la:.6g})",
                exc.lo_value,
                exc.hi_value,
            ) from None
        a = bisect_newton(F, lo, hi, dF, xtol=1e-13, f_lo=flo, f_hi=fhi)
        self._alpha_hint = a
        return a

    def log_C(self, lam1: float, lam2: float, rho: float) -> float:
        return self.state(self.alpha(lam1, lam2, rho), lam1, lam2, rho).log_C

    def lambda1(self, lam2: float, rho: float) -> float:
        def g(l1):
            return self.log_C(l1, lam2, rho)

        def dg(l1):
            st = self.state(self._alpha_hint, l1, lam2, rho)
            return -float(st.p_i @ self.log_c)

        lo, hi, glo, ghi = expand_bracket(g, center=self._lam1_hint, width=1.0)
        l1 = bisect_newton(g, lo, hi, dg, xtol=1e-13, f_lo=glo, f_hi=ghi)
        # leave alpha consistent with the returned lam1
        self.alpha(l1, lam2, rho)
        self._lam1_hint = l1
        return l1

    def H(self, lam2: float, rho: float) -> float:
        l1 = self.lambda1(lam2, rho)
        st = self.state(self._alpha_hint, l1, lam2, rho)
        return float(st.p_i @ st.log_gamma)


@dataclass(frozen=True)
class AlphaRoot:
    alpha: float
    residual: float
    degenerate: bool = False


def solve_alpha(spec: SpongeSpec, lam1: float, lam2: float, t: float, rho: float) -> AlphaRoot:
    """Unique ``alpha`` with ``F(alpha, lam1, lam2, t, rho) = 0``.

    If every fiber sum coincides at ``t`` and equals 1, every alpha is a root
    and ``alpha = 0`` is returned with ``degenerate=True``.
    """
    fam = _Family(spec, t)
    a = fam.alpha(lam1, lam2, rho)
    degenerate = bool(np.ptp(fam.ls) == 0.0)
    return AlphaRoot(a, fam.state(a, lam1, lam2, rho).F, degenerate)


def family_F(spec: SpongeSpec, alpha: float, lam1: float, lam2: float, t: float, rho: float) -> float:
    return _Family(spec, t).state(alpha, lam1, lam2, rho).F


def family_log_C(spec: SpongeSpec, alpha: float, lam1: float, lam2: float, t: float, rho: float) -> float:
    return _Family(spec, t).state(alpha, lam1, lam2, rho).log_C


def solve_lambda1(spec: SpongeSpec, lam2: float, t: float, rho: float) -> float:
    """Unique ``lam1`` with ``C(alpha(lam1), lam1, lam2, t, rho) = 1``."""
    return _Family(spec, t).lambda1(lam2, rho)


@dataclass(frozen=True)
class Lambda2Roots:
    roots: tuple[float, ...]
    chosen: float
    multiple: bool
    residual: float


def _lambda2_roots(fam: _Family, rho: float, lo: float, hi: float, points: int) -> Lambda2Roots:
    grid = np.linspace(lo, hi, points)
    vals = []
    for x in grid:
        try:
            vals.append(fam.H(float(x), rho))
        except NoBracket:
            vals.append(math.nan)
    vals = np.array(vals)
    roots = []
    for i in range(len(grid) - 1):
        a, b = vals[i], vals[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0.0:
            roots.append(float(grid[i]))
        elif (a > 0) != (b > 0) and b != 0.0:
            r = bisect_newton(
                lambda x: fam.H(x, rho), float(grid[i]), float(grid[i + 1]), xtol=1e-13, f_lo=a, f_hi=b
            )
            roots.append(r)
    if np.isfinite(vals[-1]) and vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    if not roots:
        finite = vals[np.isfinite(vals)]
        ends = (float(finite[0]), float(finite[-1])) if finite.size else (math.nan, math.nan)
        raise NoBracket(f"H keeps one sign on [{lo}, {hi}]", *ends)
    chosen = min(roots, key=lambda r: max(0.0, -r, r - 1.0))
    res = fam.H(chosen, rho)
    return Lambda2Roots(tuple(roots), chosen, len(roots) > 1, res)


def solve_lambda2(
    spec: SpongeSpec, t: float, rho: float, lo: float = -50.0, hi: float = 50.0, points: int = 201
) -> Lambda2Roots:
    """Roots of ``H(lam2) = sum_i p_i log gamma_i`` found by scanning then bisecting.

    Monotonicity of ``H`` is not assumed; every sign change on the scan grid
    is refined and reported. ``chosen`` is the root nearest to ``[0, 1]``.
    """
    return _lambda2_roots(_Family(spec, t), rho, lo, hi, points)


@dataclass(frozen=True, eq=False)
class FamilyParams:
    t: float
    rho: float
    alpha: float
    lambda1: float
    lambda2: float
    gamma: np.ndarray
    normalizer: float
    p: ProbVector
    residuals: dict = field(default_factory=dict)
    lambda2_roots: tuple[float, ...] = ()
    hip_at_t: Optional[bool] = None

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "rho": self.rho,
            "alpha": self.alpha,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "gamma": [float(g) for g in self.gamma],
            "normalizer": self.normalizer,
            "p": self.p.to_mapping(),
            "residuals": dict(self.residuals),
            "lambda2_roots": list(self.lambda2_roots),
            "lambda2_multiple": len(self.lambda2_roots) > 1,
            "hip_at_t": self.hip_at_t,
        }


def _hip_at(spec: SpongeSpec, t: float, rtol: float = 1e-10) -> bool:
    fam = _Family(spec, t)
    S = np.exp(fam.ls)
    for i in range(fam.m):
        s = S[fam.groups == i]
        if len(s) > 1 and np.ptp(s) > rtol * s.max():
            return True
    return False


def family_p(
    spec: SpongeSpec, t: float, rho: float, lam2_range: tuple[float, float] = (-50.0, 50.0), points: int = 201
) -> FamilyParams:
    """Solve the full cascade at ``(t, rho)`` and return the resulting weights."""
    tb = t_bounds(spec)
    if not tb.t_low < tb.t_high:
        raise CascadeError("domain", "t_low == t_high; the family is undefined")
    if not tb.t_low < t < tb.t_high:
        raise CascadeError("domain", f"t={t} outside ({tb.t_low}, {tb.t_high})")
    if not 0.0 < rho <= 1.0:
        raise CascadeError("domain", f"rho={rho} outside (0, 1]")
    fam = _Family(spec, t)
    try:
        l2 = _lambda2_roots(fam, rho, lam2_range[0], lam2_range[1], points)
    except NoBracket as exc:
        raise CascadeError("lambda2", str(exc)) from exc
    lam2 = l2.chosen
    try:
        lam1 = fam.lambda1(lam2, rho)
        alpha = fam.alpha(lam1, lam2, rho)
    except NoBracket as exc:
        raise CascadeError("lambda1/alpha", str(exc)) from exc
    st = fam.state(alpha, lam1, lam2, rho)
    p = ProbVector.from_array(spec, st.p / st.p.sum())
    H = float(st.p_i @ st.log_gamma)
    lam1_p = lambda_k(spec, p, 1)
    lam2_p = lambda_k(spec, p, 2)
    residuals = {
        "F": st.F,
        "C_minus_1": math.expm1(st.log_C),
        "H": H,
        "t_of_p_minus_t": t_of_p(spec, p) - t,
        "lambda1_p_minus_lambda1": lam1_p - lam1,
        "lambda2_p_minus_lambda2": lam2_p - lam2,
        # identities that hold for any H
        "lambda1_identity": lam1_p - (lam1 + rho * H / float(st.p_i @ fam.log_c)),
        "lambda2_identity": lam2_p - (lam2 - H / float(st.p @ fam.log_b)),
    }
    return FamilyParams(
        t=t,
        rho=rho,
        alpha=alpha,
        lambda1=lam1,
        lambda2=lam2,
        gamma=np.exp(st.log_gamma),
        normalizer=math.exp(st.log_C),
        p=p,
        residuals=residuals,
        lambda2_roots=l2.roots,
        hip_at_t=_hip_at(spec, t),
    )


@dataclass(frozen=True, eq=False)
class Witness:
    rho: float
    t: float
    target_alpha: float
    family: FamilyParams

    def to_dict(self) -> dict:
        return {"rho": self.rho, "t": self.t, "target_alpha": self.target_alpha, "family": self.family.to_dict()}


def witness_params(spec: SpongeSpec, base: BaseTriple, xtol: float = 1e-12) -> Witness:
    """``rho = log c / log b`` and ``t`` in ``(t_low, t_high)`` with ``alpha(t, rho) = log b / log a``."""
    rho = math.log(base.c) / math.log(base.b)
    target = math.log(base.b) / math.log(base.a)
    tb = t_bounds(spec)
    if not tb.t_low < tb.t_high:
        raise DegenerateRange("t_low == t_high")
    gap = tb.gap

    def phi(t):
        return family_p(spec, t, rho).alpha - target

    lo_t = hi_t = None
    lo_v = hi_v = None
    for frac in (0.25, 0.1, 1e-2, 1e-3, 1e-4):
        if lo_t is None:
            t = tb.t_low + frac * gap
            try:
                v = phi(t)
                if v < 0:
                    lo_t, lo_v = t, v
            except CascadeError:
                pass
        if hi_t is None:
            t = tb.t_high - frac * gap
            try:
                v = phi(t)
                if v > 0:
                    hi_t, hi_v = t, v
            except CascadeError:
                pass
        if lo_t is not None and hi_t is not None:
            break
    if lo_t is None or hi_t is None:
        raise NoBracket("alpha(t, rho) does not straddle the target on the probed t range")
    t_star = brentq(phi, lo_t, hi_t, xtol=xtol)
    return Witness(rho, t_star, target, family_p(spec, t_star, rho))
