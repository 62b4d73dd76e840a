import math

import numpy as np
import pytest

from conftest import BASE, sierpinski
from spongedim.continuity import (
    NotSierpinski,
    base_triple,
    cell_seed,
    check_L_ratio_bounds,
    fit_envelope,
    l_band_constant,
    lower_bound_gap,
    sandwich_check,
    scale_ratios,
    sweep,
    t_shift_first_order,
)
from spongedim.measures import ProbVector, t_of_p
from spongedim.model import BaseTriple, perturb, t_bounds
from spongedim.variational import vp


def test_fit_envelope_exact_line():
    c_hat, c_ls, r2 = fit_envelope([0.01, 0.02, 0.04], [0.02, 0.04, 0.08])
    assert math.isclose(c_ls, 2.0) and math.isclose(c_hat, 2.0) and math.isclose(r2, 1.0)


def test_fit_envelope_dominates():
    eps = np.array([0.01, 0.02, 0.04])
    dev = np.array([0.03, 0.035, 0.09])
    c_hat, c_ls, _ = fit_envelope(eps, dev)
    assert c_hat >= c_ls
    assert np.all(dev <= c_hat * eps + 1e-15)


def test_fit_envelope_empty():
    c_hat, c_ls, r2 = fit_envelope([], [])
    assert c_hat == 0.0 and c_ls == 0.0 and math.isnan(r2)


def test_cell_seeds_distinct():
    seeds = {cell_seed(1, i, k) for i in range(5) for k in range(8)}
    assert len(seeds) == 40
    assert cell_seed(1, 2, 3) == cell_seed(1, 2, 3)


def test_base_triple(asym):
    b = base_triple(asym)
    assert math.isclose(b.a, BASE.a) and b.epsilon == 0.0
    with pytest.raises(NotSierpinski):
        base_triple(perturb(asym, 0.05, 1))


def test_sweep_zero_grid(asym):
    rep = sweep(asym, [0.0], K=3, seed=2, base_starts=4)
    assert len(rep.rows) == 1
    assert rep.C_hat == 0.0
    assert rep.rows[0].deviation == 0.0


def test_sweep_small(asym):
    rep = sweep(asym, [0.01, 0.02], K=2, seed=5, base_starts=4, starts=2)
    assert len(rep.rows) == 5
    assert [r.epsilon for r in rep.rows] == sorted(r.epsilon for r in rep.rows)
    for e, m in rep.max_deviations():
        assert m <= rep.C_hat * e + 1e-15
    assert rep.excluded == 0
    assert all(r.realized_eps <= r.epsilon + 1e-12 for r in rep.rows)


def test_sweep_rejects_degenerate(uniform_sponge):
    from spongedim.model import DegenerateRange

    with pytest.raises(DegenerateRange):
        sweep(uniform_sponge, [0.01], K=1)


def test_sandwich_unperturbed(asym):
    rep = sandwich_check(asym, asym, 1.0, seed=0)
    assert rep.inside and rep.epsilon == 0.0
    assert rep.hd_bracket == (rep.vp_eps, rep.vp_eps)
    assert "not computed" in rep.note


def test_lower_bound_gap(asym):
    v0 = vp(asym, starts=4)
    assert abs(lower_bound_gap(asym, asym, v0)) < 1e-12
    gaps = [lower_bound_gap(perturb(asym, e, 3), asym, v0) for e in (0.01, 0.02, 0.04)]
    assert all(abs(g) < 2.0 * e for g, e in zip(gaps, (0.01, 0.02, 0.04)))


def test_lower_bound_gap_alphabet_mismatch(asym, asym5):
    with pytest.raises(ValueError):
        lower_bound_gap(asym5, asym)


def test_uniform_scaling_t_shift(asym):
    p = ProbVector.from_array(asym, [0.2, 0.5, 0.3])
    t0 = t_of_p(asym, p)
    for eps in (1e-3, 1e-4):
        t1 = t_of_p(scale_ratios(asym, eps), ProbVector.from_array(scale_ratios(asym, eps), p.weights))
        assert abs((t1 - t0) - t_shift_first_order(t0, BASE.a, eps)) < 5 * eps**2


def test_band_constant_order():
    A1, A2 = l_band_constant(BASE, 0.02)
    assert A1 >= A2 > 0
    with pytest.raises(ValueError):
        l_band_constant(BASE, 2.0)


def test_L_bounds_unperturbed(asym):
    rep = check_L_ratio_bounds(asym, BASE, 50, 200, 0)
    assert rep.violations == 0
    assert rep.band1[1] <= rep.rho1 and rep.band1[0] >= rep.rho1 - 1 / 200


def test_L_bounds_perturbed(asym5):
    for eps in (0.01, 0.05):
        rep = check_L_ratio_bounds(perturb(asym5, eps, 4), BASE, 100, 300, 1)
        assert rep.violations == 0
        assert rep.epsilon <= eps


def test_sweep_diagnostics(asym):
    rep = sweep(asym, [0.01, 0.02], K=2, seed=5, base_starts=4, starts=2)
    diag = rep.diagnostics()
    assert set(diag) == {"r2_uncentered", "within_factor3"}
    assert diag["r2_uncentered"] <= 1.0
    assert "r2_uncentered" in rep.summary()
