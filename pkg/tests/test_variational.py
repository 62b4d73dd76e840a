import math

import numpy as np
import pytest

from conftest import BASE, sierpinski
from spongedim.measures import dim_formula, lambda_k, t_of_p
from spongedim.model import t_bounds
from spongedim.variational import (
    CascadeError,
    TooManyWords,
    family_F,
    family_p,
    project_simplex,
    solve_alpha,
    solve_lambda2,
    vp,
    vp_grid_oracle,
    witness_params,
)


def sierpinski_closed_form(counts, base=BASE):
    """Dimension of a Sierpinski sponge from its child counts (nested power-sum formula)."""
    theta = math.log(base.b) / math.log(base.a)
    rho = math.log(base.c) / math.log(base.b)
    fibers = iter(counts[2])
    total = 0.0
    for m_i in counts[1]:
        inner = sum(next(fibers) ** theta for _ in range(m_i))
        total += inner**rho
    return math.log(total) / -math.log(base.c)


def test_project_simplex():
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.normal(size=5) * 3
        x = project_simplex(v)
        assert abs(x.sum() - 1) < 1e-12 and np.all(x >= 0)
        # optimality: v - x is constant on the support
        s = x > 0
        diff = (v - x)[s]
        assert np.ptp(diff) < 1e-9
        assert np.all((v - x)[~s] <= diff[0] + 1e-9)


@pytest.mark.parametrize(
    "counts",
    [
        ((2,), (3, 3), (2,) * 6),
        ((2,), (2, 1), (1, 3, 2)),
        ((2,), (3, 2), (1, 2, 4, 3, 5)),
        ((2,), (1, 1), (2, 5)),
    ],
)
def test_vp_matches_sierpinski_formula(counts):
    res = vp(sierpinski(counts), starts=6)
    assert res.converged
    assert abs(res.value - sierpinski_closed_form(counts)) < 1e-9


def test_vp_full_cube(cube):
    assert abs(vp(cube, starts=2).value - 3.0) < 1e-12


def test_vp_single_word():
    s = sierpinski(((1,), (1,), (3,)))
    res = vp(s)
    assert res.argmax.weights.tolist() == [1.0]
    assert math.isclose(res.value, math.log(3) / math.log(6))


def test_vp_result_fields(asym):
    res = vp(asym, starts=4, seed=3)
    d = res.to_dict()
    assert set(d) >= {"value", "argmax", "spread", "interior", "converged"}
    assert res.starts == 4 and res.spread < 1e-9
    assert res.interior


def test_vp_seed_reproducible(asym5):
    a = vp(asym5, starts=3, seed=11)
    b = vp(asym5, starts=3, seed=11)
    assert a.value == b.value
    np.testing.assert_array_equal(a.argmax.weights, b.argmax.weights)


def test_grid_oracle_agrees(asym):
    value, arg = vp_grid_oracle(asym, 200)
    res = vp(asym, starts=4)
    assert value <= res.value + 1e-12
    assert res.value - value < 1e-3
    assert abs(arg.sum() - 1) < 1e-12


def test_grid_oracle_limit():
    s = sierpinski(((2,), (3, 2), (1, 2, 4, 3, 5)))
    with pytest.raises(TooManyWords):
        vp_grid_oracle(s, 10)


# --- family cascade ---------------------------------------------------


def test_family_residuals(asym5):
    tb = t_bounds(asym5)
    t = tb.t_low + 0.4 * tb.gap
    fam = family_p(asym5, t, 0.5)
    for key, val in fam.residuals.items():
        assert abs(val) < 1e-9, key
    assert abs(t_of_p(asym5, fam.p) - t) < 1e-9
    assert abs(lambda_k(asym5, fam.p, 1) - fam.lambda1) < 1e-8
    assert fam.hip_at_t


def test_family_alpha_increases_in_t(asym):
    tb = t_bounds(asym)
    alphas = [family_p(asym, tb.t_low + f * tb.gap, 0.7).alpha for f in (0.2, 0.4, 0.6, 0.8)]
    assert all(x < y for x, y in zip(alphas, alphas[1:]))


def test_family_F_monotone_in_alpha(asym):
    tb = t_bounds(asym)
    t = tb.t_low + 0.5 * tb.gap
    vals = [family_F(asym, a, 0.3, 0.4, t, 0.5) for a in np.linspace(-3, 3, 13)]
    assert all(x < y for x, y in zip(vals, vals[1:]))
    root = solve_alpha(asym, 0.3, 0.4, t, 0.5)
    assert abs(family_F(asym, root.alpha, 0.3, 0.4, t, 0.5)) < 1e-10


def test_family_single_lambda2_root(asym):
    tb = t_bounds(asym)
    roots = solve_lambda2(asym, tb.t_low + 0.5 * tb.gap, 0.5)
    assert not roots.multiple
    assert len(roots.roots) == 1


def test_family_domain(asym, uniform_sponge):
    with pytest.raises(CascadeError):
        family_p(asym, 0.9, 0.5)
    with pytest.raises(CascadeError):
        family_p(asym, 0.3, 1.5)
    with pytest.raises(CascadeError):
        family_p(uniform_sponge, 0.3, 0.5)


def test_witness_equals_vp(asym):
    w = witness_params(asym, BASE)
    assert math.isclose(w.rho, math.log(2) / math.log(4))
    assert abs(w.family.alpha - w.target_alpha) < 1e-9
    assert abs(dim_formula(asym, w.family.p) - vp(asym, starts=4).value) < 1e-6
