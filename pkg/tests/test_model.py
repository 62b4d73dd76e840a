import math

import numpy as np
import pytest

from conftest import BASE, random_spec, sierpinski
from spongedim.model import (
    AlphabetNode,
    BaseTriple,
    DegenerateRange,
    PackingError,
    SpongeSpec,
    check_hip,
    classify,
    dotted,
    fit_base,
    left_pack,
    make_sierpinski,
    moran_root,
    parse_dotted,
    perturb,
    t_bounds,
    validate,
)


def test_cube_is_valid(cube):
    rep = validate(cube)
    assert rep.ok
    assert rep.to_dict() == {"ok": True}


def test_cube_counts(cube):
    assert len(cube.leaves) == 8
    assert len(cube.j_words) == 4
    assert cube.words(1) == [(0,), (1,)]
    np.testing.assert_allclose(cube.c, [0.5, 0.5])


def test_dotted_roundtrip():
    assert dotted((1, 0, 2)) == "2.1.3"
    assert parse_dotted("2.1.3") == (1, 0, 2)


def test_overlapping_siblings_flagged():
    tree = (
        AlphabetNode(0.5, 0.0, (AlphabetNode(0.5, 0.0, (AlphabetNode(0.5, 0.0),)),)),
        AlphabetNode(0.5, 0.3, (AlphabetNode(0.5, 0.0, (AlphabetNode(0.5, 0.0),)),)),
    )
    rep = validate(SpongeSpec(3, tree))
    assert not rep.ok
    gaps = [v for v in rep.violations if v.constraint == "gap"]
    assert gaps and gaps[0].path == (0,)


def test_nesting_violation_has_path():
    tree = left_pack([AlphabetNode(0.3, 0.0, left_pack([AlphabetNode(0.4, 0.0, left_pack([AlphabetNode(0.2)]))]))])
    rep = validate(SpongeSpec(3, tree))
    assert [v.constraint for v in rep.violations] == ["nesting"]
    assert rep.violations[0].path == (0, 0)


def test_ratio_sum_and_range():
    tree = left_pack([AlphabetNode(0.7, 0.0, left_pack([AlphabetNode(0.1)])), AlphabetNode(0.6, 0.0, left_pack([AlphabetNode(0.1)]))])
    kinds = {v.constraint for v in validate(SpongeSpec(2, tree)).violations}
    assert "ratio_sum" in kinds
    bad = SpongeSpec(2, left_pack([AlphabetNode(1.2, 0.0, (AlphabetNode(0.5),))]))
    assert "ratio_range" in {v.constraint for v in validate(bad).violations}


def test_depth_and_arity():
    shallow = SpongeSpec(3, left_pack([AlphabetNode(0.5, 0.0, left_pack([AlphabetNode(0.5)]))]))
    assert "arity" in {v.constraint for v in validate(shallow).violations}
    deep = SpongeSpec(2, left_pack([AlphabetNode(0.5, 0.0, left_pack([AlphabetNode(0.5, 0.0, (AlphabetNode(0.5),))]))]))
    assert "depth" in {v.constraint for v in validate(deep).violations}


def test_offset_order():
    tree = (
        AlphabetNode(0.2, 0.5, (AlphabetNode(0.1),)),
        AlphabetNode(0.2, 0.1, (AlphabetNode(0.1),)),
    )
    assert "offset_order" in {v.constraint for v in validate(SpongeSpec(2, tree)).violations}


def test_sierpinski_overpacked():
    with pytest.raises(PackingError):
        make_sierpinski(((3,), (1, 1, 1), (1, 1, 1)), BaseTriple(0.2, 0.3, 0.5))


def test_base_triple_checks():
    with pytest.raises(ValueError):
        BaseTriple(0.0, 0.3, 0.5)
    assert not BaseTriple(0.5, 0.3, 0.2).ordered


def test_classify_sierpinski_is_zero(asym):
    assert classify(asym, BASE) == 0.0
    fb = fit_base(asym)
    assert fb.epsilon < 1e-15
    assert math.isclose(fb.a, BASE.a) and math.isclose(fb.c, BASE.c)


def test_classify_picks_worst_level():
    s = sierpinski(((2,), (2, 1), (1, 3, 2)), BaseTriple(1 / 6, 1 / 4, 1 / 2))
    other = BaseTriple(1 / 6 * math.exp(0.1), 1 / 4, 1 / 2)
    assert math.isclose(classify(s, other), 0.1, rel_tol=1e-12)


def test_perturb_zero_is_identity(asym):
    assert perturb(asym, 0.0, 3) == asym


def test_perturb_stays_in_band(asym5):
    for seed in range(20):
        p = perturb(asym5, 0.05, seed)
        assert validate(p).ok
        assert classify(p, BASE) <= 0.05 + 1e-12


def test_perturb_deterministic(asym5):
    assert perturb(asym5, 0.03, 9) == perturb(asym5, 0.03, 9)
    assert perturb(asym5, 0.03, 9) != perturb(asym5, 0.03, 10)


def test_perturb_rejects_negative(asym):
    with pytest.raises(ValueError):
        perturb(asym, -0.1, 0)


def test_moran_root_closed_forms():
    assert moran_root([0.3]) == 0.0
    for m, a in [(2, 1 / 3), (3, 1 / 6), (5, 0.1)]:
        assert abs(moran_root([a] * m) - math.log(m) / -math.log(a)) <= 1e-12


def test_moran_root_residual():
    rng = np.random.default_rng(1)
    for _ in range(50):
        r = rng.uniform(0.05, 0.4, size=rng.integers(2, 5))
        r = r / r.sum() * 0.9
        t = moran_root(r)
        assert abs((r**t).sum() - 1) <= 1e-10


def test_t_bounds(asym):
    tb = t_bounds(asym)
    assert tb.t_low == 0.0
    assert math.isclose(tb.t_high, math.log(3) / math.log(6), rel_tol=1e-12)
    assert set(tb.to_dict()["per_pair"]) == {"1.1", "1.2", "2.1"}


def test_hip_holds_on_asym(asym):
    rep = check_hip(asym)
    assert rep.holds
    assert len(rep.grid) == 101
    assert all(tb > 0 for tb in rep.grid)


def test_hip_degenerate(uniform_sponge):
    with pytest.raises(DegenerateRange):
        check_hip(uniform_sponge)


def test_hip_fails_without_siblings_differing():
    # the two fibers that differ sit under different level-1 parents
    s = sierpinski(((2,), (1, 1), (1, 3)))
    rep = check_hip(s)
    assert not rep.holds


def test_random_specs_validate():
    rng = np.random.default_rng(4)
    for _ in range(30):
        assert validate(random_spec(rng)).ok
