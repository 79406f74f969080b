import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bnls import Field, ModelParams, Problem, TailEscape, make_grid, mass, solve_ground_state
from bnls.grid import diff_norms
from bnls.scalings import (
    ScalingMap, apply_scaling, exponent_s, exponent_t, gamma, hat_scaling_check, kappa, lambda_of_mass, mass_of_lambda,
    mass_of_tau, pull_back, tau_of_mass, verify_scaling_identity,
)
from conftest import smooth_field


@pytest.fixture(scope="module")
def sgrid():
    return make_grid(1, 1, 16 * math.pi, 256, 16)


def test_identity_map(sgrid, rng):
    u = smooth_field(sgrid, rng)
    v = apply_scaling(u, ScalingMap("T", 1.0, 1.0))
    assert np.array_equal(v.values, u.values)


def test_kappa_value():
    assert kappa(2.0, ModelParams(1, 1, 1.0)) == pytest.approx(2 ** (-1 / 7), rel=1e-15)
    assert kappa(2.0, ModelParams(1, 1, 1.0)) == pytest.approx(0.905724, abs=5e-7)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0])
def test_exponent_maps_invert(alpha):
    p = ModelParams(1, 1, alpha)
    for c in (0.3, 1.0, 7.0):
        assert mass_of_lambda(lambda_of_mass(c, p), p) == pytest.approx(c, rel=1e-13)
    if alpha < 4:
        for c in (0.3, 1.0, 7.0):
            assert mass_of_tau(tau_of_mass(c, p), p) == pytest.approx(c, rel=1e-13)


def test_kappa_decreasing():
    p = ModelParams(1, 1, 1.5)
    ks = [kappa(c, p) for c in np.geomspace(0.1, 100, 20)]
    assert all(b < a for a, b in zip(ks, ks[1:]))


@pytest.mark.parametrize("kind", ["T", "S"])
@pytest.mark.parametrize("c", [0.5, 2.0])
def test_mass_transport(sgrid, rng, kind, c):
    p = ModelParams(1, 1, 1.0, 0.0)
    u = smooth_field(sgrid, rng)
    u = u * math.sqrt(c / mass(u))
    v = apply_scaling(u, ScalingMap.for_mass(kind, c, p))
    assert mass(v) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("kind", ["T", "S"])
@pytest.mark.parametrize("alpha, beta", [(1.0, 0.0), (1.0, 0.7), (2.0, -0.5), (1.5, 1.2)])
def test_scaling_identity_needs_cross_term(sgrid, rng, kind, alpha, beta):
    p = ModelParams(1, 1, alpha, beta)
    u = smooth_field(sgrid, rng, width=16.0)
    c = 2.0
    u = u * math.sqrt(c / mass(u))
    res = verify_scaling_identity(u, c, p, kind)
    assert res.with_cross <= 1e-10 * abs(res.energy)
    assert res.without_cross > 1e-6 * abs(res.energy)
    smap = ScalingMap.for_mass(kind, c, p)
    tu = apply_scaling(u, smap)
    e = exponent_t(p) if kind == "T" else exponent_s(p)
    coef = math.sqrt(smap.scale) if kind == "T" else 1.0
    assert res.without_cross == pytest.approx(c**e * coef * diff_norms(tu).mixed_sq, rel=1e-8)


@pytest.mark.parametrize("kind", ["T", "S"])
def test_flat_field_residuals_vanish(sgrid, kind):
    p = ModelParams(1, 1, 1.0, 0.5)
    u = Field.from_function(sgrid, lambda x, y: 0.8 * np.exp(-(x**2) / 10) + 0 * y)
    res = verify_scaling_identity(u, mass(u), p, kind)
    assert res.with_cross <= 1e-12 * abs(res.energy)
    assert res.without_cross <= 1e-12 * abs(res.energy)


@settings(max_examples=20, deadline=None)
@given(t1=st.floats(0.8, 1.25), t2=st.floats(0.8, 1.25), seed=st.integers(0, 2**32 - 1))
def test_dilations_compose(t1, t2, seed):
    g = make_grid(1, 1, 16 * math.pi, 256, 8)
    u = smooth_field(g, np.random.default_rng(seed), width=12.0)
    m1, m2 = ScalingMap("T", t1, 1.0), ScalingMap("T", t2, 1.0)
    lhs = apply_scaling(apply_scaling(u, m1), m2).values
    rhs = apply_scaling(u, ScalingMap("T", t1 * t2, 1.0)).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(rhs))


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.7, 1.5), kind=st.sampled_from(["T", "S"]), seed=st.integers(0, 2**32 - 1))
def test_dilation_round_trip(t, kind, seed):
    g = make_grid(1, 1, 16 * math.pi, 256, 8)
    u = smooth_field(g, np.random.default_rng(seed), width=12.0)
    smap = ScalingMap(kind, t, 1.5)
    back = apply_scaling(apply_scaling(u, smap), smap.inverse()).values
    assert np.max(np.abs(back - u.values)) <= 1e-10 * np.max(np.abs(u.values))


def test_tail_escape(sgrid):
    u = Field.from_function(sgrid, lambda x, y: np.exp(-(x**2) / 200) + 0 * y)
    with pytest.raises(TailEscape):
        apply_scaling(u, ScalingMap("T", 0.5, 1.0))


def test_bad_maps():
    with pytest.raises(ValueError):
        ScalingMap("Q", 1.0, 1.0)
    with pytest.raises(ValueError):
        ScalingMap("T", 0.0, 1.0)


@pytest.mark.parametrize("alpha, predicted", [(1.0, 2 ** (11 / 7)), (2.0, 2 ** (7 / 3))])
def test_hat_scaling_law(alpha, predicted):
    chk = hat_scaling_check(1.0, 2.0, ModelParams(1, 0, alpha, 0.0))
    assert chk.predicted == pytest.approx(predicted, rel=1e-14)
    assert chk.relative_defect <= 1e-4


def test_known_ratio_decimals():
    assert 2 ** (7 / 3) == pytest.approx(5.03968, abs=5e-6)
    assert 2 ** (11 / 7) == pytest.approx(2.97199, abs=5e-6)


def test_hat_scaling_same_mass():
    chk = hat_scaling_check(1.5, 1.5, ModelParams(1, 0, 1.0, 0.0))
    assert chk.defect == 0.0


def test_hat_scaling_needs_zero_beta():
    with pytest.raises(ValueError):
        hat_scaling_check(1.0, 2.0, ModelParams(1, 0, 1.0, 1.0))


@pytest.mark.parametrize("c", [1.0, 40.0])
def test_pull_back_matches_direct_solve(c):
    p = ModelParams(1, 1, 1.0, 0.0)
    g = make_grid(1, 1, 16 * math.pi, 256, 32)
    direct = solve_ground_state(p, c, "m_c", grid=g)
    unit = solve_ground_state(p, 1.0, Problem("m_1_lambda", lambda_of_mass(c, p)), grid=g)
    back = pull_back(unit, c, p)
    assert back.energy.total == pytest.approx(direct.energy.total, rel=1e-4)
    assert mass(back.u) == pytest.approx(c, rel=1e-10)
