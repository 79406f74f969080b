import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from bnls.errors import InconclusiveBound
from bnls.functionals import ModelParams
from bnls.grid import diff_norms, l2_sq, make_grid
from bnls.minimizer import solve_hat_ground_state
from bnls.testfunctions import (
    TorusFactor,
    build_psi,
    build_rho,
    closed_form_norms,
    displayed_slope,
    mollify,
    slope_for_mode,
    tent,
    upper_bound_report,
)


def quad_norms(a, b, alpha):
    l2 = 2 * quad(lambda z: tent(np.asarray(z), a, b) ** 2, a, math.pi)[0]
    lp = 2 * quad(lambda z: tent(np.asarray(z), a, b) ** (alpha + 2), a, math.pi)[0]
    return l2, lp


def test_tent_shape():
    a, b = 0.6 * math.pi, 1.3
    z = np.linspace(0, 2 * math.pi, 1001)
    r = tent(z, a, b)
    assert np.all(r[z <= a] == 0) and np.all(r[z >= 2 * math.pi - a] == 0)
    mid = (z >= a) & (z <= math.pi)
    np.testing.assert_allclose(r[mid], b * (z[mid] - a), atol=1e-14)
    np.testing.assert_allclose(tent(2 * math.pi - z, a, b), r, atol=1e-12)


def test_equal_norms_example():
    rho = build_rho(math.pi / 2, 2.0, "equal_norms")
    assert rho.b == pytest.approx(math.sqrt(5 / 3) / (math.pi / 2), rel=1e-12)
    assert rho.b == pytest.approx(0.821830, rel=1e-4)
    assert rho.l2_sq == pytest.approx((2 / 3) * (5 / 3) * (math.pi / 2), rel=1e-12)
    assert rho.l2_sq == pytest.approx(1.74533, rel=1e-4)
    assert rho.lp == pytest.approx(rho.l2_sq, rel=1e-10)


def test_forced_slope_example():
    rho = build_rho(math.pi / 2, 2.0, b=1.0)
    assert rho.l2_sq == pytest.approx(math.pi**3 / 12, rel=1e-12)
    assert rho.lp == pytest.approx(math.pi**5 / 80, rel=1e-12)
    assert rho.l2_sq == pytest.approx(2.58385, rel=1e-4)
    assert rho.lp == pytest.approx(3.825246, abs=5e-7)
    l2, lp = quad_norms(math.pi / 2, 1.0, 2.0)
    assert rho.l2_sq == pytest.approx(l2, rel=1e-10)
    assert rho.lp == pytest.approx(lp, rel=1e-10)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 4 / 3])
def test_mass_vanishes_as_cutoff_approaches_pi(alpha):
    vals = [build_rho(f * math.pi, alpha).l2_sq for f in (0.5, 0.7, 0.9, 0.95, 0.99)]
    assert all(x > y for x, y in zip(vals, vals[1:]))
    assert vals[-1] < 0.05 * vals[0]


@pytest.mark.parametrize("mode,factor", [("equal_norms", 1.0), ("doubled", 2.0)])
@pytest.mark.parametrize("alpha", [1.0, 2.0, 0.5])
@pytest.mark.parametrize("frac", [0.3, 0.6, 0.9])
def test_mode_relations(mode, factor, alpha, frac):
    rho = build_rho(frac * math.pi, alpha, mode)
    assert rho.lp == pytest.approx(factor * rho.l2_sq, rel=1e-10)
    assert rho.b == slope_for_mode(frac * math.pi, alpha, mode)


@settings(max_examples=40, deadline=None)
@given(
    frac=st.floats(0.05, 0.95),
    b=st.floats(0.1, 5.0),
    alpha=st.floats(0.25, 4.0),
)
def test_closed_form_matches_quadrature(frac, b, alpha):
    a = frac * math.pi
    rho = build_rho(a, alpha, b=b)
    for exact, grid_q in ((rho.l2_sq, rho.l2_sq_quadrature), (rho.lp, rho.lp_quadrature)):
        assert grid_q == pytest.approx(exact, rel=1e-6)
    l2, lp = quad_norms(a, b, alpha)
    assert (rho.l2_sq, rho.lp) == pytest.approx((l2, lp), rel=1e-9)
    assert closed_form_norms(a, b, alpha) == (rho.l2_sq, rho.lp)


def test_displayed_slope_reported_separately():
    a = 0.9 * math.pi
    rho = build_rho(a, 2.0)
    assert rho.b_displayed == displayed_slope(a, 2.0, "equal_norms")
    alt = build_rho(a, 2.0, b=rho.b_displayed)
    assert abs(alt.lp / alt.l2_sq - 1) > 1e-2
    assert "b_displayed" in rho.to_dict() and "samples" not in rho.to_dict()


@pytest.mark.parametrize("a", [0.0, -1.0, math.pi, 4.0])
def test_rejects_bad_cutoff(a):
    with pytest.raises(ValueError, match="a must lie"):
        build_rho(a, 2.0)


def test_rejects_bad_mode():
    with pytest.raises(ValueError, match="mode"):
        build_rho(1.0, 2.0, "halved")


def test_mollifier_convergence():
    rho = build_rho(math.pi / 2, 2.0)
    errs = []
    for k in range(3):
        eps = rho.a / 4 / 2**k
        errs.append(abs(mollify(rho, eps).norms()["l2_sq"] - rho.l2_sq))
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("eps", [0.05, 0.2, 0.5])
def test_mollifier_support(eps):
    rho = build_rho(math.pi / 2, 2.0)
    lo, hi = mollify(rho, eps).support()
    assert lo >= rho.a - eps - 1e-12
    assert hi <= 2 * math.pi - rho.a + eps + 1e-12


def test_mollifier_example():
    rho = build_rho(math.pi / 2, 2.0)
    got = mollify(rho, 0.1).norms()["l2_sq"]
    assert abs(got - rho.l2_sq) <= 0.05 * rho.l2_sq


@pytest.mark.parametrize("eps", [0.0, -0.1, math.pi / 4, 1.0])
def test_mollifier_rejects_wide_kernel(eps):
    rho = build_rho(math.pi / 2, 2.0)
    with pytest.raises(ValueError, match="eps"):
        mollify(rho, eps)


def test_torus_factor_product_rules():
    prof = mollify(build_rho(math.pi / 2, 2.0, N=1 << 12), 0.4)
    r = prof.norms()
    amp2 = prof.rho.l2_sq / r["l2_sq"]
    one = TorusFactor.from_profile(prof, 1)
    assert one.l2_sq == pytest.approx(prof.rho.l2_sq, rel=1e-12)
    assert one.grad_sq == pytest.approx(amp2 * r["grad_sq"], rel=1e-12)
    two = TorusFactor.from_profile(prof, 2)
    assert two.l2_sq == pytest.approx(prof.rho.l2_sq**2, rel=1e-12)
    # |Delta(f g)|^2 = |f''|^2 |g|^2 * 2 + 2 |f'|^2 |g'|^2
    expect = amp2**2 * (2 * r["lap_sq"] * r["l2_sq"] + 2 * r["grad_sq"] ** 2)
    assert two.lap_sq == pytest.approx(expect, rel=1e-12)


@pytest.fixture(scope="module")
def psi_setup():
    p = ModelParams(1, 1, 2.0, 0.0)
    rho = build_rho(math.pi / 2, 2.0, N=1 << 12)
    prof = mollify(rho, 0.6)
    eg = make_grid(1, 0, 16 * math.pi, 256)
    Q = solve_hat_ground_state(p, 1.0 / rho.l2_sq, "plain", None, None, eg).u
    grid = make_grid(1, 1, 16 * math.pi, 256, 128)
    return Q, prof, grid


def test_psi_mass_and_y_dependence(psi_setup):
    Q, prof, grid = psi_setup
    psi = build_psi(Q, prof, 1, grid)
    assert l2_sq(psi) == pytest.approx(1.0, abs=1e-10)
    assert diff_norms(psi).grad_y_sq > 0.1


def test_psi_norms_match_tensor_identities(psi_setup):
    Q, prof, grid = psi_setup
    psi = build_psi(Q, prof, 1, grid)
    tf = TorusFactor.from_profile(prof, 1)
    dq, dp = diff_norms(Q), diff_norms(psi)
    assert dp.grad_y_sq == pytest.approx(l2_sq(Q) * tf.grad_sq, rel=1e-6)
    assert dp.grad_x_sq == pytest.approx(dq.grad_x_sq * tf.l2_sq, rel=1e-6)


@pytest.mark.parametrize("shift", [1, 17, 64])
def test_psi_commutes_with_rotation(psi_setup, shift):
    Q, prof, grid = psi_setup
    stride = prof.N // grid.N_y
    psi = build_psi(Q, prof, 1, grid)
    rot = build_psi(Q, prof.rotate(shift * stride), 1, grid)
    np.testing.assert_allclose(rot.values, np.roll(psi.values, shift, axis=-1), atol=1e-14)
    a, b = diff_norms(psi), diff_norms(rot)
    for name in ("lap_x_sq", "lap_y_sq", "mixed_sq", "grad_x_sq", "grad_y_sq"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-12)
    assert prof.rotate(shift * stride).norms() == pytest.approx(prof.norms(), rel=1e-12)


def test_psi_rejects_mass_mismatch(psi_setup):
    Q, prof, grid = psi_setup
    from bnls.grid import Field

    with pytest.raises(ValueError, match="mass"):
        build_psi(Field(Q.grid, 1.01 * Q.values), prof, 1, grid)


def test_psi_rejects_incompatible_resolution(psi_setup):
    Q, _, _ = psi_setup
    prof = mollify(build_rho(math.pi / 2, 2.0, N=3000), 0.6)
    with pytest.raises(ValueError, match="multiple"):
        build_psi(Q, prof, 1, make_grid(1, 1, 16 * math.pi, 256, 16))


def report(**kw):
    kw.setdefault("strict", False)
    return upper_bound_report(**kw)


def test_flat_limit_gap_is_negative():
    rep = report()
    assert rep.gap_limit < 0
    assert rep.advantage < 0 and rep.I1 >= 0
    assert rep.lambda_bar is not None and rep.lambda_bar > 0


def test_negative_gap_at_default_example():
    rep = report(lam=1e-3)
    assert rep.gap < 0, f"gap {rep.gap:.4g}, certified only for lambda < {rep.lambda_bar:.3g}"


def test_gap_negative_below_reported_lambda_bar():
    rep = report()
    below = report(lam=0.5 * rep.lambda_bar)
    assert below.certified
    above = report(lam=2.0 * rep.lambda_bar)
    assert not above.certified


def test_strict_mode_raises_with_report():
    with pytest.raises(InconclusiveBound) as info:
        upper_bound_report(lam=1e-1)
    assert info.value.report.gap >= 0


def test_flat_limit_gap_decreases_with_cutoff():
    gaps = [report(a=f * math.pi).gap_limit for f in (0.8, 0.85, 0.9, 0.95)]
    assert all(x > y for x, y in zip(gaps, gaps[1:]))


def test_torus_cost_is_linear_in_lambda():
    r1, r2 = report(lam=1e-3), report(lam=5e-4)
    assert r2.I2 / r1.I2 == pytest.approx(0.5, rel=1e-2)
    assert r1.I2_with_volume_factor == pytest.approx(2 * math.pi * r1.I2, rel=1e-12)


def test_doubled_mode_margin():
    p = ModelParams(1, 1, 1.0, 1.0)
    rep = report(p=p, lam=1e-4)
    assert rep.mode == "doubled"
    assert rep.zeta > 0
    assert rep.I1 < 0


def test_report_rejects_bad_inputs():
    with pytest.raises(ValueError, match="torus"):
        upper_bound_report(p=ModelParams(1, 0, 2.0, 0.0))
    with pytest.raises(ValueError, match="lambda"):
        upper_bound_report(lam=0.0)
