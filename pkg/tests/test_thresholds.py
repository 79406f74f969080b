import math

import numpy as np
import pytest

from bnls.errors import NoBracket
from bnls.functionals import ModelParams, Problem
from bnls.minimizer import solve_ground_state
from bnls.thresholds import (
    CSV_COLUMNS,
    DELTA_GAP,
    box_reference,
    check_sweep,
    find_c0,
    find_cminus,
    find_cplus,
    find_lambda_star,
    probe_cgt0_vs_cneq0,
    read_sweep_csv,
    subadditivity_defects,
    sweep_mass,
    threshold_grid,
)

QUINTIC = ModelParams(1, 1, 2.0, 0.0)


@pytest.fixture(scope="module")
def quintic_sweep():
    return sweep_mass(QUINTIC, list(range(2, 26, 2)))


@pytest.fixture(scope="module")
def c0_report():
    return find_c0(QUINTIC)


def test_sweep_single_crossover(quintic_sweep):
    branches = [r.branch for r in quintic_sweep]
    assert branches[0] == "flat" and branches[-1] == "broken"
    first = branches.index("broken")
    assert all(b == "broken" for b in branches[first:])
    assert all(r.converged for r in quintic_sweep)


def test_sweep_monotonicity(quintic_sweep):
    diag = check_sweep(quintic_sweep)
    assert diag.nonincreasing and diag.scaled_strictly_decreasing and diag.below_reference
    assert diag.worst_scaled_increase < 0


def test_sweep_subadditivity(quintic_sweep):
    defects = subadditivity_defects(quintic_sweep, max_pairs=30)
    assert len(defects) >= 10
    assert all(d <= 1e-6 for _, _, d in defects)


def test_sweep_flat_side_matches_reference(quintic_sweep):
    for r in quintic_sweep:
        if r.branch == "flat":
            assert abs(r.m_c - r.hat_reference) <= 1e-4 * abs(r.m_c)
            assert r.gap < DELTA_GAP


def test_sweep_csv_round_trip(tmp_path, quintic_sweep):
    from bnls.thresholds import write_sweep_csv

    path = write_sweep_csv(quintic_sweep, tmp_path / "s.csv")
    rows = read_sweep_csv(path)
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [float(r["m_c"]) for r in rows] == [r.m_c for r in quintic_sweep]
    assert [r["branch"] for r in rows] == [r.branch for r in quintic_sweep]


@pytest.mark.parametrize("cs", [[2.0, 1.0], [1.0, 1.0], [-1.0, 2.0]])
def test_sweep_rejects_bad_grid(cs):
    with pytest.raises(ValueError):
        sweep_mass(QUINTIC, cs)


def test_parallel_sweep_matches_serial_cold_starts():
    cs = [2.0, 6.0, 10.0]
    par = sweep_mass(QUINTIC, cs, jobs=3)
    ser = sweep_mass(QUINTIC, cs, jobs=1, bidirectional=False)
    for a, b in zip(par, ser):
        assert a.m_c == pytest.approx(b.m_c, rel=1e-6, abs=1e-9)


def test_c0_bracket(c0_report):
    rep = c0_report
    assert rep.width <= 1e-2
    lo_rec, hi_rec = rep.evidence
    assert lo_rec.c == rep.bracket[0] and hi_rec.c == rep.bracket[1]
    assert lo_rec.m_c >= lo_rec.hat_reference - DELTA_GAP
    assert hi_rec.m_c < hi_rec.hat_reference - DELTA_GAP
    assert hi_rec.branch == "broken"
    # the y-dependence sets in continuously, so its onset precedes the energy gap slightly
    onset = min(r.c for r in rep.records if r.branch == "broken")
    assert rep.bracket[0] - onset <= rep.tol
    assert rep.to_dict()["width"] == rep.width


def test_c0_equality_below_bracket(c0_report):
    below = [r for r in c0_report.records if r.c <= c0_report.bracket[0]]
    assert below
    for r in below:
        assert abs(r.m_c - r.hat_reference) <= 1e-4 * abs(r.m_c)


def test_c0_lambda_consistency(c0_report):
    lam_lo, lam_hi = c0_report.mapped_bracket
    grid = threshold_grid(QUINTIC)
    broken = solve_ground_state(QUINTIC, 1.0, Problem("m_1_lambda", 0.9 * lam_lo), grid=grid)
    flat = solve_ground_state(QUINTIC, 1.0, Problem("m_1_lambda", 1.1 * lam_hi), grid=grid)
    assert not broken.y_flat and flat.y_flat


def test_c0_and_lambda_star_agree(c0_report):
    lam = find_lambda_star(QUINTIC)
    lo, hi = c0_report.mapped_bracket
    assert max(lo, lam.bracket[0]) <= min(hi, lam.bracket[1])
    assert lam.bracket[1] / lam.bracket[0] <= 1 + 1e-2


def test_bracket_searches_are_deterministic():
    a, b = find_lambda_star(QUINTIC), find_lambda_star(QUINTIC)
    assert a.bracket == b.bracket
    assert a.to_dict() == b.to_dict()


def test_no_bracket_reports_probed_range():
    with pytest.raises(NoBracket) as info:
        find_c0(QUINTIC, c_probe=[1.0, 2.0, 4.0])
    assert info.value.widest == (1.0, 4.0)


@pytest.mark.parametrize(
    "fn,p",
    [
        (find_c0, ModelParams(1, 1, 2.0, 1.0)),
        (find_cplus, ModelParams(1, 1, 2.0, 0.0)),
        (find_cplus, ModelParams(1, 1, 1.0, 1.0)),
        (find_cminus, ModelParams(1, 1, 1.0, 1.0)),
        (find_lambda_star, ModelParams(1, 1, 1.0, 1.0)),
        (probe_cgt0_vs_cneq0, ModelParams(1, 1, 1.0, -1.0)),
        (probe_cgt0_vs_cneq0, ModelParams(1, 1, 2.0, 1.0)),
    ],
)
def test_regime_guards(fn, p):
    with pytest.raises(ValueError):
        fn(p)


def test_box_reference_is_plane_wave_energy():
    from bnls.functionals import energy
    from bnls.grid import Field

    p = ModelParams(1, 1, 1.0, -1.0)
    g = threshold_grid(p)
    c = 3.0
    vol = (2 * g.L) * 2 * math.pi
    x, _ = g.coords()
    xi = g.xi[np.argmin(g.xi**4 + p.beta * g.xi**2)]
    wave = Field(g, math.sqrt(c / vol) * np.exp(1j * xi * x) * np.ones(g.shape))
    assert box_reference(p, c, g) == pytest.approx(energy(wave, p).total, rel=1e-10)


def test_cminus_zero_regime():
    p = ModelParams(1, 1, 1.0, -1.0)
    rep = find_cminus(p)
    assert rep.bracket[0] == 0.0
    assert rep.notes
    first = rep.records[0]
    assert first.m_c < -p.beta**2 * first.c / 8


def test_cminus_large_mass_below_line():
    p = ModelParams(1, 1, 1.0, -1.0)
    for r in sweep_mass(p, [8.0, 16.0]):
        assert r.m_c / r.c < -p.beta**2 / 8


@pytest.mark.slow
def test_cplus_bracket_two_dimensions():
    p = ModelParams(2, 1, 2.0, 1.0)
    rep = find_cplus(p)
    assert rep.width <= 1e-2
    assert not rep.notes
    lo_rec, hi_rec = rep.evidence
    below = [r for r in rep.records if r.c <= rep.bracket[0]]
    for r in below:
        assert abs(r.m_c - r.box_reference) <= DELTA_GAP
        assert r.box_reference < 0 and abs(r.box_reference) < 1e-2 * r.c
    assert hi_rec.converged and hi_rec.m_c < 0
    assert hi_rec.m_c < hi_rec.box_reference - DELTA_GAP


@pytest.mark.slow
def test_cminus_bracket_two_dimensions():
    with pytest.warns(UserWarning, match="subcritical"):
        p = ModelParams(2, 1, 3.0, -1.0)
    rep = find_cminus(p, c_probe=[0.5, 1.0, 2.0, 4.0])
    assert rep.bracket[0] > 0 and rep.width <= 1e-2
    lo_rec, hi_rec = rep.evidence
    line = lambda r: min(-p.beta**2 * r.c / 8, r.box_reference) - DELTA_GAP  # noqa: E731
    assert lo_rec.m_c >= line(lo_rec) and hi_rec.m_c < line(hi_rec)


@pytest.mark.slow
def test_cgt0_vs_cneq0_probe():
    p = ModelParams(1, 1, 1.0, 1.0)
    pair = probe_cgt0_vs_cneq0(p)
    assert not pair.errors
    assert pair.overlap is not None
    for rep in (pair.c_gt0, pair.c_neq0):
        assert rep.width <= 1e-2
    small = [r for r in pair.c_gt0.records if r.c < min(pair.c_gt0.bracket[0], pair.c_neq0.bracket[0])]
    assert small
    for r in small:
        assert r.branch == "flat"
        assert abs(r.m_c - r.hat_reference) <= 1e-4 * abs(r.m_c)
    large = [r for r in pair.c_neq0.records if r.c >= pair.c_neq0.bracket[1]]
    assert large and all(r.branch == "broken" for r in large)
    assert set(pair.to_dict()) == {"c_gt0", "c_neq0", "overlap", "errors"}
