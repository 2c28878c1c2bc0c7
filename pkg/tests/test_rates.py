"""Ladders, rate fitting, and table rendering."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampled_sde import (ConfigurationError, EnsembleConfig, ExponentRule,
                         FitError, LadderSpec, RatioRule, ScaleParams,
                         TimeGrid, builtin_model, fit_rate, render_table,
                         run_ensemble, run_ladder)


def test_fit_rate_exact_power_laws():
    fit = fit_rate([(0.1, 0.1), (0.05, 0.05)])
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.r_squared == 1.0

    fit = fit_rate([(0.1, 0.01), (0.05, 0.0025)])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert len(fit.points) == 2


@settings(max_examples=100, deadline=None)
@given(slope=st.floats(min_value=-3, max_value=3),
       scale=st.floats(min_value=1e-3, max_value=1e3),
       n=st.integers(min_value=2, max_value=6))
def test_fit_rate_recovers_synthetic_order(slope, scale, n):
    eps = [2.0 ** -(k + 2) for k in range(n)]
    pts = [(e, scale * e ** slope) for e in eps]
    fit = fit_rate(pts)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    # near-zero slopes leave almost no total variation, which amplifies
    # rounding in the r^2 ratio
    assert fit.r_squared >= 1.0 - 1e-9


def test_fit_rate_preconditions():
    with pytest.raises(FitError):
        fit_rate([(0.1, 0.5)])
    with pytest.raises(FitError):
        fit_rate([(0.1, 0.5), (0.05, 0.0)])
    with pytest.raises(FitError):
        fit_rate([(0.1, 0.5), (0.05, -0.1)])


def test_delta_rules():
    ratio = RatioRule(2.0)
    s = ratio.scales(0.125)
    assert s.delta == 0.25 and s.c == 2.0

    power = ExponentRule(1.5)
    s2 = power.scales(0.25)
    assert s2.delta == pytest.approx(0.25 ** 1.5)
    assert s2.c == 0.0

    with pytest.raises(ConfigurationError):
        RatioRule(0.0)
    with pytest.raises(ConfigurationError):
        ExponentRule(1.0)


def test_ladder_validation():
    cfg = EnsembleConfig(n_paths=2, master_seed=0)
    with pytest.raises(ConfigurationError):
        LadderSpec(eps_values=(0.1, 0.2), delta_rule=RatioRule(2.0), per_rung=cfg)
    with pytest.raises(ConfigurationError):
        LadderSpec(eps_values=(), delta_rule=RatioRule(2.0), per_rung=cfg)
    with pytest.raises(ConfigurationError):
        LadderSpec(eps_values=(0.1, -0.05), delta_rule=RatioRule(2.0), per_rung=cfg)


def test_run_ladder_returns_one_point_per_rung():
    m = builtin_model("example3")
    ladder = LadderSpec(eps_values=(2 ** -3, 2 ** -4), delta_rule=RatioRule(2.0),
                        per_rung=EnsembleConfig(n_paths=30, master_seed=3, p=2))
    template = TimeGrid(horizon=2.0, h=2 ** -2 / 8, steps_per_sample=8)
    kept = []
    pts = run_ladder(m, ladder, template, "lln_sup", keep_stats=kept)
    assert [e for e, _ in pts] == [2 ** -3, 2 ** -4]
    assert all(v > 0 for _, v in pts)
    assert kept[0].delta == 2 ** -2 and kept[1].delta == 2 ** -3
    with pytest.raises(ConfigurationError):
        run_ladder(m, ladder, template, "nope")


def test_clt_ladder_example3_positive_order():
    # normalized-residual functional shrinks with the noise size on the
    # linear system; fine per-rung grid keeps kernel error subordinate
    m = builtin_model("example3")
    ladder = LadderSpec(eps_values=(2 ** -3, 2 ** -4, 2 ** -5),
                        delta_rule=RatioRule(2.0),
                        per_rung=EnsembleConfig(n_paths=200, master_seed=6, p=2))
    template = TimeGrid(horizon=16.0, h=2 ** -2 / 32, steps_per_sample=32)
    pts = run_ladder(m, ladder, template, "clt_sup", threads=4)
    assert fit_rate(pts).slope > 0
    assert pts[0][1] > pts[-1][1]


def test_single_rung_ladder_refuses_fit():
    m = builtin_model("example3")
    ladder = LadderSpec(eps_values=(2 ** -3,), delta_rule=RatioRule(2.0),
                        per_rung=EnsembleConfig(n_paths=10, master_seed=3, p=2))
    template = TimeGrid(horizon=1.0, h=2 ** -2 / 4, steps_per_sample=4)
    pts = run_ladder(m, ladder, template, "mean_resid_sup")
    assert len(pts) == 1
    with pytest.raises(FitError):
        fit_rate(pts)


def _stats_for(x0, eps, sup, minimum):
    m = builtin_model("example3", x0=x0)
    s = ScaleParams(eps=eps, delta=2 * eps, c=2.0)
    g = TimeGrid.for_scales(1.0, s, 4)
    st = run_ensemble(m, s, g, EnsembleConfig(n_paths=2, master_seed=0, p=1))
    import dataclasses
    return dataclasses.replace(st, sup_mean_resid_abs=sup, min_mean_resid_abs=minimum)


def test_render_table_layout_and_format():
    results = {
        (1.5, 2 ** -5): _stats_for(1.5, 2 ** -5, 5.0744e-4, 8.9676e-5),
        (-0.07, 2 ** -5): _stats_for(-0.07, 2 ** -5, 1.8e-3, 1.7179e-4),
        (-0.07, 2 ** -6): _stats_for(-0.07, 2 ** -6, 9.2053e-4, 3.9899e-5),
    }
    lines = render_table(results)
    assert lines[0] == "initial condition x0 = -0.07"
    assert "eps" in lines[1] and "|max error|" in lines[1]
    # eps descending within the section, four significant digits
    assert "3.125e-02" in lines[2] and "1.800e-03" in lines[2]
    assert "1.562e-02" in lines[3] and "9.205e-04" in lines[3]
    assert lines[4] == "initial condition x0 = 1.5"
    assert "5.074e-04" in lines[6] and "8.968e-05" in lines[6]

    shuffled = dict(reversed(list(results.items())))
    assert render_table(shuffled) == lines  # iteration order cannot matter


def test_render_table_single_and_empty():
    single = {(0.1, 2 ** -3): _stats_for(0.1, 2 ** -3, 1.64e-3, 3.2175e-4)}
    lines = render_table(single)
    assert len(lines) == 3  # section header, column header, one row
    with pytest.raises(ConfigurationError):
        render_table({})
