import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from causal_hr.core.exceptions import DegenerateGridError, EmptyArmError, NoEventsError
from causal_hr.models.survival import build_time_grid, kaplan_meier, logrank_test, nelson_aalen
from causal_hr.schemas.sample import StepFunction, SurvivalSample


def test_nelson_aalen_hand_enumeration():
    """Test cumulative hazard against hand-enumerated risk sets."""
    sample = SurvivalSample.from_arrays(time=[1.0, 2.0, 3.0, 5.0], event=[1, 0, 1, 1], treatment=[0, 0, 0, 1])

    cumhaz = nelson_aalen(sample, arm=0)

    # Check result
    np.testing.assert_array_equal(cumhaz.jump_times, [1.0, 3.0])
    assert cumhaz(0.5) == 0.0
    assert cumhaz(1.0) == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert cumhaz(3.0) == pytest.approx(4.0 / 3.0, abs=1e-15)
    assert cumhaz(10.0) == pytest.approx(4.0 / 3.0, abs=1e-15)


def test_nelson_aalen_single_subject():
    sample = SurvivalSample.from_arrays(time=[2.0, 1.0], event=[1, 1], treatment=[0, 1])

    cumhaz = nelson_aalen(sample, arm=0)

    assert cumhaz(1.999) == 0.0
    assert cumhaz(2.0) == 1.0
    assert cumhaz(7.0) == 1.0


def test_nelson_aalen_unit_weights_match_unweighted(scenario_ia_sample):
    """Test that weights of one reproduce the unweighted estimator exactly."""
    plain = nelson_aalen(scenario_ia_sample, arm=1)
    weighted = nelson_aalen(scenario_ia_sample, arm=1, weights=np.ones(scenario_ia_sample.n))

    np.testing.assert_array_equal(plain.jump_times, weighted.jump_times)
    np.testing.assert_array_equal(plain.increments, weighted.increments)


def test_nelson_aalen_tied_events():
    """Tied events are pooled into a single jump."""
    sample = SurvivalSample.from_arrays(time=[1.0, 1.0, 2.0, 3.0], event=[1, 1, 1, 0], treatment=[1, 1, 1, 0])

    cumhaz = nelson_aalen(sample, arm=1)

    np.testing.assert_array_equal(cumhaz.jump_times, [1.0, 2.0])
    np.testing.assert_allclose(cumhaz.increments, [2.0 / 3.0, 1.0])


def test_nelson_aalen_empty_arm():
    sample = SurvivalSample.from_arrays(time=[1.0, 2.0], event=[1, 1], treatment=[0, 0])

    with pytest.raises(EmptyArmError, match="empty treatment arm"):
        nelson_aalen(sample, arm=1)


def test_kaplan_meier_product_limit():
    """Test the product-limit estimator on two events."""
    sample = SurvivalSample.from_arrays(time=[1.0, 2.0, 4.0], event=[1, 1, 0], treatment=[0, 0, 1])

    survival = kaplan_meier(sample, arm=0)

    # Check result
    assert survival(0.0) == 1.0
    assert survival(1.0) == 0.5
    assert survival(2.0) == 0.0


def test_kaplan_meier_without_events():
    sample = SurvivalSample.from_arrays(time=[1.0, 2.0, 4.0], event=[0, 0, 1], treatment=[0, 0, 1])

    survival = kaplan_meier(sample, arm=0)

    assert survival.size == 0
    assert survival(100.0) == 1.0


def test_kaplan_meier_constant_weights(scenario_ia_sample):
    """Test that a constant weight leaves the curve unchanged."""
    plain = kaplan_meier(scenario_ia_sample, arm=0)
    scaled = kaplan_meier(scenario_ia_sample, arm=0, weights=np.full(scenario_ia_sample.n, 3.7))

    np.testing.assert_array_equal(plain.jump_times, scaled.jump_times)
    np.testing.assert_allclose(plain.levels, scaled.levels, rtol=1e-12)


def test_logrank_hand_computation(toy_sample):
    """Test observed minus expected and the hypergeometric variance on a toy case."""
    result = logrank_test(toy_sample)

    # Check result
    assert result.observed - result.expected == pytest.approx(-2.0 / 3.0, abs=1e-12)
    assert result.variance == pytest.approx(13.0 / 18.0, abs=1e-12)
    assert result.statistic == pytest.approx(8.0 / 13.0, abs=1e-12)
    assert 0.0 < result.p_value < 1.0
    assert result.weighted is False


def test_logrank_symmetric_arms(symmetric_sample):
    result = logrank_test(symmetric_sample)

    assert result.statistic == 0.0
    assert result.p_value == 1.0


def test_logrank_no_events():
    sample = SurvivalSample.from_arrays(time=[1.0, 2.0], event=[0, 0], treatment=[0, 1])

    with pytest.raises(NoEventsError, match="no events observed"):
        logrank_test(sample)


def test_logrank_order_invariance(scenario_ia_sample):
    """Test that permuting the subjects gives a bit-identical result."""
    permutation = np.random.default_rng(3).permutation(scenario_ia_sample.n)
    shuffled = scenario_ia_sample.take(permutation)

    assert logrank_test(shuffled).model_dump() == logrank_test(scenario_ia_sample).model_dump()


def test_time_grid_two_points(scenario_ia_sample):
    grid = build_time_grid(scenario_ia_sample, n_points=2)

    assert grid.count == 2
    assert grid.t_min == float(scenario_ia_sample.time[scenario_ia_sample.event].min())


def test_time_grid_fixed_bounds():
    grid = build_time_grid(n_points=51, bounds=(0.0, 10.0))

    assert grid.t_min == 0.0
    assert grid.t_max == 10.0
    assert grid.spacing == pytest.approx(0.2)


def test_time_grid_upper_point_by_risk_set_scan():
    """Test the last grid point against a direct count of subjects at risk."""
    rng = np.random.default_rng(8)
    time = np.round(rng.uniform(0.1, 5.0, size=30), 3)
    sample = SurvivalSample.from_arrays(time=time, event=np.ones(30), treatment=np.arange(30) % 2)

    grid = build_time_grid(sample, n_points=11, min_at_risk=5)

    # Check result
    def at_risk(t, arm):
        return int(np.sum((sample.time >= t) & (sample.treatment == arm)))

    candidates = np.sort(sample.time)
    feasible = [t for t in candidates if at_risk(t, 0) >= 5 and at_risk(t, 1) >= 5]
    assert grid.t_max == max(feasible)
    assert grid.t_min == sample.time.min()


def test_time_grid_degenerate():
    sample = SurvivalSample.from_arrays(time=[1.0, 2.0, 3.0, 4.0], event=[1, 1, 1, 1], treatment=[0, 0, 1, 1])

    with pytest.raises(DegenerateGridError, match="degenerate grid"):
        build_time_grid(sample, min_at_risk=5)


@hsettings(max_examples=30, deadline=None)
@given(scale=st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False))
def test_nelson_aalen_weight_scale_invariance(scale):
    """Property: multiplying all weights by a constant leaves the estimator unchanged."""
    sample = SurvivalSample.from_arrays(
        time=[0.5, 1.0, 1.0, 2.0, 2.5, 3.0, 0.7, 1.4],
        event=[1, 1, 0, 1, 0, 1, 1, 0],
        treatment=[0, 0, 0, 0, 0, 0, 1, 1],
    )
    weights = np.array([1.0, 2.0, 0.5, 1.5, 3.0, 1.0, 1.0, 1.0])

    base = nelson_aalen(sample, arm=0, weights=weights)
    scaled = nelson_aalen(sample, arm=0, weights=weights * scale)

    np.testing.assert_allclose(base.increments, scaled.increments, rtol=1e-12)


def test_sample_rejects_event_at_time_zero():
    with pytest.raises(ValueError, match="time > 0"):
        SurvivalSample.from_arrays(time=[0.0, 1.0], event=[1, 1], treatment=[0, 1])

    censored = SurvivalSample.from_arrays(time=[0.0, 1.0], event=[0, 1], treatment=[0, 1])
    assert censored.n_events == 1


def test_step_function_rejects_jump_at_origin():
    with pytest.raises(ValueError, match="positive"):
        StepFunction(jump_times=[0.0, 1.0], increments=[0.1, 0.2])
