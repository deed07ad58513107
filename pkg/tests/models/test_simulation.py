import math

import numpy as np
import pytest
from scipy import stats

from causal_hr.core.exceptions import CalibrationError
from causal_hr.models.simulation import (
    CENSORING_BRACKET,
    calibrate_censoring_rate,
    calibrate_event_scale,
    generate,
    hidden_frame,
    true_hrc,
)
from causal_hr.models.survival import nelson_aalen
from causal_hr.models.weights import fit_logistic
from causal_hr.schemas.sample import SurvivalSample
from causal_hr.schemas.simulation import CensoringSpec, Scenario, ScenarioSpec


def _spec(scenario="Ia", **overrides):
    params = {
        "scenario": scenario,
        "tau": 0.7,
        "n": 500,
        "censoring": ScenarioSpec.default_censoring(Scenario.parse(scenario)),
    }
    if Scenario.parse(scenario) is Scenario.II:
        params.update(beta_z=math.log(0.9), event_rate_target=0.5)
    params.update(overrides)
    return ScenarioSpec(**params)


def test_true_hrc_scenario_ia():
    """Test the analytic causal hazard ratio of the shared Gamma frailty scenario."""
    spec = _spec()

    # Check result
    assert true_hrc(spec, 0.0) == pytest.approx(0.5, rel=1e-12)
    assert true_hrc(spec, 1.0) == pytest.approx(math.exp(math.log(0.5) - 7.0 / 3.0), rel=1e-12)
    assert true_hrc(spec, 1.0) == pytest.approx(0.0485, abs=5e-5)


def test_true_hrc_constant_scenarios():
    t = np.linspace(0.0, 5.0, 6)

    np.testing.assert_allclose(true_hrc(_spec("Ib"), t), 0.5, rtol=1e-12)
    np.testing.assert_allclose(true_hrc(_spec("II", tau=0.5), t), 0.5, rtol=1e-12)


def test_scenario_ii_requires_confounder_effect():
    with pytest.raises(ValueError, match="beta_z"):
        ScenarioSpec(scenario="II", tau=0.5, n=10, censoring=CensoringSpec(kind="administrative", time=10.0),
                     event_rate_target=0.5)


def test_scenario_rejects_wrong_censoring_kind():
    with pytest.raises(ValueError, match="rate-targeted"):
        ScenarioSpec(scenario="Ia", tau=0.5, n=10, censoring=CensoringSpec(kind="administrative", time=10.0))


def test_generate_is_deterministic():
    """Test that one seed gives one dataset, and another seed a different one."""
    spec = _spec(censoring_rate=0.3)

    a = generate(spec, 11)
    b = generate(spec, 11)
    c = generate(spec, 12)

    # Check result
    np.testing.assert_array_equal(a.sample.time, b.sample.time)
    np.testing.assert_array_equal(a.frailty, b.frailty)
    assert not np.array_equal(a.sample.time, c.sample.time)


@pytest.mark.parametrize("scenario", ["Ia", "Ib", "II"])
def test_generate_consistency(scenario):
    """Test that observed data are the potential outcome of the assigned arm, censored."""
    spec = _spec(scenario, tau=0.5, censoring_rate=0.2) if scenario != "II" else _spec(scenario, tau=0.5)

    dataset = generate(spec, 3)

    sample = dataset.sample
    t_obs = np.where(sample.treatment == 1, dataset.t1, dataset.t0)
    np.testing.assert_array_equal(sample.time, np.minimum(t_obs, dataset.censoring))
    np.testing.assert_array_equal(sample.event, t_obs <= dataset.censoring)
    assert np.all(dataset.frailty > 0)
    assert sample.arm_size(0) > 0 and sample.arm_size(1) > 0


def test_generate_scenario_ii_covariate():
    dataset = generate(_spec("II", tau=0.5), 5)

    assert dataset.sample.n_covariates == 1
    assert np.all(dataset.censoring == 10.0)
    assert dataset.event_scale is not None


def test_frailty_has_unit_mean_and_gamma_variance():
    spec = _spec(n=50000, censoring_rate=0.1, tau=0.5)

    dataset = generate(spec, 1)

    assert dataset.frailty.mean() == pytest.approx(1.0, abs=0.03)
    assert dataset.frailty.var() == pytest.approx(spec.theta, rel=0.05)


def test_censoring_rate_monotone_in_target():
    low = calibrate_censoring_rate(_spec(censoring=CensoringSpec(fraction=0.1)), seed=2, pilot_size=5000)
    high = calibrate_censoring_rate(_spec(censoring=CensoringSpec(fraction=0.5)), seed=2, pilot_size=5000)

    assert 0 < low < high


def test_censoring_rate_zero_target():
    rate = calibrate_censoring_rate(_spec(censoring=CensoringSpec(fraction=0.0)), pilot_size=100)

    assert rate == CENSORING_BRACKET[0]


def test_censoring_calibration_hits_target():
    """Test that the realized censoring fraction is close to the target."""
    spec = _spec(n=40000, tau=0.5, censoring=CensoringSpec(fraction=0.3))

    dataset = generate(spec, 9)

    # Check result
    assert 1.0 - dataset.sample.event.mean() == pytest.approx(0.3, abs=0.015)
    assert dataset.censoring_rate is not None


def test_event_scale_calibration_hits_target():
    spec = _spec("II", tau=0.5, n=40000, event_rate_target=0.4)

    scale = calibrate_event_scale(spec, seed=4, pilot_size=40000)
    dataset = generate(spec.model_copy(update={"event_scale": scale}), 4)

    assert dataset.sample.event.mean() == pytest.approx(0.4, abs=0.015)


def test_event_scale_calibration_only_for_scenario_ii():
    with pytest.raises(CalibrationError):
        calibrate_event_scale(_spec(), pilot_size=100)


def test_hidden_frame_columns():
    dataset = generate(_spec(n=20, censoring_rate=0.5), 0)

    frame = hidden_frame(dataset)

    assert list(frame.columns) == ["id", "v", "t0", "t1", "c"]
    assert frame["id"].tolist() == dataset.sample.ids.tolist()


@pytest.mark.parametrize("scenario,tau", [("Ia", 0.7), ("Ib", 0.3)])
def test_potential_times_have_target_kendall_tau(scenario, tau):
    """Test that the shared frailty gives (T0, T1) the requested Kendall's tau."""
    dataset = generate(_spec(scenario, tau=tau, n=4000, censoring_rate=0.2), 21)

    observed = stats.kendalltau(dataset.t0, dataset.t1).statistic

    # Check result
    assert observed == pytest.approx(tau, abs=0.03)


def test_scenario_ia_marginal_cumulative_hazard():
    """Test that arm a has marginal cumulative hazard t exp(beta a) despite the time-varying conditional hazard."""
    spec = _spec(n=20000, censoring_rate=0.1)
    dataset = generate(spec, 4)
    n = spec.n
    uncensored = SurvivalSample.from_arrays(
        time=np.concatenate([dataset.t0, dataset.t1]),
        event=np.ones(2 * n, dtype=bool),
        treatment=np.repeat([0, 1], n),
    )
    t = np.array([0.3, 0.6, 1.0])

    for arm in (0, 1):
        cumhaz = nelson_aalen(uncensored, arm)(t)
        np.testing.assert_allclose(cumhaz, t * math.exp(spec.beta * arm), rtol=0.06)


def test_null_effect_gives_exchangeable_arms():
    spec = _spec(beta=0.0, n=4000, censoring_rate=0.1)
    dataset = generate(spec, 9)
    treated = dataset.sample.treatment == 1

    result = stats.ks_2samp(dataset.t0[~treated], dataset.t1[treated])

    assert result.pvalue > 0.01
    assert true_hrc(spec, 2.0) == pytest.approx(1.0, abs=1e-15)


def test_scenario_ii_treatment_follows_logistic_law():
    """Test that Pr(A = 1 | z) = expit(log(0.5) z) in the confounded scenario."""
    dataset = generate(_spec("II", tau=0.5, n=20000), 13)

    model = fit_logistic(dataset.sample)

    assert model.coefficients[0] == pytest.approx(0.0, abs=0.05)
    assert model.coefficients[1] == pytest.approx(math.log(0.5), abs=0.05)
