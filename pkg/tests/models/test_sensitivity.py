import numpy as np
import pytest

from causal_hr.models.cox import fit_cox
from causal_hr.models.frailty import tau_to_theta
from causal_hr.models.kernel import smooth_hazard
from causal_hr.models.sensitivity import (
    CURVE_COLUMNS,
    conditional_cox_curve,
    curves_to_frame,
    estimate_components,
    kernel_hrc,
    run_sensitivity,
)
from causal_hr.models.survival import build_time_grid
from causal_hr.schemas.frailty import FrailtyFamily, FrailtySpec
from causal_hr.schemas.kernel import BandwidthPlan, KernelSpec
from causal_hr.schemas.sample import StepFunction, TimeGrid
from causal_hr.schemas.sensitivity import (
    CurveFlag,
    EstimationMethod,
    SensitivityRequest,
    WeightingMode,
    WeightingSpec,
)


def _hazard(jumps, masses, grid: TimeGrid, bandwidth: float):
    spec = KernelSpec.from_grid(grid)
    increments = StepFunction(jump_times=jumps, increments=masses)
    return smooth_hazard(increments, spec, BandwidthPlan.constant(grid, bandwidth), arm_event_count=len(jumps))


def test_kernel_hrc_identical_arms():
    """Test that identical smoothed hazards give HR^C = 1 for any Gamma theta."""
    grid = TimeGrid.linspace(0.0, 4.0, 9)
    hazard = _hazard([0.5, 1.0, 1.7, 2.2, 3.1], [0.1, 0.1, 0.2, 0.1, 0.3], grid, 1.5)

    curve = kernel_hrc(hazard, hazard, FrailtySpec(family=FrailtyFamily.GAMMA, theta=4.0))

    ok = curve.ok_mask
    assert ok.any()
    np.testing.assert_allclose(curve.estimate[ok], 1.0, rtol=1e-14)


def test_kernel_hrc_zero_variance_limit():
    grid = TimeGrid.linspace(0.0, 4.0, 9)
    sh1 = _hazard([0.5, 1.5, 2.5], [0.05, 0.1, 0.1], grid, 1.9)
    sh0 = _hazard([0.4, 1.2, 2.0, 3.0], [0.1, 0.2, 0.2, 0.2], grid, 1.9)

    curve = kernel_hrc(sh1, sh0, FrailtySpec(family=FrailtyFamily.GAMMA, theta=1e-12))

    ok = curve.ok_mask
    np.testing.assert_allclose(curve.estimate[ok], sh1.values[ok] / sh0.values[ok], rtol=1e-9)


def test_kernel_hrc_grid_mismatch():
    sh1 = _hazard([0.5], [0.1], TimeGrid.linspace(0.0, 4.0, 9), 1.0)
    sh0 = _hazard([0.5], [0.1], TimeGrid.linspace(0.0, 4.0, 5), 1.0)

    with pytest.raises(ValueError, match="same grid"):
        kernel_hrc(sh1, sh0, FrailtySpec(family=FrailtyFamily.GAMMA, theta=1.0))


def test_kernel_hrc_zero_control_hazard_unavailable():
    grid = TimeGrid.linspace(0.0, 4.0, 9)
    sh1 = _hazard([0.5, 3.5], [0.1, 0.1], grid, 0.5)
    sh0 = _hazard([0.5], [0.1], grid, 0.5)

    curve = kernel_hrc(sh1, sh0, FrailtySpec(family=FrailtyFamily.GAMMA, theta=1.0))

    assert curve.flags[-1] is CurveFlag.UNAVAILABLE
    assert np.isnan(curve.estimate[-1])


def test_request_rejects_out_of_range_tau():
    with pytest.raises(ValueError, match="tau"):
        SensitivityRequest(families=["ig"], taus=[0.6])


def test_run_sensitivity_composition(scenario_ia_sample):
    """Test that a multi-tau request matches individually computed curves."""
    taus = [0.1, 0.3, 0.5, 0.7]
    req = SensitivityRequest(method=EstimationMethod.COX, families=["gamma"], taus=taus)

    curves = run_sensitivity(scenario_ia_sample, req)

    # Check result
    assert [c.tau for c in curves] == taus
    for curve in curves:
        single = run_sensitivity(
            scenario_ia_sample, SensitivityRequest(method=EstimationMethod.COX, families=["gamma"], taus=[curve.tau]),
        )[0]
        np.testing.assert_array_equal(curve.estimate, single.estimate)


def test_run_sensitivity_cox_recomputation(scenario_ia_sample):
    """Test the Cox backend against exp{beta + theta Lambda0 (exp(beta) - 1)} from the same fit."""
    req = SensitivityRequest(method=EstimationMethod.COX, families=["gamma"], taus=[0.7])
    fit = fit_cox(scenario_ia_sample)
    theta = tau_to_theta(FrailtyFamily.GAMMA, 0.7).theta

    curve = run_sensitivity(scenario_ia_sample, req)[0]

    beta = fit.beta[0]
    expected = np.exp(beta + theta * fit.baseline_cumhaz(curve.grid.points) * (np.exp(beta) - 1.0))
    np.testing.assert_allclose(curve.estimate, expected, rtol=1e-12)


def test_iptw_without_covariates_matches_unweighted(scenario_ia_sample):
    """Test that randomized data give identical curves with and without IPTW."""
    plain = SensitivityRequest(method=EstimationMethod.KERNEL, families=["gamma"], taus=[0.5])
    weighted = plain.model_copy(update={"weighting": WeightingSpec(mode=WeightingMode.IPTW)})

    a = run_sensitivity(scenario_ia_sample, plain)[0]
    b = run_sensitivity(scenario_ia_sample, weighted)[0]

    np.testing.assert_allclose(a.estimate, b.estimate, rtol=1e-12)


def test_kernel_backend_reuses_plans(scenario_ia_sample):
    req = SensitivityRequest(method=EstimationMethod.KERNEL, families=["gamma", "ig"], taus=[0.3])
    components = estimate_components(scenario_ia_sample, req)

    again = estimate_components(scenario_ia_sample, req, plans=components.plans, grid=components.grid)

    np.testing.assert_array_equal(components.hazard0.values, again.hazard0.values)
    np.testing.assert_array_equal(components.hazard1.values, again.hazard1.values)


def test_conditional_cox_curve_is_constant(scenario_ii_sample):
    grid = TimeGrid.linspace(0.0, 10.0, 11)

    curve = conditional_cox_curve(scenario_ii_sample, grid, FrailtyFamily.GAMMA, 0.5)

    assert curve.method is EstimationMethod.CONDITIONAL_COX
    assert np.all(curve.estimate == curve.estimate[0])
    assert 0.0 < curve.estimate[0] < 1.0


def test_curves_to_frame(scenario_ia_sample):
    grid = build_time_grid(scenario_ia_sample, n_points=5)
    req = SensitivityRequest(method=EstimationMethod.COX, families=["gamma", "ps"], taus=[0.3], grid=grid)

    frame = curves_to_frame(run_sensitivity(scenario_ia_sample, req))

    assert list(frame.columns) == CURVE_COLUMNS
    assert len(frame) == 10
    assert set(frame["family"]) == {"gamma", "positive_stable"}
    assert frame["se"].isna().all()


def test_kernel_hrc_decreases_with_theta_when_treated_cumulative_is_lower():
    """Test that a larger Gamma theta lowers HR^C wherever Lambda1 < Lambda0 and leaves it unchanged where they tie."""
    grid = TimeGrid.linspace(0.0, 4.0, 9)
    sh1 = _hazard([0.5, 1.5, 2.5], [0.05, 0.1, 0.1], grid, 1.9)
    sh0 = _hazard([0.4, 1.2, 2.0, 3.0], [0.1, 0.2, 0.2, 0.2], grid, 1.9)
    lower = sh1.increments(grid.points) < sh0.increments(grid.points)

    curves = [kernel_hrc(sh1, sh0, FrailtySpec(family=FrailtyFamily.GAMMA, theta=theta)) for theta in (0.5, 1.0, 2.0, 4.0)]

    # Check result
    ok = np.logical_and.reduce([c.ok_mask for c in curves])
    estimates = np.array([c.estimate for c in curves])
    assert (ok & lower).any()
    assert np.all(np.diff(estimates[:, ok & lower], axis=0) < 0)
    np.testing.assert_array_equal(np.diff(estimates[:, ok & ~lower], axis=0), 0.0)


def test_cox_hrc_moves_with_sign_of_beta_as_tau_grows(scenario_ia_sample):
    taus = [0.1, 0.3, 0.5, 0.7]
    beta = fit_cox(scenario_ia_sample).beta[0]

    curves = run_sensitivity(scenario_ia_sample, SensitivityRequest(method=EstimationMethod.COX, families=["gamma"], taus=taus))

    # the Breslow baseline is positive from the first event time, where the grid starts
    estimates = np.array([c.estimate for c in curves])
    assert np.all(np.sign(np.diff(estimates, axis=0)) == np.sign(beta))


@pytest.mark.parametrize("method", [EstimationMethod.KERNEL, EstimationMethod.COX])
def test_curves_do_not_depend_on_subject_order(scenario_ia_sample, method):
    """Test that shuffling the rows gives bit-identical curves."""
    req = SensitivityRequest(method=method, families=["gamma", "ps"], taus=[0.4])
    shuffled = scenario_ia_sample.take(np.random.default_rng(17).permutation(scenario_ia_sample.n))

    original = run_sensitivity(scenario_ia_sample, req)
    permuted = run_sensitivity(shuffled, req)

    for a, b in zip(original, permuted):
        np.testing.assert_array_equal(a.grid.points, b.grid.points)
        np.testing.assert_array_equal(a.estimate, b.estimate)
        assert a.flags == b.flags


@pytest.mark.parametrize("family,tau,theta", [
    (FrailtyFamily.GAMMA, 0.5, 2.0),
    (FrailtyFamily.POSITIVE_STABLE, 0.25, 0.75),
])
def test_tau_and_equivalent_theta_give_identical_curves(scenario_ia_sample, family, tau, theta):
    req = SensitivityRequest(method=EstimationMethod.KERNEL, families=[family], taus=[tau])
    components = estimate_components(scenario_ia_sample, req)

    from_tau = run_sensitivity(scenario_ia_sample, req)[0]
    from_theta = kernel_hrc(components.hazard1, components.hazard0, FrailtySpec(family=family, theta=theta))

    assert from_tau.theta == theta
    np.testing.assert_array_equal(from_tau.estimate, from_theta.estimate)
    assert from_tau.flags == from_theta.flags
