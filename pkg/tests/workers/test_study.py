import math

import numpy as np
import pandas as pd
import pytest

from causal_hr.schemas.sensitivity import EstimationMethod, WeightingMode
from causal_hr.schemas.simulation import CensoringSpec, Scenario, ScenarioSpec
from causal_hr.schemas.study import StudyConfig
from causal_hr.workers.study import SUMMARY_COLUMNS, run_study, study_settings, summarize


@pytest.fixture
def small_study():
    return StudyConfig(
        scenario="Ia",
        replications=1,
        seed=17,
        n=[300],
        taus=[0.5],
        censoring_fractions=[0.2],
        methods=[EstimationMethod.COX],
        grid_points=11,
    )


def test_settings_cartesian_product():
    config = StudyConfig(scenario="Ib", replications=2, n=[100, 200], taus=[0.3, 0.7], censoring_fractions=[0.1, 0.4])

    specs = study_settings(config)

    assert len(specs) == 8
    assert [(s.n, s.censoring.fraction, s.tau) for s in specs[:2]] == [(100, 0.1, 0.3), (100, 0.1, 0.7)]


def test_scenario_ii_defaults_to_stabilized_iptw():
    config = StudyConfig(scenario="II", replications=1, n=[100], taus=[0.5], beta_z=math.log(0.9), event_rate_target=0.5)

    assert config.effective_weighting.mode is WeightingMode.IPTW
    assert config.effective_weighting.stabilized


def test_conditional_cox_is_not_a_study_method():
    with pytest.raises(ValueError, match="conditional_cox"):
        StudyConfig(scenario="Ia", replications=1, n=[100], taus=[0.5], methods=["conditional_cox"])


def test_single_replication_summary(small_study):
    """Test that one replication reports NaN EMP.SD and the single_replication flag."""
    result = run_study(small_study)

    summary = result.summary
    # Check result
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(summary) == 11
    assert summary["emp_sd"].isna().all()
    assert (summary["flag"] == "single_replication").all()
    assert summary["coverage"].isna().all()
    assert set(result.grids) == {0}


def test_study_is_reproducible(small_study):
    """Test that identical seeds give identical summaries."""
    a = run_study(small_study)
    b = run_study(small_study)

    pd.testing.assert_frame_equal(a.summary, b.summary)
    pd.testing.assert_frame_equal(a.replicates, b.replicates)


def test_true_value_is_attached(small_study):
    result = run_study(small_study)

    summary = result.summary
    theta = 2 * 0.5 / 0.5
    expected = np.exp(math.log(0.5) + theta * summary["t"] * (0.5 - 1.0))
    np.testing.assert_allclose(summary["true_hrc"], expected, rtol=1e-12)
    np.testing.assert_allclose(summary["bias"], summary["mean_estimate"] - summary["true_hrc"])


def test_summarize_by_hand():
    """Test bias, EMP.SD, EST.SE and coverage on a hand-built replicate table."""
    spec = ScenarioSpec(scenario="Ib", tau=0.5, n=10, censoring=CensoringSpec(fraction=0.2))
    replicates = pd.DataFrame({
        "setting": 0, "n": 10, "censoring": 0.2, "tau": 0.5,
        "method": "cox", "family": "gamma", "t": 1.0,
        "replicate": [0, 1, 2],
        "estimate": [0.4, 0.6, np.nan],
        "se": [0.1, 0.3, np.nan],
        "ci_lo": [0.3, 0.55, np.nan],
        "ci_hi": [0.6, 0.9, np.nan],
    })

    row = summarize(replicates, [spec], n_replications=3).iloc[0]

    # Check result
    assert row["true_hrc"] == pytest.approx(0.5)
    assert row["mean_estimate"] == pytest.approx(0.5)
    assert row["bias"] == pytest.approx(0.0, abs=1e-12)
    assert row["emp_sd"] == pytest.approx(np.std([0.4, 0.6], ddof=1))
    assert row["est_se"] == pytest.approx(0.2)
    assert row["se_ratio"] == pytest.approx(0.2 / np.std([0.4, 0.6], ddof=1))
    assert row["coverage"] == pytest.approx(0.5)
    assert row["n_valid"] == 2
    assert row["flag"] == "ok"


def test_scenario_ii_adds_conditional_cox():
    config = StudyConfig(
        scenario=Scenario.II, replications=1, seed=3, n=[400], taus=[0.5],
        beta_z=math.log(0.9), event_rate_target=0.5, methods=[EstimationMethod.COX], grid_points=6,
    )

    result = run_study(config)

    assert set(result.summary["method"]) == {"cox", "conditional_cox"}
    assert result.grids[0].t_min == 0.0 and result.grids[0].t_max == 10.0
