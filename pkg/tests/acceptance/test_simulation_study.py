import math

import numpy as np
import pandas as pd
import pytest

from causal_hr.schemas.bootstrap import BootstrapConfig
from causal_hr.schemas.sensitivity import EstimationMethod
from causal_hr.schemas.study import StudyConfig
from causal_hr.workers.study import run_study

pytestmark = pytest.mark.slow


def _rows(summary: pd.DataFrame, method: str, lo: float, hi: float) -> pd.DataFrame:
    rows = summary[(summary["method"] == method) & summary["t"].between(lo, hi)]
    assert not rows.empty, f"no {method} grid points in [{lo}, {hi}]"
    return rows.set_index("t")


def _interior(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.iloc[1:-1]


def test_scenario_ia_cox_bias():
    """Test that the Cox-based curve is nearly unbiased for t in [0.1, 1]."""
    config = StudyConfig(
        scenario="Ia", replications=200, seed=2024, n=[2000], taus=[0.7], censoring_fractions=[0.2],
        methods=[EstimationMethod.COX], n_jobs=-1,
    )

    summary = run_study(config).summary

    rows = _rows(summary, "cox", 0.1, 1.0)
    # Check result
    assert (rows["relative_bias"].abs() < 0.10).mean() >= 0.90


def test_scenario_ib_kernel_beats_cox():
    """Test that the kernel backend has smaller bias than Cox when marginal hazards are not proportional."""
    config = StudyConfig(
        scenario="Ib", replications=200, seed=77, n=[2000], taus=[0.7], censoring_fractions=[0.2],
        methods=[EstimationMethod.COX, EstimationMethod.KERNEL], n_jobs=-1,
    )

    summary = run_study(config).summary

    cox = _interior(_rows(summary, "cox", 1.0, 6.0))
    kernel = _interior(_rows(summary, "kernel", 1.0, 6.0)).reindex(cox.index)
    better = kernel["relative_bias"].abs() < cox["relative_bias"].abs()
    assert better.mean() >= 0.60


def test_scenario_ii_kernel_beats_conditional_cox():
    """Test the rare-event setting with a measured confounder against the naive conditional Cox ratio."""
    config = StudyConfig(
        scenario="II", replications=100, seed=5, n=[20000], taus=[0.7],
        beta_z=math.log(0.9), event_rate_target=0.05, methods=[EstimationMethod.KERNEL], n_jobs=-1,
    )

    summary = run_study(config).summary

    kernel = _interior(_rows(summary, "kernel", 0.0, 10.0))
    naive = _interior(_rows(summary, "conditional_cox", 0.0, 10.0)).reindex(kernel.index)
    # Check result
    assert (kernel["relative_bias"].abs() < 0.10).mean() >= 0.90
    assert (naive["relative_bias"].abs() > kernel["relative_bias"].abs()).mean() >= 0.80


def test_scenario_ia_bootstrap_coverage():
    """Test that 95% percentile intervals cover the true curve at close to the nominal rate."""
    config = StudyConfig(
        scenario="Ia", replications=200, seed=31, n=[2000], taus=[0.7], censoring_fractions=[0.2],
        methods=[EstimationMethod.COX], bootstrap=BootstrapConfig(replications=200), n_jobs=-1,
    )

    summary = run_study(config).summary

    cox = summary[summary["method"] == "cox"]
    for t in (0.3, 0.5):
        row = cox.iloc[int(np.argmin(np.abs(cox["t"].to_numpy() - t)))]
        assert 0.90 <= row["coverage"] <= 0.98
