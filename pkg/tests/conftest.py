import math
from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from causal_hr.core.datasets import sample_to_frame, write_csv
from causal_hr.models.simulation import generate
from causal_hr.schemas.sample import SurvivalSample
from causal_hr.schemas.simulation import CensoringSpec, Scenario, ScenarioSpec


# Hand-checkable samples
@pytest.fixture
def toy_sample() -> SurvivalSample:
    """Arm 0 fails at 1 and 3, arm 1 at 2 and 4."""
    return SurvivalSample.from_arrays(
        time=[1.0, 3.0, 2.0, 4.0],
        event=[1, 1, 1, 1],
        treatment=[0, 0, 1, 1],
    )


@pytest.fixture
def symmetric_sample() -> SurvivalSample:
    """Identical event/censoring patterns in both arms."""
    return SurvivalSample.from_arrays(
        time=[1.0, 2.0, 3.0, 1.0, 2.0, 3.0],
        event=[1, 0, 1, 1, 0, 1],
        treatment=[0, 0, 0, 1, 1, 1],
    )


# Simulated samples; rates are fixed to skip calibration
@pytest.fixture(scope="session")
def scenario_ia_spec() -> ScenarioSpec:
    return ScenarioSpec(
        scenario=Scenario.IA,
        tau=0.7,
        n=600,
        censoring=CensoringSpec(kind="rate", fraction=0.2),
        censoring_rate=0.15,
    )


@pytest.fixture(scope="session")
def scenario_ia_sample(scenario_ia_spec) -> SurvivalSample:
    return generate(scenario_ia_spec, seed=20240101).sample


@pytest.fixture(scope="session")
def scenario_ii_spec() -> ScenarioSpec:
    return ScenarioSpec(
        scenario=Scenario.II,
        tau=0.5,
        n=800,
        censoring=CensoringSpec(kind="administrative", time=10.0),
        beta_z=math.log(0.9),
        event_scale=0.05,
    )


@pytest.fixture(scope="session")
def scenario_ii_sample(scenario_ii_spec) -> SurvivalSample:
    return generate(scenario_ii_spec, seed=7).sample


@pytest.fixture
def exponential_sample() -> SurvivalSample:
    """Randomized constant-hazard data: rate 1 in both arms, light censoring."""
    rng = np.random.default_rng(12345)
    n = 2000
    t = rng.exponential(1.0, size=n)
    c = rng.exponential(5.0, size=n)
    return SurvivalSample.from_arrays(
        time=np.minimum(t, c),
        event=t <= c,
        treatment=rng.integers(0, 2, size=n),
    )


@pytest.fixture
def sample_csv(tmp_path: Path, scenario_ii_sample: SurvivalSample) -> Path:
    """Scenario II sample written in the input format."""
    path = tmp_path / "sample.csv"
    write_csv(sample_to_frame(scenario_ii_sample), path)
    return path


@pytest.fixture
def write_text(tmp_path: Path) -> Callable[[str, str], Path]:
    def _write(name: str, content: str) -> Path:
        path = tmp_path / name
        path.write_text(content, encoding="utf-8")
        return path
    return _write
