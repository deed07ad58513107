import math
from enum import Enum
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from causal_hr.core.config import settings
from causal_hr.schemas.base import ArrayModel, FloatArray
from causal_hr.schemas.sample import SurvivalSample


class Scenario(str, Enum):
    IA = "Ia"
    IB = "Ib"
    II = "II"

    @classmethod
    def parse(cls, value: "str | Scenario") -> "Scenario":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown scenario '{value}', expected one of Ia, Ib, II")


class CensoringSpec(BaseModel):
    """Exponential censoring targeted at a fraction, or administrative censoring at a fixed time."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["rate", "administrative"] = "rate"
    fraction: Optional[float] = Field(None, ge=0, lt=1, description="Target censoring fraction")
    time: Optional[float] = Field(None, gt=0, description="Administrative censoring time")

    @model_validator(mode="after")
    def check_kind(self) -> "CensoringSpec":
        if self.kind == "rate" and self.fraction is None:
            raise ValueError("rate-targeted censoring requires a target fraction")
        if self.kind == "administrative" and self.time is None:
            raise ValueError("administrative censoring requires a time")
        return self


class ScenarioSpec(BaseModel):
    """
    Data-generating mechanism of one simulation scenario.

    ``censoring_rate`` and ``event_scale`` may be given to skip calibration,
    e.g. when many replications share one calibrated setting.
    """
    model_config = ConfigDict(frozen=True)

    scenario: Scenario
    tau: float = Field(..., gt=0, lt=1, description="Kendall's tau of the Gamma frailty")
    n: int = Field(..., ge=2)
    censoring: CensoringSpec
    beta: float = Field(math.log(0.5), allow_inf_nan=False, description="Treatment log hazard ratio")
    beta_z: Optional[float] = Field(None, allow_inf_nan=False, description="Confounder log hazard ratio (Scenario II)")
    event_rate_target: Optional[float] = Field(None, gt=0, le=1, description="Fraction of events before the censoring time (Scenario II)")
    censoring_rate: Optional[float] = Field(None, gt=0)
    event_scale: Optional[float] = Field(None, gt=0)

    @model_validator(mode="before")
    @classmethod
    def parse_scenario(cls, data):
        if isinstance(data, dict) and "scenario" in data:
            data = dict(data)
            data["scenario"] = Scenario.parse(data["scenario"])
        return data

    @model_validator(mode="after")
    def check_scenario(self) -> "ScenarioSpec":
        if self.scenario is Scenario.II:
            if self.beta_z is None:
                raise ValueError("scenario II requires beta_z")
            if self.event_rate_target is None and self.event_scale is None:
                raise ValueError("scenario II requires event_rate_target or event_scale")
            if self.censoring.kind != "administrative":
                raise ValueError("scenario II uses administrative censoring")
        elif self.censoring.kind != "rate":
            raise ValueError(f"scenario {self.scenario.value} uses rate-targeted exponential censoring")
        return self

    @classmethod
    def default_censoring(cls, scenario: Scenario, fraction: float = 0.2) -> CensoringSpec:
        if Scenario.parse(scenario) is Scenario.II:
            return CensoringSpec(kind="administrative", time=settings.ADMINISTRATIVE_CENSORING_TIME)
        return CensoringSpec(kind="rate", fraction=fraction)

    @property
    def theta(self) -> float:
        """Gamma frailty variance matching ``tau``."""
        return 2.0 * self.tau / (1.0 - self.tau)


class SimulatedDataset(ArrayModel):
    """Observed sample plus the hidden frailty, potential event times and censoring times."""
    spec: ScenarioSpec
    sample: SurvivalSample
    frailty: FloatArray
    t0: FloatArray
    t1: FloatArray
    censoring: FloatArray
    censoring_rate: Optional[float] = None
    event_scale: Optional[float] = None

    @model_validator(mode="after")
    def check_consistency(self) -> "SimulatedDataset":
        n = self.sample.n
        for name in ("frailty", "t0", "t1", "censoring"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"hidden column '{name}' must have one entry per subject")
        t_obs = np.where(self.sample.treatment == 1, self.t1, self.t0)
        if not np.array_equal(self.sample.time, np.minimum(t_obs, self.censoring)):
            raise ValueError("observed times are inconsistent with the potential outcomes")
        if not np.array_equal(self.sample.event, t_obs <= self.censoring):
            raise ValueError("event indicators are inconsistent with the potential outcomes")
        return self
