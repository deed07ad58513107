import math
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from causal_hr.core.config import settings
from causal_hr.schemas.bootstrap import BootstrapConfig
from causal_hr.schemas.frailty import FrailtyFamily
from causal_hr.schemas.sensitivity import EstimationMethod, KernelOptions, WeightingMode, WeightingSpec
from causal_hr.schemas.simulation import Scenario


class StudyConfig(BaseModel):
    """
    Replication study over the Cartesian product of sample sizes, censoring
    fractions and tau values.
    """
    model_config = ConfigDict(frozen=True)

    scenario: Scenario
    replications: int = Field(..., ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    n: List[int] = Field(..., min_length=1)
    taus: List[float] = Field(..., min_length=1)
    censoring_fractions: List[float] = Field(default_factory=lambda: [0.2])
    methods: List[EstimationMethod] = Field(default_factory=lambda: [EstimationMethod.COX, EstimationMethod.KERNEL])
    families: List[FrailtyFamily] = Field(default_factory=lambda: [FrailtyFamily.GAMMA])
    beta: float = math.log(0.5)
    beta_z: Optional[float] = None
    event_rate_target: Optional[float] = Field(None, gt=0, lt=1)
    grid_points: int = Field(settings.DEFAULT_GRID_POINTS, ge=2)
    min_at_risk: int = Field(settings.DEFAULT_MIN_AT_RISK, ge=1)
    weighting: Optional[WeightingSpec] = Field(None, description="Defaults to stabilized IPTW for scenario II, none otherwise")
    kernel: KernelOptions = Field(default_factory=KernelOptions)
    bootstrap: Optional[BootstrapConfig] = Field(None, description="Bootstrap per replication; enables EST.SE and coverage")
    n_jobs: int = settings.N_JOBS

    @field_validator("scenario", mode="before")
    @classmethod
    def parse_scenario(cls, value):
        return Scenario.parse(value)

    @field_validator("families", mode="before")
    @classmethod
    def parse_families(cls, families):
        return [FrailtyFamily.parse(f) for f in families]

    @field_validator("n")
    @classmethod
    def check_sizes(cls, sizes: List[int]) -> List[int]:
        if any(size < 2 for size in sizes):
            raise ValueError("sample sizes must be at least 2")
        return sizes

    @field_validator("taus")
    @classmethod
    def check_taus(cls, taus: List[float]) -> List[float]:
        if any(not 0 < tau < 1 for tau in taus):
            raise ValueError("tau values must lie in (0, 1)")
        return taus

    @field_validator("censoring_fractions")
    @classmethod
    def check_censoring(cls, fractions: List[float]) -> List[float]:
        if any(not 0 <= f < 1 for f in fractions):
            raise ValueError("censoring fractions must lie in [0, 1)")
        return fractions

    @model_validator(mode="after")
    def check_study(self) -> "StudyConfig":
        if EstimationMethod.CONDITIONAL_COX in self.methods:
            raise ValueError("conditional_cox is added automatically for scenario II")
        if self.scenario is Scenario.II and (self.beta_z is None or self.event_rate_target is None):
            raise ValueError("scenario II studies require beta_z and event_rate_target")
        return self

    @property
    def effective_weighting(self) -> WeightingSpec:
        if self.weighting is not None:
            return self.weighting
        if self.scenario is Scenario.II:
            return WeightingSpec(mode=WeightingMode.IPTW, stabilized=True)
        return WeightingSpec()
