from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from causal_hr.core.config import settings
from causal_hr.schemas.base import ArrayModel, FloatArray
from causal_hr.schemas.cox import CoxFit
from causal_hr.schemas.frailty import FrailtyFamily, check_tau
from causal_hr.schemas.kernel import BandwidthPlan, SmoothedHazard
from causal_hr.schemas.sample import TimeGrid
from causal_hr.schemas.weights import WeightVector


class EstimationMethod(str, Enum):
    COX = "cox"
    KERNEL = "kernel"
    CONDITIONAL_COX = "conditional_cox"


class CurveFlag(str, Enum):
    OK = "ok"
    UNSTABLE = "unstable"
    UNAVAILABLE = "unavailable"
    CI_UNRELIABLE = "ci_unreliable"


class WeightingMode(str, Enum):
    NONE = "none"
    IPTW = "iptw"


class WeightingSpec(BaseModel):
    """Whether and how subjects are inverse-probability weighted."""
    model_config = ConfigDict(frozen=True)

    mode: WeightingMode = WeightingMode.NONE
    stabilized: bool = True
    truncation_percentile: Optional[float] = Field(
        None, gt=0, le=1, description="Pooled percentile at which weights are capped; None disables truncation"
    )

    @property
    def enabled(self) -> bool:
        return self.mode is WeightingMode.IPTW


class GridRule(BaseModel):
    """How to build the estimation grid when none is given explicitly."""
    model_config = ConfigDict(frozen=True)

    n_points: int = Field(settings.DEFAULT_GRID_POINTS, ge=2)
    min_at_risk: int = Field(settings.DEFAULT_MIN_AT_RISK, ge=1)
    bounds: Optional[Tuple[float, float]] = Field(None, description="Fixed [t_min, t_max]")

    @field_validator("bounds")
    @classmethod
    def check_bounds(cls, bounds: Optional[Tuple[float, float]]) -> Optional[Tuple[float, float]]:
        if bounds is not None and not (0 <= bounds[0] < bounds[1] and np.isfinite(bounds[1])):
            raise ValueError("grid bounds must satisfy 0 <= t_min < t_max < inf")
        return bounds


class KernelOptions(BaseModel):
    """Settings of the kernel backend."""
    model_config = ConfigDict(frozen=True)

    support: Optional[Tuple[float, float]] = Field(None, description="Kernel support [beg, end]; defaults to the grid range")
    n_candidates: int = Field(21, ge=1, description="Number of geometrically spaced candidate bandwidths")

    @field_validator("support")
    @classmethod
    def check_support(cls, support: Optional[Tuple[float, float]]) -> Optional[Tuple[float, float]]:
        if support is not None and not support[0] < support[1]:
            raise ValueError("kernel support requires beg < end")
        return support


class SensitivityRequest(BaseModel):
    """One sweep of frailty families and Kendall's tau values for a single backend."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    method: EstimationMethod = EstimationMethod.KERNEL
    families: List[FrailtyFamily] = Field(..., min_length=1)
    taus: List[float] = Field(..., min_length=1)
    grid: Optional[TimeGrid] = None
    grid_rule: GridRule = Field(default_factory=GridRule)
    weighting: WeightingSpec = Field(default_factory=WeightingSpec)
    kernel: KernelOptions = Field(default_factory=KernelOptions)

    @field_validator("families", mode="before")
    @classmethod
    def parse_families(cls, families):
        return [FrailtyFamily.parse(f) for f in families]

    @model_validator(mode="after")
    def check_request(self) -> "SensitivityRequest":
        if self.method is EstimationMethod.CONDITIONAL_COX:
            raise ValueError("conditional_cox is a study comparator, not a sensitivity backend")
        for family in self.families:
            for tau in self.taus:
                check_tau(family, tau)
        return self


class SensitivityCurve(ArrayModel):
    """HR^C(t) on a grid for one (family, tau, method)."""
    family: FrailtyFamily
    tau: float
    theta: float
    method: EstimationMethod
    grid: TimeGrid
    estimate: FloatArray
    flags: List[CurveFlag]
    se: Optional[FloatArray] = None
    ci_lo: Optional[FloatArray] = None
    ci_hi: Optional[FloatArray] = None

    @model_validator(mode="after")
    def check_curve(self) -> "SensitivityCurve":
        m = self.grid.count
        if self.estimate.shape[0] != m or len(self.flags) != m:
            raise ValueError(f"curve must have one estimate and flag per grid point ({m})")
        for name in ("se", "ci_lo", "ci_hi"):
            values = getattr(self, name)
            if values is not None and values.shape[0] != m:
                raise ValueError(f"'{name}' must have one value per grid point")
        usable = self.ok_mask
        if usable.any():
            values = self.estimate[usable]
            if not np.all(np.isfinite(values)) or np.any(values <= 0):
                raise ValueError("estimates must be positive and finite where flagged ok")
        return self

    @property
    def ok_mask(self) -> np.ndarray:
        return np.array([f in (CurveFlag.OK, CurveFlag.CI_UNRELIABLE) for f in self.flags])

    @property
    def key(self) -> Tuple[str, float, str]:
        return self.family.value, self.tau, self.method.value


class SensitivityComponents(ArrayModel):
    """Frailty-independent pieces of one sensitivity run, reused across families and tau."""
    grid: TimeGrid
    weights: Optional[WeightVector] = None
    cox_fit: Optional[CoxFit] = None
    hazard0: Optional[SmoothedHazard] = None
    hazard1: Optional[SmoothedHazard] = None

    @property
    def plans(self) -> Optional[Tuple[BandwidthPlan, BandwidthPlan]]:
        if self.hazard0 is None or self.hazard1 is None:
            return None
        return self.hazard0.plan, self.hazard1.plan
