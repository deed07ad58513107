from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from causal_hr.schemas.base import ArrayModel, FloatArray
from causal_hr.schemas.sample import StepFunction, TimeGrid


class KernelSpec(BaseModel):
    """Support [beg, end] of the Epanechnikov boundary kernel."""
    model_config = ConfigDict(frozen=True)

    beg: float = Field(..., ge=0, allow_inf_nan=False)
    end: float = Field(..., allow_inf_nan=False)

    @model_validator(mode="after")
    def check_support(self) -> "KernelSpec":
        if not self.beg < self.end:
            raise ValueError("kernel support requires beg < end")
        return self

    @classmethod
    def from_grid(cls, grid: TimeGrid) -> "KernelSpec":
        return cls(beg=grid.t_min, end=grid.t_max)

    @property
    def width(self) -> float:
        return self.end - self.beg

    @property
    def max_bandwidth(self) -> float:
        return self.width / 2.0

    def contains(self, points: np.ndarray) -> bool:
        return bool(np.all((points >= self.beg) & (points <= self.end)))


class BandwidthPlan(ArrayModel):
    """Local bandwidth b(t) at every grid point."""
    grid: TimeGrid
    local_bandwidth: FloatArray
    candidate_set: FloatArray
    raw_bandwidth: Optional[FloatArray] = Field(None, description="Per-point argmin before stabilization")
    pilot_bandwidth: Optional[float] = None
    clamped_points: List[float] = Field(default_factory=list, description="Grid points where the survival factor was clamped")

    @model_validator(mode="after")
    def check_plan(self) -> "BandwidthPlan":
        if self.local_bandwidth.shape[0] != self.grid.count:
            raise ValueError("one bandwidth per grid point is required")
        if self.candidate_set.size == 0 or np.any(self.candidate_set <= 0):
            raise ValueError("candidate bandwidths must be positive")
        if np.any(self.local_bandwidth <= 0) or not np.all(np.isfinite(self.local_bandwidth)):
            raise ValueError("local bandwidths must be positive and finite")
        return self

    @classmethod
    def constant(cls, grid: TimeGrid, bandwidth: float) -> "BandwidthPlan":
        return cls(grid=grid, local_bandwidth=np.full(grid.count, float(bandwidth)), candidate_set=[bandwidth])


class SmoothedHazard(ArrayModel):
    """Kernel-smoothed hazard of one arm on a grid."""
    grid: TimeGrid
    values: FloatArray
    plan: BandwidthPlan
    cumulative: FloatArray
    increments: StepFunction = Field(..., description="Nelson-Aalen increments that were smoothed")
    event_count: int = Field(..., ge=0)

    @model_validator(mode="after")
    def check_values(self) -> "SmoothedHazard":
        if self.values.shape[0] != self.grid.count or self.cumulative.shape[0] != self.grid.count:
            raise ValueError("values and cumulative must have one entry per grid point")
        if np.any(self.values < 0):
            raise ValueError("smoothed hazard must be nonnegative")
        if np.any(np.diff(self.cumulative) < 0):
            raise ValueError("cumulative hazard must be non-decreasing")
        return self


class LocalMSE(BaseModel):
    """Estimated local mean squared error of the smoothed hazard at (t, b)."""
    t: float
    bandwidth: float
    variance: float
    bias: float
    mse: float
    clamped: bool = Field(False, description="The survival factor hit zero and was clamped")


class KernelContext(ArrayModel):
    """Per-arm data needed to estimate the local MSE."""
    spec: KernelSpec
    increments: StepFunction
    event_times: FloatArray = Field(..., description="Sorted event times of the arm")
    event_weights: FloatArray = Field(..., description="Mean-one weights of the arm's event subjects")
    total_weight: float = Field(..., ge=0, description="Sum of mean-one weights over the arm's events")
    event_count: int = Field(..., ge=0)

    @model_validator(mode="after")
    def check_context(self) -> "KernelContext":
        if self.event_times.shape != self.event_weights.shape:
            raise ValueError("event_times and event_weights must align")
        return self
