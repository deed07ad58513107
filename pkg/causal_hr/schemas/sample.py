from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from causal_hr.schemas.base import (
    ArrayModel, BoolArray, FloatArray, FloatMatrix, IntArray, StrArray,
)


class SubjectRecord(BaseModel):
    """Observed data (X, delta, A, Z) for one subject."""
    id: str = Field(..., description="Opaque subject identifier")
    time: float = Field(..., ge=0, allow_inf_nan=False, description="Follow-up time X")
    event: bool = Field(..., description="Event indicator, true when the event was observed")
    treatment: int = Field(..., ge=0, le=1, description="Treatment arm A")
    covariates: List[float] = Field(default_factory=list, description="Baseline covariates Z")


class SurvivalSample(ArrayModel):
    """
    Column-oriented, immutable survival sample.

    Records are stored as aligned arrays; ``records`` rebuilds SubjectRecord
    views on demand. Derived processes (Y(t), N(t)) are never stored.
    """
    ids: StrArray
    time: FloatArray
    event: BoolArray
    treatment: IntArray
    covariates: FloatMatrix
    covariate_names: List[str] = Field(default_factory=list)

    @model_validator(mode="before")
    @classmethod
    def fill_defaults(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        n = np.asarray(data.get("time", []), dtype=float).reshape(-1).shape[0]
        covariates = data.get("covariates")
        covariates = np.zeros((n, 0)) if covariates is None else np.asarray(covariates, dtype=float)
        if covariates.size == 0:
            covariates = _empty_covariates(n)
        elif covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)
        data["covariates"] = covariates
        if not data.get("covariate_names"):
            data["covariate_names"] = [f"z{j + 1}" for j in range(covariates.shape[1])]
        if data.get("ids") is None:
            data["ids"] = [str(i + 1) for i in range(n)]
        return data

    @model_validator(mode="after")
    def check_columns(self) -> "SurvivalSample":
        n = self.time.shape[0]
        if n == 0:
            raise ValueError("survival sample must contain at least one record")
        for name in ("ids", "event", "treatment"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"column '{name}' has {getattr(self, name).shape[0]} entries, expected {n}")
        if not np.all(np.isfinite(self.time)) or np.any(self.time < 0):
            raise ValueError("follow-up times must be finite and nonnegative")
        if np.any(self.event & (self.time == 0)):
            raise ValueError("observed events must occur at time > 0")
        if not np.all(np.isin(self.treatment, (0, 1))):
            raise ValueError("treatment must be 0 or 1")
        if self.covariates.shape[0] != n:
            raise ValueError("covariates must have one row per record")
        if len(self.covariate_names) != self.covariates.shape[1]:
            raise ValueError("covariate_names length does not match the covariate columns")
        return self

    @classmethod
    def from_records(cls, records: Sequence[Union[SubjectRecord, Dict[str, Any]]],
                     covariate_names: Optional[List[str]] = None) -> "SurvivalSample":
        """Build a sample from SubjectRecord objects (or dicts)."""
        parsed = [r if isinstance(r, SubjectRecord) else SubjectRecord(**r) for r in records]
        if not parsed:
            raise ValueError("survival sample must contain at least one record")
        widths = {len(r.covariates) for r in parsed}
        if len(widths) != 1:
            raise ValueError("covariates length must be identical across records")
        width = widths.pop()
        covariates = np.array([r.covariates for r in parsed], dtype=float).reshape(len(parsed), width)
        return cls(
            ids=[r.id for r in parsed],
            time=[r.time for r in parsed],
            event=[r.event for r in parsed],
            treatment=[r.treatment for r in parsed],
            covariates=covariates,
            covariate_names=covariate_names or [],
        )

    @classmethod
    def from_arrays(cls, time: Any, event: Any, treatment: Any, covariates: Any = None,
                    ids: Any = None, covariate_names: Optional[List[str]] = None) -> "SurvivalSample":
        return cls(
            ids=ids,
            time=time,
            event=event,
            treatment=treatment,
            covariates=covariates,
            covariate_names=covariate_names or [],
        )

    @property
    def n(self) -> int:
        return int(self.time.shape[0])

    @property
    def n_covariates(self) -> int:
        return int(self.covariates.shape[1])

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    def arm_mask(self, arm: int) -> np.ndarray:
        return self.treatment == arm

    def arm_size(self, arm: int) -> int:
        return int(self.arm_mask(arm).sum())

    @property
    def records(self) -> List[SubjectRecord]:
        return [
            SubjectRecord(
                id=str(self.ids[i]),
                time=float(self.time[i]),
                event=bool(self.event[i]),
                treatment=int(self.treatment[i]),
                covariates=[float(z) for z in self.covariates[i]],
            )
            for i in range(self.n)
        ]

    def take(self, indices: Any) -> "SurvivalSample":
        """Rows at ``indices`` (repeats allowed), e.g. a bootstrap resample."""
        idx = np.asarray(indices, dtype=np.int64)
        return SurvivalSample(
            ids=self.ids[idx],
            time=self.time[idx],
            event=self.event[idx],
            treatment=self.treatment[idx],
            covariates=self.covariates[idx],
            covariate_names=list(self.covariate_names),
        )


def _empty_covariates(n: int) -> np.ndarray:
    return np.zeros((n, 0), dtype=float)


class StepFunction(ArrayModel):
    """
    Right-continuous step function: value(t) = initial + sum of increments at
    jump_times <= t. Used for Nelson-Aalen and Breslow cumulative hazards
    (initial 0) and Kaplan-Meier survival (initial 1).
    """
    jump_times: FloatArray
    increments: FloatArray
    initial: float = 0.0
    levels: Optional[FloatArray] = None

    @model_validator(mode="before")
    @classmethod
    def fill_levels(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("levels") is None:
            increments = np.asarray(data.get("increments", []), dtype=float)
            data = dict(data)
            data["levels"] = float(data.get("initial", 0.0)) + np.cumsum(increments)
        return data

    @model_validator(mode="after")
    def check_jumps(self) -> "StepFunction":
        if self.jump_times.shape != self.increments.shape or self.levels.shape != self.increments.shape:
            raise ValueError("jump_times, increments and levels must have the same length")
        if self.jump_times.size:
            if np.any(self.jump_times <= 0):
                raise ValueError("jump times must be positive")
            if np.any(np.diff(self.jump_times) <= 0):
                raise ValueError("jump times must be strictly increasing")
        return self

    @classmethod
    def from_levels(cls, jump_times: Any, levels: Any, initial: float = 0.0) -> "StepFunction":
        levels = np.asarray(levels, dtype=float)
        increments = np.diff(np.concatenate(([initial], levels)))
        return cls(jump_times=jump_times, increments=increments, initial=initial, levels=levels)

    def value(self, t: Any) -> Union[float, np.ndarray]:
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t_arr, side="right")
        padded = np.concatenate(([self.initial], self.levels))
        out = padded[idx]
        if out.ndim == 0:
            return float(out)
        return out

    def __call__(self, t: Any) -> Union[float, np.ndarray]:
        return self.value(t)

    @property
    def size(self) -> int:
        return int(self.jump_times.shape[0])


class LogRankResult(BaseModel):
    """Two-arm (weighted) log-rank comparison."""
    statistic: float = Field(..., ge=0, description="Chi-squared statistic on 1 degree of freedom")
    p_value: float = Field(..., ge=0, le=1, description="Upper-tail p-value")
    observed: float = Field(..., description="(Weighted) events observed in arm 1")
    expected: float = Field(..., description="(Weighted) events expected in arm 1 under no difference")
    variance: float = Field(..., ge=0, description="Variance of observed minus expected")
    weighted: bool = False


class TimeGrid(ArrayModel):
    """Equally spaced estimation grid."""
    points: FloatArray

    @field_validator("points")
    @classmethod
    def check_points(cls, points: np.ndarray) -> np.ndarray:
        if points.shape[0] < 2:
            raise ValueError("a time grid needs at least two points")
        if np.any(points < 0) or not np.all(np.isfinite(points)):
            raise ValueError("grid points must be finite and nonnegative")
        steps = np.diff(points)
        if np.any(steps <= 0):
            raise ValueError("grid points must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-8, atol=1e-12):
            raise ValueError("grid points must be equally spaced")
        return points

    @classmethod
    def linspace(cls, t_min: float, t_max: float, count: int) -> "TimeGrid":
        return cls(points=np.linspace(t_min, t_max, count))

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    @property
    def t_min(self) -> float:
        return float(self.points[0])

    @property
    def t_max(self) -> float:
        return float(self.points[-1])

    @property
    def spacing(self) -> float:
        return float(self.points[1] - self.points[0])

    def same_as(self, other: "TimeGrid") -> bool:
        return self.count == other.count and bool(np.array_equal(self.points, other.points))
