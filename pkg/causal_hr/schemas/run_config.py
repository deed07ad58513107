import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from causal_hr.core.config import settings
from causal_hr.core.exceptions import ConfigError
from causal_hr.schemas.bootstrap import BootstrapConfig
from causal_hr.schemas.cox import PHTransform
from causal_hr.schemas.frailty import FrailtyFamily
from causal_hr.schemas.sample import TimeGrid
from causal_hr.schemas.sensitivity import (
    EstimationMethod,
    GridRule,
    KernelOptions,
    SensitivityRequest,
    WeightingMode,
    WeightingSpec,
)
from causal_hr.schemas.simulation import CensoringSpec, Scenario, ScenarioSpec
from causal_hr.schemas.study import StudyConfig

# scenario II fallbacks when the run does not set them
SCENARIO_II_BETA_Z = math.log(0.9)
SCENARIO_II_EVENT_RATE = 0.05


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class InputSection(Section):
    path: Optional[Path] = Field(None, description="CSV with columns id,time,event,treatment[,z1,...]")


class OutputSection(Section):
    directory: Path = Field(Path("results"), description="Directory receiving result tables and the manifest")
    hidden: bool = Field(True, description="simulate: also write the hidden frailty/potential-outcome sidecar")


class EstimationSection(Section):
    methods: List[EstimationMethod] = Field(default_factory=lambda: [EstimationMethod.KERNEL], min_length=1)
    families: List[FrailtyFamily] = Field(default_factory=lambda: [FrailtyFamily.GAMMA], min_length=1)
    taus: List[float] = Field(default_factory=lambda: [0.5], min_length=1)
    grid_points: int = Field(settings.DEFAULT_GRID_POINTS, ge=2)
    min_at_risk: int = Field(settings.DEFAULT_MIN_AT_RISK, ge=1)
    grid_bounds: Optional[Tuple[float, float]] = None
    kernel_support: Optional[Tuple[float, float]] = None
    n_candidates: int = Field(21, ge=1)
    ph_transform: PHTransform = PHTransform.KM

    @field_validator("families", mode="before")
    @classmethod
    def parse_families(cls, families):
        if isinstance(families, str):
            families = [families]
        return [FrailtyFamily.parse(f) for f in families]

    @field_validator("methods", mode="before")
    @classmethod
    def parse_methods(cls, methods):
        if isinstance(methods, str):
            methods = [methods]
        return methods

    @field_validator("taus", mode="before")
    @classmethod
    def parse_taus(cls, taus):
        if isinstance(taus, (int, float)):
            taus = [taus]
        return taus


class WeightingSection(Section):
    enabled: bool = False
    stabilized: bool = True
    truncation_percentile: Optional[float] = Field(None, gt=0, le=1)


class BootstrapSection(Section):
    enabled: bool = False
    replications: int = Field(settings.DEFAULT_BOOTSTRAP_REPLICATIONS, ge=2)
    confidence_level: float = Field(settings.DEFAULT_CONFIDENCE_LEVEL, gt=0, lt=1)
    reselect_bandwidths: bool = True
    max_failure_fraction: float = Field(settings.BOOTSTRAP_MAX_FAILURE_FRACTION, ge=0, lt=1)


class ScenarioSection(Section):
    name: Scenario = Scenario.IA
    tau: float = Field(0.7, gt=0, lt=1)
    n: int = Field(2000, ge=2)
    censoring_fraction: float = Field(0.2, ge=0, lt=1)
    censoring_time: float = Field(settings.ADMINISTRATIVE_CENSORING_TIME, gt=0)
    beta: float = math.log(0.5)
    beta_z: Optional[float] = None
    event_rate_target: Optional[float] = Field(None, gt=0, lt=1)

    @field_validator("name", mode="before")
    @classmethod
    def parse_name(cls, value):
        return Scenario.parse(value)


class StudySection(Section):
    replications: int = Field(10, ge=1)
    n: Optional[List[int]] = Field(None, description="Sample sizes; defaults to scenario.n")
    taus: Optional[List[float]] = Field(None, description="Kendall's tau values; defaults to scenario.tau")
    censoring_fractions: Optional[List[float]] = Field(None, description="Defaults to scenario.censoring_fraction")
    methods: List[EstimationMethod] = Field(
        default_factory=lambda: [EstimationMethod.COX, EstimationMethod.KERNEL], min_length=1
    )


class RunConfig(Section):
    """
    Resolved configuration of one CLI run.

    Loaded from a TOML file with one table per section; command-line flags
    override individual keys. Unknown keys are rejected everywhere.
    """
    input: InputSection = Field(default_factory=InputSection)
    output: OutputSection = Field(default_factory=OutputSection)
    estimation: EstimationSection = Field(default_factory=EstimationSection)
    weighting: WeightingSection = Field(default_factory=WeightingSection)
    bootstrap: BootstrapSection = Field(default_factory=BootstrapSection)
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    study: StudySection = Field(default_factory=StudySection)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    n_jobs: int = settings.N_JOBS

    def weighting_spec(self, force: bool = False) -> WeightingSpec:
        enabled = force or self.weighting.enabled
        return WeightingSpec(
            mode=WeightingMode.IPTW if enabled else WeightingMode.NONE,
            stabilized=self.weighting.stabilized,
            truncation_percentile=self.weighting.truncation_percentile,
        )

    def grid_rule(self) -> GridRule:
        return GridRule(
            n_points=self.estimation.grid_points,
            min_at_risk=self.estimation.min_at_risk,
            bounds=self.estimation.grid_bounds,
        )

    def kernel_options(self) -> KernelOptions:
        return KernelOptions(support=self.estimation.kernel_support, n_candidates=self.estimation.n_candidates)

    def sensitivity_request(self, method: EstimationMethod, grid: Optional[TimeGrid] = None) -> SensitivityRequest:
        return SensitivityRequest(
            method=method,
            families=self.estimation.families,
            taus=self.estimation.taus,
            grid=grid,
            grid_rule=self.grid_rule(),
            weighting=self.weighting_spec(),
            kernel=self.kernel_options(),
        )

    def bootstrap_config(self, seed: int) -> Optional[BootstrapConfig]:
        if not self.bootstrap.enabled:
            return None
        return BootstrapConfig(
            replications=self.bootstrap.replications,
            seed=seed,
            confidence_level=self.bootstrap.confidence_level,
            reselect_bandwidths=self.bootstrap.reselect_bandwidths,
            max_failure_fraction=self.bootstrap.max_failure_fraction,
            n_jobs=self.n_jobs,
        )

    def _confounding(self) -> Tuple[Optional[float], Optional[float]]:
        beta_z, event_rate = self.scenario.beta_z, self.scenario.event_rate_target
        if self.scenario.name is Scenario.II:
            beta_z = SCENARIO_II_BETA_Z if beta_z is None else beta_z
            event_rate = SCENARIO_II_EVENT_RATE if event_rate is None else event_rate
        return beta_z, event_rate

    def scenario_spec(self) -> ScenarioSpec:
        scenario = self.scenario
        beta_z, event_rate = self._confounding()
        if scenario.name is Scenario.II:
            censoring = CensoringSpec(kind="administrative", time=scenario.censoring_time)
        else:
            censoring = CensoringSpec(kind="rate", fraction=scenario.censoring_fraction)
        return ScenarioSpec(
            scenario=scenario.name,
            tau=scenario.tau,
            n=scenario.n,
            censoring=censoring,
            beta=scenario.beta,
            beta_z=beta_z,
            event_rate_target=event_rate,
        )

    def study_config(self) -> StudyConfig:
        study = self.study
        beta_z, event_rate = self._confounding()
        return StudyConfig(
            scenario=self.scenario.name,
            replications=study.replications,
            seed=self.seed,
            n=study.n or [self.scenario.n],
            taus=study.taus or [self.scenario.tau],
            censoring_fractions=study.censoring_fractions or [self.scenario.censoring_fraction],
            methods=study.methods,
            families=self.estimation.families,
            beta=self.scenario.beta,
            beta_z=beta_z,
            event_rate_target=event_rate,
            grid_points=self.estimation.grid_points,
            min_at_risk=self.estimation.min_at_risk,
            weighting=self.weighting_spec() if self.weighting.enabled else None,
            kernel=self.kernel_options(),
            bootstrap=self.bootstrap_config(self.seed),
            n_jobs=self.n_jobs,
        )

    def manifest_config(self) -> Dict[str, Any]:
        """Settings that determine the results; paths and parallelism are left out."""
        return self.model_dump(mode="json", exclude={"input", "output", "n_jobs"})


def _set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"'{part}' is not a section", key=key)
        node = child
    node[parts[-1]] = value


def _describe(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(p) for p in error["loc"]) or "config"
        parts.append(f"{location}: {error['msg']}")
    return "; ".join(parts)


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Read a TOML run configuration and apply dotted-key overrides
    (``{"estimation.taus": [0.3]}``). Overrides whose value is None are ignored.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as handle:
                data = tomllib.load(handle)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"could not parse {path}: {exc}") from exc

    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(data, key, value)

    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {_describe(exc)}") from exc
