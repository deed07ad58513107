import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.special import expit

from causal_hr.core.config import settings
from causal_hr.core.exceptions import CalibrationError
from causal_hr.core.random import substream
from causal_hr.schemas.sample import SurvivalSample
from causal_hr.schemas.simulation import Scenario, ScenarioSpec, SimulatedDataset

logger = logging.getLogger(__name__)

CENSORING_BRACKET: Tuple[float, float] = (1e-6, 1e3)
EVENT_SCALE_BRACKET: Tuple[float, float] = (1e-10, 1e6)
IB_TIME_SLOPE = 1.5
PROPENSITY_SLOPE = np.log(0.5)

# substream keys
_FRAILTY, _EXP0, _EXP1, _TREATMENT, _CENSORING, _CONFOUNDER = range(6)
_PILOT = 1000


class _Draws(NamedTuple):
    frailty: np.ndarray
    e0: np.ndarray
    e1: np.ndarray
    treatment: np.ndarray
    z: Optional[np.ndarray]
    u_censor: np.ndarray


def _draw(spec: ScenarioSpec, n: int, seed: int, *prefix: int) -> _Draws:
    """Every random input of a scenario, each from its own substream."""
    theta = spec.theta
    frailty = substream(seed, *prefix, _FRAILTY).gamma(shape=1.0 / theta, scale=theta, size=n)
    e0 = substream(seed, *prefix, _EXP0).exponential(size=n)
    e1 = substream(seed, *prefix, _EXP1).exponential(size=n)
    u_censor = substream(seed, *prefix, _CENSORING).exponential(size=n)
    if spec.scenario is Scenario.II:
        z = substream(seed, *prefix, _CONFOUNDER).standard_normal(size=n)
        p = expit(PROPENSITY_SLOPE * z)
    else:
        z = None
        p = np.full(n, 0.5)
    treatment = (substream(seed, *prefix, _TREATMENT).random(size=n) < p).astype(np.int64)
    return _Draws(frailty, e0, e1, treatment, z, u_censor)


def _linear_predictor(spec: ScenarioSpec, arm: int, z: Optional[np.ndarray], event_scale: Optional[float]):
    """(a0, a1) of the conditional hazard v * exp(a0 + a1 t)."""
    theta = spec.theta
    if spec.scenario is Scenario.IA:
        return spec.beta * arm, theta * np.exp(spec.beta * arm)
    if spec.scenario is Scenario.IB:
        return spec.beta * arm, IB_TIME_SLOPE
    return np.log(event_scale) + spec.beta * arm + spec.beta_z * z, 0.0


def _event_times(v: np.ndarray, e: np.ndarray, a0, a1: float) -> np.ndarray:
    """Invert the conditional cumulative hazard v e^{a0} (e^{a1 t} - 1) / a1 at E ~ Exp(1)."""
    scaled = e / (v * np.exp(a0))
    if a1 == 0:
        return scaled
    return np.log1p(a1 * scaled) / a1


def _potential_times(spec: ScenarioSpec, draws: _Draws, event_scale: Optional[float]):
    times = []
    for arm, e in ((0, draws.e0), (1, draws.e1)):
        a0, a1 = _linear_predictor(spec, arm, draws.z, event_scale)
        times.append(_event_times(draws.frailty, e, a0, a1))
    return times[0], times[1]


def calibrate_censoring_rate(spec: ScenarioSpec, seed: int = 0,
                             pilot_size: int = settings.CALIBRATION_PILOT_SIZE) -> float:
    """
    Exponential censoring rate giving the target censoring fraction.

    The fraction is averaged analytically over C given the pilot event
    times, P(C < T) = 1 - exp(-rate T), so the root search is smooth in the rate.
    """
    target = spec.censoring.fraction
    if target is None:
        raise CalibrationError("censoring calibration needs a target fraction")
    if not 0 <= target < 1:
        raise CalibrationError(f"censoring fraction {target} must lie in [0, 1)")
    lo, hi = CENSORING_BRACKET
    if target == 0:
        logger.warning(f"Censoring target is 0; using the minimum rate {lo:g}")
        return lo

    draws = _draw(spec, pilot_size, seed, _PILOT)
    t0, t1 = _potential_times(spec, draws, spec.event_scale)
    t_obs = np.where(draws.treatment == 1, t1, t0)

    def excess(rate: float) -> float:
        return float(np.mean(-np.expm1(-rate * t_obs))) - target

    if excess(lo) > 0 or excess(hi) < 0:
        raise CalibrationError(
            f"censoring fraction {target} is not attainable with rates in [{lo:g}, {hi:g}]",
            target=target,
        )
    rate = optimize.brentq(excess, lo, hi, xtol=1e-12, rtol=1e-10)
    logger.info(f"Calibrated censoring rate {rate:.6g} for target fraction {target}")
    return float(rate)


def calibrate_event_scale(spec: ScenarioSpec, seed: int = 0,
                          pilot_size: int = settings.CALIBRATION_PILOT_SIZE) -> float:
    """Baseline scale gamma giving the target fraction of events before the administrative censoring time."""
    if spec.scenario is not Scenario.II:
        raise CalibrationError("event-scale calibration applies to scenario II only")
    target = spec.event_rate_target
    if target is None or not 0 < target < 1:
        raise CalibrationError(f"event rate target {target} must lie in (0, 1)", target=target)
    horizon = spec.censoring.time
    draws = _draw(spec, pilot_size, seed, _PILOT)
    arm = draws.treatment.astype(float)
    intensity = horizon * draws.frailty * np.exp(spec.beta * arm + spec.beta_z * draws.z)

    def excess(gamma: float) -> float:
        return float(np.mean(-np.expm1(-gamma * intensity))) - target

    lo, hi = EVENT_SCALE_BRACKET
    if excess(lo) > 0 or excess(hi) < 0:
        raise CalibrationError(
            f"event rate {target} is not attainable with scales in [{lo:g}, {hi:g}]", target=target,
        )
    gamma = optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-10)
    logger.info(f"Calibrated event scale {gamma:.6g} for target event rate {target}")
    return float(gamma)


def calibrated(spec: ScenarioSpec, seed: int = 0) -> ScenarioSpec:
    """Copy of ``spec`` with its censoring rate or event scale calibrated."""
    if spec.scenario is Scenario.II:
        if spec.event_scale is None:
            return spec.model_copy(update={"event_scale": calibrate_event_scale(spec, seed)})
        return spec
    if spec.censoring_rate is None:
        return spec.model_copy(update={"censoring_rate": calibrate_censoring_rate(spec, seed)})
    return spec


def generate(spec: ScenarioSpec, seed: int) -> SimulatedDataset:
    """
    Draw one dataset from the scenario.

    The Gamma frailty has mean one and variance theta = 2 tau / (1 - tau).
    Potential event times share the frailty and differ in their unit
    exponential draws.
    """
    spec = calibrated(spec, seed)
    draws = _draw(spec, spec.n, seed)
    t0, t1 = _potential_times(spec, draws, spec.event_scale)

    if spec.scenario is Scenario.II:
        censoring = np.full(spec.n, float(spec.censoring.time))
        covariates = draws.z.reshape(-1, 1)
    else:
        censoring = draws.u_censor / spec.censoring_rate
        covariates = None

    t_obs = np.where(draws.treatment == 1, t1, t0)
    sample = SurvivalSample.from_arrays(
        time=np.minimum(t_obs, censoring),
        event=t_obs <= censoring,
        treatment=draws.treatment,
        covariates=covariates,
    )
    logger.debug(
        f"Generated scenario {spec.scenario.value} dataset: n={spec.n}, events={sample.n_events}, "
        f"treated={sample.arm_size(1)}"
    )
    return SimulatedDataset(
        spec=spec,
        sample=sample,
        frailty=draws.frailty,
        t0=t0,
        t1=t1,
        censoring=censoring,
        censoring_rate=spec.censoring_rate,
        event_scale=spec.event_scale,
    )


def true_hrc(spec: ScenarioSpec, t):
    """Analytic causal hazard ratio of the scenario at time(s) ``t``."""
    t_arr = np.asarray(t, dtype=float)
    if spec.scenario is Scenario.IA:
        out = np.exp(spec.beta + spec.theta * t_arr * (np.exp(spec.beta) - 1.0))
    else:
        out = np.full(t_arr.shape, np.exp(spec.beta))
    return float(out) if out.ndim == 0 else out


def hidden_frame(dataset: SimulatedDataset) -> pd.DataFrame:
    """Sidecar columns id, v, t0, t1, c."""
    return pd.DataFrame({
        "id": dataset.sample.ids,
        "v": dataset.frailty,
        "t0": dataset.t0,
        "t1": dataset.t1,
        "c": dataset.censoring,
    })
