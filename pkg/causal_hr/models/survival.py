import logging
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from causal_hr.core.config import settings
from causal_hr.core.exceptions import DegenerateGridError, EmptyArmError, NoEventsError
from causal_hr.schemas.sample import LogRankResult, StepFunction, SurvivalSample, TimeGrid
from causal_hr.schemas.weights import WeightVector

logger = logging.getLogger(__name__)

WeightsLike = Optional[Union[Sequence[float], np.ndarray, WeightVector]]


class RiskTable(NamedTuple):
    """Counting-process summaries at each distinct follow-up time."""
    times: np.ndarray
    events: np.ndarray        # sum of w * dN at the time
    at_risk: np.ndarray       # sum of w * Y at the time
    event_counts: np.ndarray  # unweighted number of events
    subjects: np.ndarray      # unweighted number at risk


def resolve_weights(sample: SurvivalSample, weights: WeightsLike, per_arm: bool = False) -> np.ndarray:
    """Per-subject weights as an array; unit weights when none are given."""
    if weights is None:
        return np.ones(sample.n)
    if isinstance(weights, WeightVector):
        arr = weights.arm_weights if per_arm else weights.weights
    else:
        arr = np.asarray(weights, dtype=float).reshape(-1)
    if arr.shape[0] != sample.n:
        raise ValueError(f"expected {sample.n} weights, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("weights must be finite and strictly positive")
    return arr


def canonical_order(sample: SurvivalSample, weights: np.ndarray) -> np.ndarray:
    """
    Row permutation that sorts subjects by all of their data.

    Sums taken in this order do not depend on how the input rows were
    ordered, which keeps results bit-identical under relabeling.
    """
    keys = [sample.covariates[:, j] for j in range(sample.n_covariates - 1, -1, -1)]
    keys += [weights, sample.treatment, sample.event, sample.time]
    return np.lexsort(keys)


def _reverse_cumsum(values: np.ndarray) -> np.ndarray:
    return np.cumsum(values[::-1])[::-1]


def risk_table(time: np.ndarray, event: np.ndarray, weights: np.ndarray) -> RiskTable:
    """Tabulate (weighted) events and risk sets; censored subjects stay at risk at their own time."""
    times, inverse = np.unique(time, return_inverse=True)
    size = times.shape[0]
    leaving = np.bincount(inverse, weights=weights, minlength=size)
    events = np.bincount(inverse, weights=weights * event, minlength=size)
    event_counts = np.bincount(inverse, weights=event.astype(float), minlength=size)
    subjects = _reverse_cumsum(np.bincount(inverse, minlength=size).astype(float))
    return RiskTable(times, events, _reverse_cumsum(leaving), event_counts, subjects)


def _arm_table(sample: SurvivalSample, arm: int, weights: WeightsLike) -> RiskTable:
    w = resolve_weights(sample, weights, per_arm=True)
    mask = sample.arm_mask(arm)
    if not mask.any():
        raise EmptyArmError("empty treatment arm", arm=int(arm))
    order = canonical_order(sample, w)
    order = order[mask[order]]
    return risk_table(sample.time[order], sample.event[order], w[order])


def nelson_aalen(sample: SurvivalSample, arm: int, weights: WeightsLike = None) -> StepFunction:
    """
    (IPTW) Nelson-Aalen cumulative hazard of one arm.

    Tied events are pooled into one increment sum(w dN) / sum(w Y).
    """
    table = _arm_table(sample, arm, weights)
    keep = table.event_counts > 0
    increments = table.events[keep] / table.at_risk[keep]
    return StepFunction(jump_times=table.times[keep], increments=increments)


def kaplan_meier(sample: SurvivalSample, arm: int, weights: WeightsLike = None) -> StepFunction:
    """(Weighted) product-limit survival curve of one arm, S(0) = 1."""
    table = _arm_table(sample, arm, weights)
    keep = table.event_counts > 0
    factors = 1.0 - table.events[keep] / table.at_risk[keep]
    return StepFunction.from_levels(table.times[keep], np.cumprod(factors), initial=1.0)


def logrank_test(sample: SurvivalSample, weights: WeightsLike = None) -> LogRankResult:
    """
    (Weighted) log-rank test of arm 1 against arm 0.

    The variance uses the hypergeometric form with the tie correction taken
    from unweighted counts; with unit weights this is the classical test.
    """
    for arm in (0, 1):
        if not sample.arm_mask(arm).any():
            raise EmptyArmError("empty treatment arm", arm=arm)
    if sample.n_events == 0:
        raise NoEventsError("no events observed")

    w = resolve_weights(sample, weights)
    order = canonical_order(sample, w)
    time = sample.time[order]
    event = sample.event[order].astype(float)
    treated = sample.treatment[order].astype(float)
    w = w[order]

    times, inverse = np.unique(time, return_inverse=True)
    size = times.shape[0]
    at_risk = _reverse_cumsum(np.bincount(inverse, weights=w, minlength=size))
    at_risk1 = _reverse_cumsum(np.bincount(inverse, weights=w * treated, minlength=size))
    deaths = np.bincount(inverse, weights=w * event, minlength=size)
    deaths1 = np.bincount(inverse, weights=w * event * treated, minlength=size)
    subjects = _reverse_cumsum(np.bincount(inverse, minlength=size).astype(float))
    death_counts = np.bincount(inverse, weights=event, minlength=size)

    keep = death_counts > 0
    at_risk, at_risk1 = at_risk[keep], at_risk1[keep]
    deaths, deaths1 = deaths[keep], deaths1[keep]
    subjects, death_counts = subjects[keep], death_counts[keep]

    share1 = at_risk1 / at_risk
    expected = at_risk1 * deaths / at_risk
    ties = np.where(subjects > 1, (subjects - death_counts) / np.maximum(subjects - 1, 1), 1.0)
    variance = float(np.sum(deaths * share1 * (1.0 - share1) * ties))

    observed_sum = float(np.sum(deaths1))
    expected_sum = float(np.sum(expected))
    difference = float(np.sum(deaths1 - expected))
    statistic = difference ** 2 / variance if variance > 0 else 0.0
    p_value = float(stats.chi2.sf(statistic, df=1))

    return LogRankResult(
        statistic=statistic,
        p_value=min(max(p_value, 0.0), 1.0),
        observed=observed_sum,
        expected=expected_sum,
        variance=variance,
        weighted=weights is not None,
    )


def build_time_grid(
    sample: Optional[SurvivalSample] = None,
    n_points: int = settings.DEFAULT_GRID_POINTS,
    min_at_risk: int = settings.DEFAULT_MIN_AT_RISK,
    bounds: Optional[Tuple[float, float]] = None,
) -> TimeGrid:
    """
    Equally spaced estimation grid.

    Without ``bounds`` the grid runs from the first event time (pooled over
    arms) to the latest time at which at least ``min_at_risk`` subjects are
    still at risk in both arms. With ``bounds`` the grid uses them as given.
    """
    if n_points < 2:
        raise DegenerateGridError("degenerate grid: at least two grid points are required", n_points=n_points)

    if bounds is not None:
        t_min, t_max = float(bounds[0]), float(bounds[1])
    else:
        if sample is None:
            raise ValueError("either a sample or fixed bounds are required")
        if sample.n_events == 0:
            raise NoEventsError("no events observed")
        if min_at_risk < 1:
            raise ValueError("min_at_risk must be at least 1")
        t_min = float(sample.time[sample.event].min())
        t_max = np.inf
        for arm in (0, 1):
            arm_times = np.sort(sample.time[sample.arm_mask(arm)])[::-1]
            if arm_times.shape[0] <= min_at_risk:
                raise DegenerateGridError(
                    f"degenerate grid: arm {arm} has {arm_times.shape[0]} subjects, "
                    f"more than {min_at_risk} are required",
                    arm=arm,
                )
            # Y(t) >= m holds up to the m-th largest follow-up time
            t_max = min(t_max, float(arm_times[min_at_risk - 1]))

    if not t_max > t_min:
        raise DegenerateGridError("degenerate grid", t_min=t_min, t_max=t_max)

    grid = TimeGrid.linspace(t_min, t_max, n_points)
    logger.debug(f"Built time grid [{t_min:.6g}, {t_max:.6g}] with {n_points} points")
    return grid
