import argparse
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from causal_hr.api.commands import balance, estimate, simulate, study
from causal_hr.core.config import settings
from causal_hr.schemas.run_config import RunConfig

Command = Callable[[RunConfig], Dict[str, Path]]

COMMANDS: Dict[str, Command] = {
    "estimate": estimate.run,
    "simulate": simulate.run,
    "study": study.run,
    "balance": balance.run,
}

# flag destination -> dotted RunConfig key
OVERRIDES: Dict[str, str] = {
    "input": "input.path",
    "output": "output.directory",
    "seed": "seed",
    "n_jobs": "n_jobs",
    "methods": "estimation.methods",
    "families": "estimation.families",
    "taus": "estimation.taus",
    "grid_points": "estimation.grid_points",
    "min_at_risk": "estimation.min_at_risk",
    "grid_bounds": "estimation.grid_bounds",
    "ph_transform": "estimation.ph_transform",
    "iptw": "weighting.enabled",
    "stabilized": "weighting.stabilized",
    "truncate": "weighting.truncation_percentile",
    "bootstrap": "bootstrap.enabled",
    "replicates": "bootstrap.replications",
    "confidence_level": "bootstrap.confidence_level",
    "scenario": "scenario.name",
    "tau": "scenario.tau",
    "n": "scenario.n",
    "censoring": "scenario.censoring_fraction",
    "beta_z": "scenario.beta_z",
    "event_rate": "scenario.event_rate_target",
    "no_hidden": "output.hidden",
    "replications": "study.replications",
    "study_n": "study.n",
    "study_taus": "study.taus",
    "study_censoring": "study.censoring_fractions",
    "study_methods": "study.methods",
}


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="TOML run configuration; flags override its keys")
    parser.add_argument("--output", "-o", type=Path, help="Output directory")
    parser.add_argument("--seed", type=int, help="Top-level random seed")
    parser.add_argument("--n-jobs", dest="n_jobs", type=int, help="joblib workers for replicate loops")
    parser.add_argument("--log-level", dest="log_level", help="Override LOG_LEVEL")


def _estimation(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", dest="methods", action="append", choices=["cox", "kernel"])
    parser.add_argument("--family", dest="families", action="append",
                        help="gamma, inverse_gaussian (ig) or positive_stable (ps); repeatable")
    parser.add_argument("--tau", dest="taus", action="append", type=float, help="Kendall's tau; repeatable")
    parser.add_argument("--grid-points", dest="grid_points", type=int)
    parser.add_argument("--min-at-risk", dest="min_at_risk", type=int)
    parser.add_argument("--grid-bounds", dest="grid_bounds", nargs=2, type=float, metavar=("T_MIN", "T_MAX"))


def _weighting(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--iptw", action="store_const", const=True, default=None, help="Enable IPTW")
    parser.add_argument("--unstabilized", dest="stabilized", action="store_const", const=False, default=None)
    parser.add_argument("--truncate", type=float, metavar="PERCENTILE", help="Cap weights at this pooled percentile")


def _scenario(parser: argparse.ArgumentParser, with_tau: bool = True) -> None:
    parser.add_argument("--scenario", choices=["Ia", "Ib", "II"])
    parser.add_argument("--n", type=int, help="Sample size")
    parser.add_argument("--censoring", type=float, help="Target censoring fraction (Ia, Ib)")
    parser.add_argument("--beta-z", dest="beta_z", type=float, help="Confounder log hazard ratio (II)")
    parser.add_argument("--event-rate", dest="event_rate", type=float, help="Target event fraction (II)")
    if with_tau:
        parser.add_argument("--tau", type=float, help="Kendall's tau of the simulated Gamma frailty")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.SERVICE_NAME,
        description=f"{settings.APP_NAME}: estimate the causal hazard ratio HR^C(t) under shared frailty",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("estimate", help="Estimate HR^C(t) curves from a CSV sample")
    _common(p)
    p.add_argument("--input", "-i", type=Path, help="Input CSV")
    _estimation(p)
    _weighting(p)
    p.add_argument("--ph-transform", dest="ph_transform", choices=["km", "identity"])
    p.add_argument("--bootstrap", action="store_const", const=True, default=None, help="Bootstrap the curves")
    p.add_argument("--replicates", type=int, help="Bootstrap replicates")
    p.add_argument("--confidence-level", dest="confidence_level", type=float)

    p = subparsers.add_parser("simulate", help="Simulate a dataset with its analytic HR^C(t)")
    _common(p)
    _scenario(p)
    p.add_argument("--grid-points", dest="grid_points", type=int)
    p.add_argument("--no-hidden", dest="no_hidden", action="store_const", const=False, default=None,
                   help="Do not write the hidden sidecar")

    p = subparsers.add_parser("study", help="Run a replication study")
    _common(p)
    _scenario(p, with_tau=False)
    p.add_argument("--replications", type=int)
    p.add_argument("--study-n", dest="study_n", type=int, nargs="+", help="Sample sizes to sweep")
    p.add_argument("--tau", dest="study_taus", type=float, action="append", help="Kendall's tau; repeatable")
    p.add_argument("--study-censoring", dest="study_censoring", type=float, nargs="+")
    p.add_argument("--method", dest="study_methods", action="append", choices=["cox", "kernel"])
    p.add_argument("--family", dest="families", action="append")
    p.add_argument("--grid-points", dest="grid_points", type=int)
    _weighting(p)
    p.add_argument("--bootstrap", action="store_const", const=True, default=None)
    p.add_argument("--replicates", type=int)

    p = subparsers.add_parser("balance", help="Covariate balance before and after IPTW")
    _common(p)
    p.add_argument("--input", "-i", type=Path, help="Input CSV")
    p.add_argument("--unstabilized", dest="stabilized", action="store_const", const=False, default=None)
    p.add_argument("--truncate", type=float, metavar="PERCENTILE")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Dotted RunConfig keys for every flag that was given."""
    values = vars(args)
    overrides: Dict[str, Any] = {}
    for dest, key in OVERRIDES.items():
        value = values.get(dest)
        if value is None:
            continue
        if isinstance(value, Path):
            value = str(value)
        overrides[key] = value
    return overrides


def parse(argv: Optional[List[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)
