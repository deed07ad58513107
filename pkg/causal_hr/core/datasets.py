import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from causal_hr.core.config import settings
from causal_hr.core.exceptions import DataValidationError
from causal_hr.schemas.sample import SurvivalSample

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

REQUIRED_COLUMNS = ["id", "time", "event", "treatment"]
MAX_REPORTED_ROWS = 20


def read_sample_csv(path: PathLike) -> SurvivalSample:
    """
    Load a survival sample from ``id,time,event,treatment,z1,...,zk``.

    Rows are validated before anything is built; failures name the file
    line of every offending row (the header is line 1).
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, encoding="utf-8", keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError as exc:
        raise DataValidationError(f"input file not found: {path}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataValidationError(f"could not parse {path}: {exc}") from exc

    columns = [c.strip() for c in frame.columns]
    frame.columns = columns
    if columns[:4] != REQUIRED_COLUMNS:
        raise DataValidationError(
            f"header must start with {','.join(REQUIRED_COLUMNS)}, got {','.join(columns[:4])}"
        )
    if frame.empty:
        raise DataValidationError("input contains no records")
    covariate_names = columns[4:]

    problems: List[str] = []
    bad_rows: List[int] = []

    def numeric(column: str) -> pd.Series:
        return pd.to_numeric(frame[column].str.strip(), errors="coerce")

    time = numeric("time")
    event = numeric("event")
    treatment = numeric("treatment")
    covariates = pd.DataFrame({name: numeric(name) for name in covariate_names}, index=frame.index)

    checks = [
        (~np.isfinite(time) | (time < 0), "time must be a finite number >= 0"),
        (~event.isin([0, 1]), "event must be 0 or 1"),
        ((event == 1) & (time == 0), "an observed event needs time > 0"),
        (~treatment.isin([0, 1]), "treatment must be 0 or 1"),
        (frame["id"].str.strip() == "", "id must not be empty"),
    ]
    if covariate_names:
        checks.append((~np.isfinite(covariates).all(axis=1), "covariates must be finite numbers"))

    for mask, message in checks:
        mask = mask.fillna(True).to_numpy(dtype=bool)
        for i in np.flatnonzero(mask):
            line = int(i) + 2
            bad_rows.append(line)
            problems.append(f"row {line}: {message}")

    if problems:
        bad_rows = sorted(set(bad_rows))
        shown = "; ".join(sorted(problems, key=lambda p: int(p.split(":")[0].split()[1]))[:MAX_REPORTED_ROWS])
        raise DataValidationError(f"invalid input rows in {path.name}: {shown}", rows=bad_rows)

    sample = SurvivalSample.from_arrays(
        ids=frame["id"].str.strip().tolist(),
        time=time.to_numpy(dtype=float),
        event=event.to_numpy(dtype=int).astype(bool),
        treatment=treatment.to_numpy(dtype=int),
        covariates=covariates.to_numpy(dtype=float) if covariate_names else None,
        covariate_names=covariate_names,
    )
    logger.info(f"Loaded {sample.n} records ({sample.n_events} events, {sample.n_covariates} covariates) from {path}")
    return sample


def sample_to_frame(sample: SurvivalSample) -> pd.DataFrame:
    frame = pd.DataFrame({
        "id": sample.ids,
        "time": sample.time,
        "event": sample.event.astype(int),
        "treatment": sample.treatment,
    })
    for j, name in enumerate(sample.covariate_names):
        frame[name] = sample.covariates[:, j]
    return frame


def write_csv(frame: pd.DataFrame, path: PathLike, run_id: Optional[str] = None) -> Path:
    """Write a result table; with ``run_id`` every row references the run manifest in a trailing column."""
    path = Path(path)
    if run_id is not None:
        frame = frame.assign(run_id=run_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        frame.to_csv(handle, index=False, float_format=settings.CSV_FLOAT_FORMAT, na_rep="", lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_result_csv(path: PathLike) -> pd.DataFrame:
    """Read a table written by ``write_csv``."""
    return pd.read_csv(path, dtype={"run_id": str})


def file_sha256(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    import pydantic
    import scipy

    import causal_hr

    return {
        "causal_hr": causal_hr.__version__,
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.__version__,
    }


def build_manifest(command: str, config: Dict[str, Any], inputs: Iterable[PathLike] = (),
                   seed: Optional[int] = None) -> Dict[str, Any]:
    """
    Run manifest: command, resolved configuration, input hashes, seed and
    package versions. ``run_id`` is a digest of everything else, so identical
    runs share it.
    """
    manifest: Dict[str, Any] = {
        "command": command,
        "config": config,
        "inputs": {str(Path(p).name): file_sha256(p) for p in inputs},
        "seed": seed,
        "versions": package_versions(),
    }
    canonical = json.dumps(manifest, sort_keys=True, separators=(",", ":"), default=str)
    manifest["run_id"] = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
    return manifest


def write_manifest(manifest: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(manifest, handle, sort_keys=True, indent=2, default=str)
        handle.write("\n")
    return path
