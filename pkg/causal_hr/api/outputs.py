import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import pandas as pd

from causal_hr.core.datasets import PathLike, build_manifest, write_csv, write_manifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunOutputs:
    """
    Result tables of one command run.

    Every table is written under ``directory`` with the manifest run id as its
    last column; ``close`` writes the manifest itself.
    """

    def __init__(self, directory: PathLike, command: str, config: Dict[str, Any],
                 inputs: Iterable[PathLike] = (), seed: Optional[int] = None):
        self.directory = Path(directory)
        self.manifest = build_manifest(command, config, inputs=inputs, seed=seed)
        self.files: Dict[str, Path] = {}

    @property
    def run_id(self) -> str:
        return self.manifest["run_id"]

    def table(self, name: str, frame: pd.DataFrame, stamped: bool = True) -> Path:
        """Write ``frame``; unstamped tables keep the plain input format."""
        path = write_csv(frame, self.directory / name, run_id=self.run_id if stamped else None)
        self.files[name] = path
        return path

    def note(self, key: str, value: Any) -> None:
        """Record a run result (e.g. a calibrated constant) in the manifest; does not change the run id."""
        self.manifest.setdefault("results", {})[key] = value

    def close(self) -> Dict[str, Path]:
        self.manifest["files"] = sorted(self.files)
        self.files[MANIFEST_NAME] = write_manifest(self.manifest, self.directory / MANIFEST_NAME)
        logger.info(
            f"Wrote {len(self.files)} files to {self.directory}",
            extra={"run_id": self.run_id},
        )
        return dict(self.files)
