import os
from typing import Any, Dict, List, Literal, Optional

RunStatus = Literal["pending", "running", "done", "failed"]


class RunRegistry:
    """
    Bookkeeping of the runs of one sweep

    Ids are assigned in registration order (run-000, run-001, ...), so a sweep
    over the same ranges always produces the same ids.
    """

    def __init__(self):
        self.runs: Dict[str, Dict[str, Any]] = {}

    def register(self, params: Dict[str, Any], base_dir: str) -> str:
        """
        Register a run with its parameter tuple

        Args:
            params: Dotted parameter paths mapped to values
            base_dir: Sweep directory; the run writes to base_dir/<run id>

        Returns:
            Run id
        """
        run_id = f"run-{len(self.runs):03d}"
        self.runs[run_id] = {
            "params": dict(params),
            "output_dir": os.path.join(base_dir, run_id),
            "status": "pending",
            "metrics": {},
            "error": None,
        }
        return run_id

    def get_run(self, run_id: str) -> Optional[Dict[str, Any]]:
        return self.runs.get(run_id)

    def update_status(
        self,
        run_id: str,
        status: RunStatus,
        metrics: Optional[Dict[str, Any]] = None,
        error: Optional[str] = None,
    ) -> bool:
        """
        Set the status of a run, with headline metrics or an error message

        Returns:
            True if the run was updated, False if the id is unknown
        """
        run = self.runs.get(run_id)
        if run is None:
            return False
        run["status"] = status
        if metrics is not None:
            run["metrics"] = dict(metrics)
        if error is not None:
            run["error"] = error
        return True

    def list_runs(self) -> Dict[str, RunStatus]:
        return {run_id: run["status"] for run_id, run in self.runs.items()}

    def index_rows(self) -> List[Dict[str, Any]]:
        """Flat rows for index.csv, in id order"""
        rows = []
        for run_id in sorted(self.runs):
            run = self.runs[run_id]
            row = {"run_id": run_id, "status": run["status"], "output_dir": run["output_dir"], "error": run["error"] or ""}
            row.update(run["params"])
            row.update(run["metrics"])
            rows.append(row)
        return rows
