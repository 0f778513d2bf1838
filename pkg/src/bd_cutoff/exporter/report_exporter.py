"""Write experiment reports as CSV tables and a JSON summary."""

import csv
import hashlib
import io
import json
import logging
import math
import os
from pathlib import Path
from typing import Any

import numpy as np

from ..models import ExperimentReport, Table

logger = logging.getLogger(__name__)

REPORT_FILENAME = "report.json"


def format_float(x: float) -> str:
    """17 significant digits; non-finite values as nan / inf / -inf."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _jsonable(obj: Any) -> Any:
    """Plain JSON types; numpy scalars unwrapped and non-finite floats mapped to None."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def canonical_json(payload: dict) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    """Git-style blob SHA-1 of the canonical JSON encoding."""
    data = canonical_json(config).encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def table_to_csv(table: Table) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_float(x) for x in row])
    return buffer.getvalue()


class ReportExporter:
    """
    Write the tables and summary of one run into an output directory.

    Every file goes to a temporary sibling first and is moved into place with
    os.replace. Files created by this exporter are tracked so that a failed run
    can remove them.
    """

    def __init__(self, output_dir: str | Path):
        self.output_dir = Path(output_dir)
        self.created: list[Path] = []

    def _write_atomic(self, path: Path, text: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_text(text, encoding="utf-8")
            os.replace(tmp, path)
        finally:
            if tmp.exists():
                tmp.unlink()
        self.created.append(path)
        return path

    def write_table(self, table: Table) -> Path:
        """Write one table as <name>.csv."""
        path = self.output_dir / f"{table.name}.csv"
        logger.debug("writing %d rows to %s", len(table.rows), path)
        return self._write_atomic(path, table_to_csv(table))

    def write_report(self, report: ExperimentReport) -> Path:
        """Write the summary JSON; tables are referenced by path, not embedded."""
        payload = report.model_dump(mode="python", exclude={"tables"})
        payload["passed"] = report.passed
        text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
        return self._write_atomic(self.output_dir / REPORT_FILENAME, text)

    def export(self, report: ExperimentReport, write_csv: bool = True) -> dict[str, Path]:
        """
        Write all tables, then the summary.

        Returns:
            Mapping from table name (and "report") to the written path

        Raises:
            OSError: on any write failure, after removing the files written so far
        """
        paths: dict[str, Path] = {}
        try:
            if write_csv:
                for table in report.tables:
                    paths[table.name] = self.write_table(table)
                    report.table_paths[table.name] = str(paths[table.name])
            paths["report"] = self.write_report(report)
        except Exception:
            self.cleanup()
            raise
        return paths

    def cleanup(self) -> int:
        """Remove every file this exporter created; returns the number removed."""
        removed = 0
        for path in self.created:
            if path.exists():
                path.unlink()
                removed += 1
        self.created.clear()
        return removed
