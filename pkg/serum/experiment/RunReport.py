"""
Desc: JSON-Lines run reports. Every command writes one header row, then its step, sample or bench rows,
then a summary row. Rows are only ever appended.
"""

# Core libraries
import json
import logging
import os
import time
from typing import List, Optional

# Custom libraries
from serum.Errors import SerumError
from serum.evaluation.KvTree import KvTree
from serum.evaluation.Metrics import sampleMetrics, summarize

# Constants
REPORT_FILE = "report.jsonl"
HEADER, STEP, SAMPLE, BENCH, SUMMARY = "header", "step", "sample", "bench", "summary"

logger = logging.getLogger(__name__)


class RunReport:
    def __init__(self, path: str, timestamps: bool = False):
        '''
        :param path: Report file, replaced if it exists so that reruns produce identical files.
        :param timestamps: Add a wall-clock time to every row, at the cost of bitwise reproducibility.
        '''

        self.path = path
        self.timestamps = timestamps
        self.sequence = 0
        self.rows = []

        try:
            if os.path.dirname(path):
                os.makedirs(os.path.dirname(path), exist_ok=True)
            self.file = open(path, mode="w", encoding="utf-8")
        except OSError as error:
            raise SerumError(f"Could not open run report {path}: {error}") from error

    def append(self, kind: str, **fields) -> dict:
        row = {"seq": self.sequence, "kind": kind, **fields}
        if self.timestamps:
            row["time"] = time.time()

        self.file.write(json.dumps(row, sort_keys=True) + "\n")
        self.file.flush()

        self.rows.append(row)
        self.sequence += 1
        return row

    def close(self) -> None:
        self.file.close()

    def __enter__(self) -> "RunReport":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def readReport(path: str) -> List[dict]:
    with open(path, encoding="utf-8") as reportFile:
        return [json.loads(line) for line in reportFile if line.strip()]


def recomputeMetrics(rows: List[dict]) -> Optional[dict]:
    '''
    Recompute the key-value metrics of an eval report from its dumped predictions and ground truths.

    :param rows: Report rows, as read by readReport.
    :returns: The summary the report should carry, None if it has no prediction rows.
    '''

    sampleRows = [row for row in rows if row["kind"] == SAMPLE and "prediction" in row]
    if not sampleRows:
        return None

    return summarize([sampleMetrics(KvTree.fromDict(row["prediction"]), KvTree.fromDict(row["ground_truth"]))
                      for row in sampleRows])
