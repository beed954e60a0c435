import csv
import os
from typing import List, Sequence, Tuple

from mako.template import Template

# Constants
TEMPLATE_LOCATION = os.path.join(os.path.dirname(__file__), "..", "templates", "bench_table.mako")
BENCH_COLUMNS = ("alpha", "K", "f1", "mean_decode_ms")
CSV_FILE = "bench_alpha.csv"
TABLE_FILE = "bench_alpha.txt"


def benchRows(rows: Sequence[dict]) -> List[Tuple]:
    """Order every bench row's fields as the table columns, sorted by alpha."""
    return [tuple(row[column] for column in BENCH_COLUMNS) for row in sorted(rows, key=lambda row: row["alpha"])]


def writeBenchTable(rows: Sequence[dict], outDir: str) -> Tuple[str, str]:
    """Write the keep-ratio benchmark as a CSV file and as a plain-text table.

    Returns the paths of both files.
    """
    if not rows:
        raise ValueError("No bench rows to write")

    os.makedirs(outDir, exist_ok=True)
    table = benchRows(rows)

    csvPath = os.path.join(outDir, CSV_FILE)
    with open(csvPath, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(BENCH_COLUMNS)
        writer.writerows(table)

    textPath = os.path.join(outDir, TABLE_FILE)
    with open(textPath, "w") as f:
        f.write(Template(filename=TEMPLATE_LOCATION).render(rows=table))

    return csvPath, textPath
