"""
Snapshot Store
Owns a run's output directory: field dumps, the diagnostics CSV,
Hoelder report CSVs and the JSON summary. File names carry snapshot
indices, never timestamps, so identical runs give identical trees.
"""

import csv
import json
import logging
import re
from pathlib import Path
from typing import Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np

from diagnostics import CSV_COLUMNS, DiagnosticsRecord, HolderReport
from field import MapField
from lattice import Lattice, TorusPair

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SNAPSHOT_PATTERN = re.compile(r"^snapshot_(\d+)\.csv$")
DIAGNOSTICS_FILE = "diagnostics.csv"
SUMMARY_FILE = "summary.json"
HOLDER_COLUMNS = ["alpha", "R", "osc", "seminorm"]


def _number(x) -> str:
    """Shortest round-trip decimal"""
    return repr(float(x))


def create_store(output_dir: PathLike) -> Path:
    """Create the output directory if needed"""
    store = Path(output_dir)
    store.mkdir(parents=True, exist_ok=True)
    return store


def snapshot_path(output_dir: PathLike, index: int) -> Path:
    return Path(output_dir) / f"snapshot_{index:06d}.csv"


# ==================== FIELD DUMPS ====================

def write_snapshot(field: MapField, path: PathLike) -> Path:
    """
    Dump a field as CSV

    First row: n1, n2, t, the 4 entries of B and the 8 lattice entries
    (domain then target, column-major). Then one row i, j, v1, v2 per grid
    point, row-major.
    """
    path = Path(path)
    pair = field.pair
    header = ([str(field.n1), str(field.n2), _number(field.time)]
              + [_number(x) for x in pair.linear_part.reshape(-1, order="F")]
              + [_number(x) for x in pair.domain.to_column_major()]
              + [_number(x) for x in pair.target.to_column_major()])

    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i in range(field.n1):
            for j in range(field.n2):
                writer.writerow([str(i), str(j), _number(field.v[i, j, 0]), _number(field.v[i, j, 1])])
    return path


class SnapshotHeader:
    """First row of a field dump"""
    def __init__(self, n1: int, n2: int, time: float, pair: TorusPair):
        self.n1 = n1
        self.n2 = n2
        self.time = time
        self.pair = pair

    @classmethod
    def from_row(cls, row: Sequence[str], path: PathLike) -> "SnapshotHeader":
        if len(row) != 15:
            raise ValueError(f"Invalid snapshot header in {path}")
        linear_part = np.array([float(x) for x in row[3:7]]).reshape(2, 2, order="F")
        pair = TorusPair(Lattice.from_column_major(row[7:11]), Lattice.from_column_major(row[11:15]), linear_part)
        return cls(int(row[0]), int(row[1]), float(row[2]), pair)


def read_snapshot_header(path: PathLike) -> SnapshotHeader:
    """Grid size, time and torus pair without reading the grid rows"""
    with open(path, 'r', newline='') as f:
        return SnapshotHeader.from_row(next(csv.reader(f), []), path)


def read_snapshot(path: PathLike) -> MapField:
    """Load a field dump written by write_snapshot"""
    path = Path(path)
    with open(path, 'r', newline='') as f:
        rows = list(csv.reader(f))
    header = SnapshotHeader.from_row(rows[0] if rows else [], path)

    n1, n2 = header.n1, header.n2
    if len(rows) - 1 != n1 * n2:
        raise ValueError(f"Snapshot {path} has {len(rows) - 1} grid rows, expected {n1 * n2}")
    v = np.zeros((n1, n2, 2))
    for row in rows[1:]:
        i, j = int(row[0]), int(row[1])
        v[i, j] = float(row[2]), float(row[3])
    return MapField(header.pair, v, header.time)


class SnapshotWriter:
    """flow.run snapshot callback writing snapshot_000000.csv, snapshot_000001.csv, ..."""
    def __init__(self, output_dir: PathLike):
        self.output_dir = create_store(output_dir)
        self.count = 0
        self.paths: List[Path] = []

    def __call__(self, field: MapField):
        path = write_snapshot(field, snapshot_path(self.output_dir, self.count))
        self.paths.append(path)
        self.count += 1


def list_snapshots(output_dir: PathLike) -> List[Path]:
    """Stored snapshots in index order"""
    store = Path(output_dir)
    if not store.exists():
        logger.info(f"📁 No output directory at {store}")
        return []
    found = [p for p in store.iterdir() if SNAPSHOT_PATTERN.match(p.name)]
    return sorted(found, key=lambda p: int(SNAPSHOT_PATTERN.match(p.name).group(1)))


def iter_snapshots(output_dir: PathLike) -> Iterator[MapField]:
    """Stored snapshots in index order, loaded one at a time"""
    for path in list_snapshots(output_dir):
        yield read_snapshot(path)


# ==================== TABLES ====================

def write_diagnostics_csv(records: Sequence[DiagnosticsRecord], path: PathLike) -> Path:
    path = Path(path)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for record in records:
            writer.writerow([_number(x) for x in record.csv_row()])
    return path


def read_diagnostics_csv(path: PathLike) -> List[DiagnosticsRecord]:
    with open(path, 'r', newline='') as f:
        return [DiagnosticsRecord.from_dict(row) for row in csv.DictReader(f)]


def write_holder_csv(reports: Sequence[HolderReport], path: PathLike, label: str = "") -> Path:
    """alpha, R, osc, seminorm rows; a non-empty label adds a leading quantity column"""
    path = Path(path)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow((["quantity"] if label else []) + HOLDER_COLUMNS)
        for report in reports:
            for row in report.rows():
                writer.writerow(([label] if label else []) + [_number(x) for x in row])
    return path


def write_table(rows: Sequence[Dict[str, object]], columns: Sequence[str], path: PathLike) -> Path:
    """Generic CSV for study tables; floats use the round-trip format"""
    path = Path(path)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_number(row[c]) if isinstance(row.get(c), float) else row.get(c, "")
                             for c in columns])
    return path


def write_summary(summary: Dict, path: PathLike) -> Path:
    path = Path(path)
    with open(path, 'w') as f:
        json.dump(summary, f, indent=2, default=_json_default)
    return path


def read_summary(path: PathLike) -> Dict:
    with open(path, 'r') as f:
        return json.load(f)


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def store_summary(output_dir: PathLike) -> Tuple[int, bool, bool]:
    """(snapshot count, diagnostics present, summary present)"""
    store = Path(output_dir)
    return (len(list_snapshots(store)), (store / DIAGNOSTICS_FILE).exists(), (store / SUMMARY_FILE).exists())
