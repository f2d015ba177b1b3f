import csv
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

from .errors import DataError

ASSIGNMENT_HEADER = ("trajectory_id", "cluster_id")


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Writes a header row followed by `rows`; floats use their shortest repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def write_assignment(path: Union[str, Path], trajectory_ids: Sequence[str],
                     cluster_ids: Sequence[int]) -> Path:
    if len(trajectory_ids) != len(cluster_ids):
        raise ValueError("trajectory_ids and cluster_ids differ in length")
    return write_csv(path, ASSIGNMENT_HEADER, zip(trajectory_ids, (int(c) for c in cluster_ids)))


def read_assignment(path: Union[str, Path]) -> Tuple[List[str], List[int]]:
    """
    Reads a (trajectory_id, cluster_id) CSV.

    Raises:
        DataError: wrong header, malformed row or duplicate id.
    """
    path = Path(path)
    ids: List[str] = []
    clusters: List[int] = []
    seen: Dict[str, int] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ASSIGNMENT_HEADER:
            raise DataError(f"expected header {','.join(ASSIGNMENT_HEADER)}", 1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError("expected 2 columns", line_no)
            try:
                cluster = int(row[1])
            except ValueError:
                raise DataError(f"cluster_id {row[1]!r} is not an integer", line_no)
            if row[0] in seen:
                raise DataError(f"duplicate trajectory id {row[0]!r}", line_no)
            seen[row[0]] = cluster
            ids.append(row[0])
            clusters.append(cluster)
    return ids, clusters
