"""CSV readers and writers for event streams, intensity tables and result rows."""
from __future__ import annotations

import csv
import os

import numpy as np


class EventFileError(ValueError):
    pass


def write_events(path, streams, T: float) -> None:
    """Write ``process,timestamp`` rows preceded by ``# T=`` and ``# D=`` comments."""
    rows = sorted((float(t), j) for j, s in enumerate(streams, 1) for t in s)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# T={float(T)!r}\n# D={len(streams)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["process", "timestamp"])
        for t, j in rows:
            w.writerow([j, repr(t)])


def read_events(path, T: float | None = None, D: int | None = None):
    """Parse an event file into ``(streams, T)``.

    ``T`` and ``D`` come from the flags when given, else from the header
    comments; ``D`` otherwise defaults to the largest process id seen.
    """
    header_T = header_D = None
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = []
        for line in fh:
            s = line.strip()
            if s.startswith("#"):
                body = s[1:].strip()
                if body.startswith("T="):
                    header_T = float(body[2:])
                elif body.startswith("D="):
                    header_D = int(body[2:])
                continue
            if s:
                lines.append(s)
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["process", "timestamp"]:
        raise EventFileError(f"{path}: expected header 'process,timestamp'")
    for lineno, row in enumerate(reader, 2):
        try:
            records.append((int(row["process"]), float(row["timestamp"])))
        except (TypeError, ValueError) as exc:
            raise EventFileError(f"{path}: bad row {lineno}: {row}") from exc
    T = T if T is not None else header_T
    if T is None:
        raise EventFileError(f"{path}: duration unknown; pass --duration or add '# T=<seconds>'")
    if not T > 0:
        raise EventFileError(f"{path}: duration must be positive")
    D = D if D is not None else header_D
    if D is None:
        D = max((p for p, _ in records), default=1)
    streams = [[] for _ in range(D)]
    for p, t in records:
        if not 1 <= p <= D:
            raise EventFileError(f"{path}: process id {p} outside 1..{D}")
        if not 0 <= t <= T:
            raise EventFileError(f"{path}: timestamp {t} outside [0, {T}]")
        streams[p - 1].append(t)
    return [np.sort(np.array(s, dtype=float)) for s in streams], float(T)


def write_intensity(path, intensity, T: float, with_edges: bool = True) -> None:
    M = len(intensity)
    width = T / M
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "t_start", "t_end", "intensity"] if with_edges else ["bin", "intensity"])
        for i, lam in enumerate(intensity, 1):
            if with_edges:
                w.writerow([i, repr((i - 1) * width), repr(i * width), repr(float(lam))])
            else:
                w.writerow([i, repr(float(lam))])


def read_intensity(path) -> np.ndarray:
    """Read a ``bin,...,intensity`` table; rows are ordered by bin."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        rows = [(int(r["bin"]), float(r["intensity"])) for r in reader]
    rows.sort()
    if [b for b, _ in rows] != list(range(1, len(rows) + 1)):
        raise ValueError(f"{path}: bins must run 1..M without gaps")
    return np.array([v for _, v in rows])


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def append_row(path, header, row) -> None:
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(header)
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
