"""Aggregation of change records into normalized modification matrices.

A modification matrix is a locales x date-intervals grid of change counts
normalized to changes per-day per-1000-voters, for one change type. All
detectors operate on this grid.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FileParseError, VrfError
from .records import ChangeRecord, ChangeType, Snapshot

logger = logging.getLogger(__name__)

# Matrix CSV cells carry floats at 9 significant digits; values are
# recomputed exactly from the integer blocks on read when they agree.
FLOAT_FORMAT = "%.9g"


@dataclass(frozen=True, slots=True)
class MatrixEntryRef:
    """Row/column address of one matrix cell."""

    locale_index: int
    interval_index: int

    def as_tuple(self) -> tuple[int, int]:
        return (self.locale_index, self.interval_index)


@dataclass(frozen=True)
class DateInterval:
    """Half-open date interval [start, end)."""

    start: dt.date
    end: dt.date

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise VrfError(f"empty interval [{self.start}, {self.end})")

    @property
    def days(self) -> int:
        return (self.end - self.start).days

    def contains(self, date: dt.date) -> bool:
        return self.start <= date < self.end


@dataclass(frozen=True)
class ModificationMatrix:
    change_type: ChangeType
    locales: tuple[str, ...]
    intervals: tuple[DateInterval, ...]
    values: np.ndarray      # float, changes/day/1000 voters
    raw_counts: np.ndarray  # int
    populations: np.ndarray  # int, registered voters at interval start

    def __post_init__(self) -> None:
        shape = (len(self.locales), len(self.intervals))
        if not self.locales:
            raise VrfError("matrices must have at least one locale row")
        if not self.intervals:
            raise VrfError("matrices must have at least one interval column")
        for name in ("values", "raw_counts", "populations"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise VrfError(f"{name} grid has shape {arr.shape}, expected {shape}")
        if not np.isfinite(self.values).all():
            raise VrfError("matrix values must be finite")
        if np.any(self.values < 0):
            raise VrfError("matrix values must be non-negative")
        if np.any(self.populations < 1):
            raise VrfError("populations must be >= 1")
        for a, b in zip(self.intervals, self.intervals[1:]):
            if a.end != b.start:
                raise VrfError("intervals must be contiguous and ascending")
        self.values.setflags(write=False)
        self.raw_counts.setflags(write=False)
        self.populations.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def locale_index(self, locale: str) -> int:
        return self.locales.index(locale)

    def interval_index(self, date: dt.date) -> int:
        """Column whose half-open interval contains `date`."""
        for j, interval in enumerate(self.intervals):
            if interval.contains(date):
                return j
        raise DataError(f"date {date} outside matrix span")

    def with_values(self, values: np.ndarray) -> "ModificationMatrix":
        """Copy carrying a replaced values grid (raw counts untouched)."""
        return ModificationMatrix(
            change_type=self.change_type,
            locales=self.locales,
            intervals=self.intervals,
            values=np.asarray(values, dtype=float).copy(),
            raw_counts=self.raw_counts.copy(),
            populations=self.populations.copy(),
        )


class PopulationSource:
    """Registered-voter counts per (locale, interval start)."""

    def population(self, locale: str, interval_start: dt.date) -> int | None:
        raise NotImplementedError

    def locales(self) -> list[str]:
        raise NotImplementedError


class ConstantPopulations(PopulationSource):
    """Fixed per-locale counts, constant over time."""

    def __init__(self, counts: dict[str, int]):
        self._counts = dict(counts)

    def population(self, locale: str, interval_start: dt.date) -> int | None:
        return self._counts.get(locale)

    def locales(self) -> list[str]:
        return sorted(self._counts)


class SnapshotPopulations(PopulationSource):
    """Counts read off snapshots: the latest snapshot strictly before the
    interval start (the count before the interval's changes occurred)."""

    def __init__(self, snapshots: list[Snapshot]):
        if not snapshots:
            raise DataError("need at least one snapshot for populations")
        stamped = sorted(((s.snapshot_date, s.locale_counts) for s in snapshots))
        self._dates = [d for d, _ in stamped]
        self._counts = [c for _, c in stamped]

    def population(self, locale: str, interval_start: dt.date) -> int | None:
        idx = None
        for i, date in enumerate(self._dates):
            if date < interval_start:
                idx = i
            else:
                break
        if idx is None:
            idx = 0  # interval opens before the first snapshot; use it
        return self._counts[idx].get(locale)

    def locales(self) -> list[str]:
        seen: set[str] = set()
        for counts in self._counts:
            seen.update(counts)
        return sorted(seen)


def build_intervals(start: dt.date, end: dt.date, interval_days: int) -> tuple[DateInterval, ...]:
    """Contiguous half-open intervals of fixed width covering [start, end]."""
    if interval_days < 1:
        raise VrfError("interval_days must be >= 1")
    intervals = []
    cursor = start
    while cursor <= end:
        nxt = cursor + dt.timedelta(days=interval_days)
        intervals.append(DateInterval(cursor, nxt))
        cursor = nxt
    return tuple(intervals)


def build_matrix(
    changes: list[ChangeRecord],
    change_type: ChangeType,
    interval_days: int,
    populations: PopulationSource,
    start: dt.date | None = None,
    end: dt.date | None = None,
    locales: list[str] | None = None,
) -> ModificationMatrix:
    """Aggregate matching change records into a normalized matrix.

    Each matching record increments exactly one cell, keyed by its
    posterior_date and locale. The interval grid defaults to covering the
    posterior dates seen; locales default to the population source's full
    list (so zero-change locales still get rows).
    """
    matching = [c for c in changes if c.change_type == change_type]
    if start is None or end is None:
        if not matching:
            raise DataError(
                f"no {change_type.value} changes and no explicit date span given"
            )
        dates = [c.posterior_date for c in matching]
        start = start or min(dates)
        end = end or max(dates)
    intervals = build_intervals(start, end, interval_days)

    if locales is None:
        locales = sorted(set(populations.locales()) | {c.locale for c in matching})
    else:
        locales = sorted(locales)
    row = {loc: i for i, loc in enumerate(locales)}
    n_rows, n_cols = len(locales), len(intervals)

    raw = np.zeros((n_rows, n_cols), dtype=np.int64)
    interval_starts = [iv.start for iv in intervals]
    for change in matching:
        if change.locale not in row:
            raise DataError(f"change locale {change.locale!r} missing from locale list")
        j = _interval_of(interval_starts, intervals, change.posterior_date)
        raw[row[change.locale], j] += 1

    pops = np.ones((n_rows, n_cols), dtype=np.int64)
    values = np.zeros((n_rows, n_cols), dtype=float)
    for i, locale in enumerate(locales):
        for j, interval in enumerate(intervals):
            pop = populations.population(locale, interval.start)
            if pop is None or pop < 1:
                if raw[i, j] > 0:
                    raise DataError(
                        f"no population for occupied cell (locale {locale!r}, "
                        f"interval {interval.start.isoformat()})"
                    )
                if pop is not None and pop < 1:
                    logger.warning(
                        "locale %s has population %d at %s; cell zeroed",
                        locale, pop, interval.start,
                    )
                pops[i, j] = 1
                values[i, j] = 0.0
            else:
                pops[i, j] = pop
                values[i, j] = raw[i, j] / interval.days / (pop / 1000.0)

    return ModificationMatrix(
        change_type=change_type,
        locales=tuple(locales),
        intervals=intervals,
        values=values,
        raw_counts=raw,
        populations=pops,
    )


def _interval_of(starts: list[dt.date], intervals: tuple[DateInterval, ...], date: dt.date) -> int:
    import bisect

    j = bisect.bisect_right(starts, date) - 1
    if j < 0 or not intervals[j].contains(date):
        raise DataError(f"posterior date {date} outside matrix span")
    return j


def normalized_values(raw: np.ndarray, populations: np.ndarray, interval_days: np.ndarray) -> np.ndarray:
    """Apply the per-day per-1000-voter normalization to a count grid."""
    return raw / interval_days[np.newaxis, :] / (populations / 1000.0)


# --- CSV round trip ----------------------------------------------------------


def matrix_to_csv(matrix: ModificationMatrix, path: str) -> None:
    """Write the three stacked blocks (values, raw_counts, populations).

    Header row: corner cell `<change_type>:<interval_days>`, then interval
    start dates. First column of each row is the locale code.
    """
    days = matrix.intervals[0].days
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = [f"{matrix.change_type.value}:{days}"] + [
            iv.start.isoformat() for iv in matrix.intervals
        ]
        writer.writerow(header)
        for i, locale in enumerate(matrix.locales):
            writer.writerow([locale] + [FLOAT_FORMAT % v for v in matrix.values[i]])
        writer.writerow([])
        for i, locale in enumerate(matrix.locales):
            writer.writerow([locale] + [str(int(v)) for v in matrix.raw_counts[i]])
        writer.writerow([])
        for i, locale in enumerate(matrix.locales):
            writer.writerow([locale] + [str(int(v)) for v in matrix.populations[i]])


def csv_to_matrix(path: str) -> ModificationMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FileParseError(f"{path}: empty matrix file")
    corner, *date_cells = rows[0]
    try:
        type_token, days_token = corner.split(":")
        change_type = ChangeType(type_token)
        interval_days = int(days_token)
    except ValueError as exc:
        raise FileParseError(f"{path}: bad corner cell {corner!r}") from exc
    starts = [dt.date.fromisoformat(c) for c in date_cells]
    if not starts:
        raise FileParseError(f"{path}: matrix has no interval columns")
    intervals = tuple(
        DateInterval(s, s + dt.timedelta(days=interval_days)) for s in starts
    )

    blocks: list[list[list[str]]] = [[]]
    for row in rows[1:]:
        if not row or all(not c for c in row):
            blocks.append([])
        else:
            blocks[-1].append(row)
    blocks = [b for b in blocks if b]
    if len(blocks) != 3:
        raise FileParseError(f"{path}: expected 3 blocks, found {len(blocks)}")
    n_rows = len(blocks[0])
    if n_rows == 0:
        raise FileParseError(f"{path}: matrices must have at least one locale row")
    if any(len(b) != n_rows for b in blocks):
        raise FileParseError(f"{path}: blocks disagree on locale count")

    locales: list[str] = []
    grids = []
    for b, block in enumerate(blocks):
        grid = np.zeros((n_rows, len(starts)), dtype=float)
        for i, row in enumerate(block):
            if len(row) != len(starts) + 1:
                raise FileParseError(
                    f"{path}: block {b} row {i} has {len(row) - 1} cells, "
                    f"expected {len(starts)}"
                )
            if b == 0:
                locales.append(row[0])
            elif row[0] != locales[i]:
                raise FileParseError(f"{path}: locale labels disagree between blocks")
            try:
                grid[i] = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise FileParseError(f"{path}: block {b} row {i}: {exc}") from exc
        grids.append(grid)

    values, raw, pops = grids
    if np.any(values < 0):
        raise FileParseError(f"{path}: negative values in matrix body")
    raw_int = raw.astype(np.int64)
    pops_int = pops.astype(np.int64)
    if np.any(raw_int != raw) or np.any(pops_int != pops):
        raise FileParseError(f"{path}: raw_counts/populations must be integers")

    # Where the serialized value matches the normalization formula at the
    # written precision, restore the exact recomputed value.
    days_arr = np.array([iv.days for iv in intervals], dtype=float)
    exact = normalized_values(raw_int, pops_int, days_arr)
    rounded_exact = np.array(
        [[float(FLOAT_FORMAT % v) for v in row] for row in exact]
    )
    values = np.where(values == rounded_exact, exact, values)

    return ModificationMatrix(
        change_type=change_type,
        locales=tuple(locales),
        intervals=intervals,
        values=values,
        raw_counts=raw_int,
        populations=pops_int,
    )


def top_singular_values(matrix: ModificationMatrix, count: int) -> list[float]:
    """Largest `count` singular values of the values grid (diagnostic export)."""
    if count > min(matrix.shape):
        raise VrfError(f"count {count} exceeds min(matrix shape) {min(matrix.shape)}")
    s = np.linalg.svd(matrix.values, compute_uv=False)
    return [float(v) for v in s[:count]]
