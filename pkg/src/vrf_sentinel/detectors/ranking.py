"""Deterministic total ordering of score-matrix entries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from ..modmatrix import MatrixEntryRef
from .scoring import ScoreMatrix


@dataclass(frozen=True)
class RankedEntries:
    """All matrix entries in descending score order.

    +inf sentinel scores come first (among themselves ordered by source
    value descending); remaining ties break by (locale_index,
    interval_index) ascending. Length is always rows * cols.
    """

    method: str
    entries: tuple[tuple[MatrixEntryRef, float], ...]
    locales: tuple[str, ...]
    interval_starts: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def rank_of(self, ref: MatrixEntryRef) -> int:
        """1-based rank of an entry."""
        return self._rank_index()[ref.as_tuple()]

    def top(self, k: int) -> list[MatrixEntryRef]:
        return [ref for ref, _ in self.entries[:k]]

    def _rank_index(self) -> dict[tuple[int, int], int]:
        cached = getattr(self, "_ranks", None)
        if cached is None:
            cached = {ref.as_tuple(): i + 1 for i, (ref, _) in enumerate(self.entries)}
            object.__setattr__(self, "_ranks", cached)
        return cached


def rank_entries(score_matrix: ScoreMatrix) -> RankedEntries:
    n_rows, n_cols = score_matrix.shape
    src = score_matrix.source_values

    def sort_key(cell: tuple[int, int]) -> tuple[float, float, int, int]:
        i, j = cell
        score = float(score_matrix.scores[i, j])
        # Raw source value breaks ties only among +inf sentinels.
        sentinel_tiebreak = 0.0
        if math.isinf(score) and score > 0 and src is not None:
            sentinel_tiebreak = -float(src[i, j])
        return (-score, sentinel_tiebreak, i, j)

    cells = sorted(
        ((i, j) for i in range(n_rows) for j in range(n_cols)), key=sort_key
    )
    entries = tuple(
        (MatrixEntryRef(i, j), float(score_matrix.scores[i, j])) for i, j in cells
    )
    return RankedEntries(
        method=score_matrix.method,
        entries=entries,
        locales=score_matrix.locales,
        interval_starts=tuple(iv.start.isoformat() for iv in score_matrix.intervals),
    )


def ranked_to_csv(ranked: RankedEntries, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "locale", "interval_start", "score"])
        for rank, (ref, score) in enumerate(ranked.entries, start=1):
            writer.writerow(
                [
                    rank,
                    ranked.locales[ref.locale_index],
                    ranked.interval_starts[ref.interval_index],
                    repr(score),
                ]
            )
