"""Continual-learning metrics over a lower-triangular performance matrix."""

from __future__ import annotations

import json
from dataclasses import dataclass


@dataclass(frozen=True)
class PerformanceMatrix:
    """Row k holds accuracies on tasks 1..k measured after learning task k.

    Entry m[k][i] (1-based in the formulas, 0-based in storage) is the test
    accuracy on task i+1 after training through task k+1. Rows grow by one
    column per task, so row k has k+1 entries.
    """

    rows: tuple = ()

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in self.rows)
        for k, row in enumerate(rows):
            if len(row) != k + 1:
                raise ValueError(f"row {k + 1} has {len(row)} entries, expected {k + 1}")
            for v in row:
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"accuracy {v} outside [0, 1] in row {k}")
        object.__setattr__(self, "rows", rows)

    @property
    def num_tasks(self) -> int:
        return len(self.rows)

    def entry(self, k: int, i: int) -> float:
        """Accuracy on task i after learning task k, both 1-based, i <= k."""
        if not 1 <= i <= k <= self.num_tasks:
            raise ValueError(f"need 1 <= i <= k <= {self.num_tasks}, got k={k}, i={i}")
        return self.rows[k - 1][i - 1]

    def with_row(self, row) -> "PerformanceMatrix":
        return PerformanceMatrix(rows=self.rows + (tuple(row),))


def ap(matrix: PerformanceMatrix, k: int) -> float:
    """Average accuracy over tasks 1..k after learning task k."""
    if not 1 <= k <= matrix.num_tasks:
        raise ValueError(f"k must lie in [1, {matrix.num_tasks}], got {k}")
    row = matrix.rows[k - 1]
    return sum(row) / k


def ap_mean(matrix: PerformanceMatrix, k: int) -> float:
    """Mean of ap over the first k rows (average incremental performance)."""
    if not 1 <= k <= matrix.num_tasks:
        raise ValueError(f"k must lie in [1, {matrix.num_tasks}], got {k}")
    return sum(ap(matrix, j) for j in range(1, k + 1)) / k


def bwt(matrix: PerformanceMatrix, k: int):
    """Backward transfer after task k: mean drop on earlier tasks.

    (1/(k-1)) * sum_{i<k} (m[k][i] - m[i][i]); None for k=1 where no earlier
    task exists.
    """
    if not 1 <= k <= matrix.num_tasks:
        raise ValueError(f"k must lie in [1, {matrix.num_tasks}], got {k}")
    if k == 1:
        return None
    total = 0.0
    for i in range(1, k):
        total += matrix.entry(k, i) - matrix.entry(i, i)
    return total / (k - 1)


def to_csv(matrix: PerformanceMatrix) -> str:
    """One line per row, comma-separated, six significant digits."""
    lines = []
    for row in matrix.rows:
        lines.append(",".join(format(v, ".6g") for v in row))
    return "\n".join(lines) + ("\n" if lines else "")


def from_csv(text: str) -> PerformanceMatrix:
    """Parse the to_csv format back into a matrix."""
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append(tuple(float(tok) for tok in line.split(",")))
        except ValueError as err:
            raise ValueError(f"line {line_no}: {err}") from None
    return PerformanceMatrix(rows=tuple(rows))


def metrics_report(matrix: PerformanceMatrix) -> dict:
    """All three metrics per prefix length, JSON-friendly.

    Returns {"ap": [...], "ap_mean": [...], "bwt": [null, ...]} with one
    entry per task; bwt[0] is None.
    """
    ks = range(1, matrix.num_tasks + 1)
    return {
        "ap": [ap(matrix, k) for k in ks],
        "ap_mean": [ap_mean(matrix, k) for k in ks],
        "bwt": [bwt(matrix, k) for k in ks],
    }


def report_to_json(matrix: PerformanceMatrix) -> str:
    return json.dumps(metrics_report(matrix), indent=2) + "\n"
