"""
Report tables: rows of model configurations, columns of test conditions,
cells of per-seed error breakdowns summarised by their median rate
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.core.errors import InvalidInputError
from src.eval.metrics import ErrorBreakdown


@dataclass(frozen=True)
class RowKey:
    """(init language, DiffKM on/off, alpha); the DiffKM-off row is the k-means baseline"""

    init: str
    diffkm: bool
    alpha: float = 0.0

    @property
    def label(self) -> str:
        if not self.diffkm:
            return f"init-{self.init}/baseline"
        return f"init-{self.init}/diffkm/alpha={self.alpha:g}"


@dataclass
class ReportTable:
    """Per-seed breakdowns for every (row, column) plus per-row failures"""

    title: str
    rows: List[RowKey]
    columns: List[str]
    seeds: List[int]
    cells: Dict[str, Dict[str, Dict[int, ErrorBreakdown]]] = field(default_factory=dict)
    failures: Dict[str, Dict[int, str]] = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            self.cells.setdefault(row.label, {column: {} for column in self.columns})
            self.failures.setdefault(row.label, {})

    def _cell(self, row: RowKey, column: str) -> Dict[int, ErrorBreakdown]:
        try:
            return self.cells[row.label][column]
        except KeyError as e:
            raise InvalidInputError(f"no cell ({row.label}, {column}) in '{self.title}'") from e

    def record(self, row: RowKey, column: str, seed: int, breakdown: ErrorBreakdown) -> None:
        self._cell(row, column)[seed] = breakdown

    def record_failure(self, row: RowKey, seed: int, message: str) -> None:
        self.failures[row.label][seed] = message

    def rates(self, row: RowKey, column: str) -> Dict[int, float]:
        return {seed: b.rate for seed, b in sorted(self._cell(row, column).items())}

    def median(self, row: RowKey, column: str) -> Optional[float]:
        rates = list(self.rates(row, column).values())
        return float(np.median(rates)) if rates else None

    def populated(self) -> int:
        """Number of cells with at least one seed"""
        return sum(1 for row in self.rows for column in self.columns if self._cell(row, column))

    def find(self, init: str, diffkm: bool, alpha: float = 0.0) -> RowKey:
        key = RowKey(init, diffkm, alpha if diffkm else 0.0)
        if key not in self.rows:
            raise InvalidInputError(f"row {key.label} is not part of '{self.title}'")
        return key

    def to_rows(self) -> List[Dict[str, Any]]:
        """Wide form for CSV: one line per row, median rate per column"""
        out = []
        for row in self.rows:
            line: Dict[str, Any] = {
                "row": row.label,
                "init": row.init,
                "diffkm": int(row.diffkm),
                "alpha": row.alpha,
            }
            for column in self.columns:
                value = self.median(row, column)
                line[column] = "" if value is None else f"{value:.6f}"
            line["failed_seeds"] = " ".join(str(seed) for seed in sorted(self.failures[row.label]))
            out.append(line)
        return out

    def fieldnames(self) -> List[str]:
        return ["row", "init", "diffkm", "alpha", *self.columns, "failed_seeds"]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "title": self.title,
            "columns": list(self.columns),
            "seeds": list(self.seeds),
            "rows": [
                {
                    "label": row.label,
                    "init": row.init,
                    "diffkm": row.diffkm,
                    "alpha": row.alpha,
                    "cells": {
                        column: {
                            "median": self.median(row, column),
                            "per_seed": {
                                str(seed): b.to_dict() for seed, b in sorted(self._cell(row, column).items())
                            },
                        }
                        for column in self.columns
                    },
                    "failures": {str(seed): msg for seed, msg in sorted(self.failures[row.label].items())},
                }
                for row in self.rows
            ],
        }


def grid_rows(inits: Sequence[str], alphas: Sequence[float], include_baseline: bool = True) -> List[RowKey]:
    """Baseline row (when enabled) followed by one DiffKM row per alpha, for each init"""
    rows = []
    for init in inits:
        if include_baseline:
            rows.append(RowKey(init, False, 0.0))
        rows.extend(RowKey(init, True, float(alpha)) for alpha in alphas)
    return rows
