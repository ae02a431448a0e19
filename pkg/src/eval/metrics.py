"""
Word error rate with a substitution / deletion / insertion breakdown
"""

from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from src.core.errors import InvalidInputError


@dataclass(frozen=True)
class ErrorBreakdown:
    """Error counts of one or more aligned transcripts"""

    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_length: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def rate(self) -> float:
        return self.errors / max(self.ref_length, 1)

    def __add__(self, other: "ErrorBreakdown") -> "ErrorBreakdown":
        return ErrorBreakdown(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.ref_length + other.ref_length,
        )

    def to_dict(self) -> Dict[str, float]:
        return {
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "ref_length": self.ref_length,
            "rate": self.rate,
        }


def edit_distance(ref: Sequence[int], hyp: Sequence[int]) -> ErrorBreakdown:
    """
    Levenshtein alignment with unit costs

    Among the alignments of minimal cost the one with the fewest insertions
    plus deletions wins, so a substitution is preferred over an
    insertion/deletion pair. Counts are then fully determined.
    """
    n, m = len(ref), len(hyp)
    # cost[i, j] and indel[i, j] for ref[:i] against hyp[:j]; compared lexicographically
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    indel = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = indel[:, 0] = np.arange(n + 1)
    cost[0, :] = indel[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = (cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]), indel[i - 1, j - 1])
            up = (cost[i - 1, j] + 1, indel[i - 1, j] + 1)
            left = (cost[i, j - 1] + 1, indel[i, j - 1] + 1)
            cost[i, j], indel[i, j] = min(diag, up, left)

    total, gaps = int(cost[n, m]), int(indel[n, m])
    # deletions - insertions == n - m once the number of gaps is fixed
    deletions = (gaps + n - m) // 2
    return ErrorBreakdown(
        substitutions=total - gaps,
        deletions=deletions,
        insertions=gaps - deletions,
        ref_length=n,
    )


def score_corpus(refs: Sequence[Sequence[int]], hyps: Sequence[Sequence[int]]) -> ErrorBreakdown:
    """Pooled breakdown over a corpus: total errors over total reference length"""
    if len(refs) != len(hyps):
        raise InvalidInputError(f"{len(refs)} references but {len(hyps)} hypotheses")
    total = ErrorBreakdown()
    for ref, hyp in zip(refs, hyps):
        total = total + edit_distance(ref, hyp)
    return total
