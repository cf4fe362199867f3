from typing import Sequence

import numpy as np

from hsdacs.types import ContractError, EditOps


def edit_distance(ref: Sequence[int] | str, hyp: Sequence[int] | str) -> EditOps:
    """
    Unit-cost Levenshtein distance with a substitution/insertion/deletion breakdown.

    Insertions are hypothesis tokens absent from the reference, deletions are
    reference tokens missing from the hypothesis. Among optimal alignments the
    backtrace prefers substitutions, then deletions.
    """
    n, m = len(ref), len(hyp)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            dist[i, j] = min(dist[i - 1, j - 1] + cost, dist[i - 1, j] + 1, dist[i, j - 1] + 1)

    ops = EditOps(distance=int(dist[n, m]))
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            ops.substitutions += int(ref[i - 1] != hyp[j - 1])
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            ops.deletions += 1
            i -= 1
        else:
            ops.insertions += 1
            j -= 1
    return ops


def error_rate(refs: Sequence[Sequence[int]], hyps: Sequence[Sequence[int]]) -> float:
    """Total edit distance over total reference length, in percent."""
    if len(refs) != len(hyps):
        raise ContractError(f"{len(refs)} references for {len(hyps)} hypotheses")
    total = sum(len(r) for r in refs)
    if total == 0:
        raise ContractError("error rate over an empty reference set")
    errors = sum(edit_distance(r, h).distance for r, h in zip(refs, hyps))
    return 100.0 * errors / total
