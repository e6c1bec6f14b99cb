"""Structural Hamming distance for mixed predicted graphs against DAG truths.

Per-edge scoring: a predicted edge earns TP=1 when it matches a true edge
with orientation, TP=0.5/FP=0.5 when the adjacency is right but the
orientation is wrong (reversed, or undirected where the truth is
directed), and FP=1 when the adjacency does not exist at all. Then
SHD = |E| - TP + FP, which charges one unit for each addition, removal,
reversal, or missing orientation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError
from .graph import Graph, GraphKind


@dataclass(frozen=True)
class EdgeAccounting:
    tp: float
    fp: float
    true_edge_count: int


def edge_accounting(truth: Graph, predicted: Graph) -> EdgeAccounting:
    """Sum per-edge TP/FP contributions of the predicted graph."""
    if truth.p != predicted.p:
        raise ContractError(f"node counts differ: truth p={truth.p}, predicted p={predicted.p}")
    if truth.kind != GraphKind.DAG:
        raise ContractError("SHD accounting requires a DAG truth")
    tp = 0.0
    fp = 0.0
    for j, k in predicted.directed:
        if (j, k) in truth.directed:
            tp += 1.0
        elif (k, j) in truth.directed:
            tp += 0.5
            fp += 0.5
        else:
            fp += 1.0
    for j, k in predicted.undirected:
        if (j, k) in truth.directed or (k, j) in truth.directed:
            tp += 0.5
            fp += 0.5
        else:
            fp += 1.0
    return EdgeAccounting(tp=tp, fp=fp, true_edge_count=len(truth.directed))


def shd(truth: Graph, predicted: Graph) -> float:
    """SHD = |E| - TP + FP. Halves only arise pairwise, so totals are integral."""
    acc = edge_accounting(truth, predicted)
    value = acc.true_edge_count - acc.tp + acc.fp
    assert abs(value - round(value)) < 1e-9, "SHD must come out integral"
    return value
