"""Pairwise additive noise model direction finding.

For every unordered pair, regress each variable on the other with kernel
ridge regression and HSIC-test the residuals against the putative cause.
A direction is declared only when exactly one side's residuals look
independent at the given level; the output is a directed MIXED graph and
acyclicity is deliberately not enforced (the method is purely pairwise).
Linear-Gaussian pairs tend to fit both ways and so yield no edge.
"""

from __future__ import annotations

from itertools import combinations

from ..errors import CausalBenchError, ContractError
from ..graph import Graph, GraphKind
from ..sem import Dataset
from ..stats import hsic_test, kernel_regress
from . import AlgorithmDef, HyperparameterSpace, LearnOutcome, ParamSpec, register


def fit(ds: Dataset, params: dict):
    if ds.n < 50:
        raise ContractError(f"anm needs n >= 50 (got {ds.n})")
    pvals = {}
    for j, k in combinations(range(ds.p), 2):
        try:
            fwd = kernel_regress(ds.X[:, j], ds.X[:, k])
            p_fwd = hsic_test(fwd.residuals, ds.X[:, j]).p_value
            bwd = kernel_regress(ds.X[:, k], ds.X[:, j])
            p_bwd = hsic_test(bwd.residuals, ds.X[:, k]).p_value
        except CausalBenchError as exc:
            raise type(exc)(f"pair ({j},{k}): {exc}") from exc
        pvals[(j, k)] = (p_fwd, p_bwd)
    return pvals, {"pairs_tested": len(pvals)}


def finalize(ds: Dataset, state, post_params: dict) -> LearnOutcome:
    pvals, diagnostics = state
    alpha = post_params["alpha"]
    directed = set()
    for (j, k), (p_fwd, p_bwd) in pvals.items():
        fwd_ok = p_fwd >= alpha
        bwd_ok = p_bwd >= alpha
        if fwd_ok and not bwd_ok:
            directed.add((j, k))
        elif bwd_ok and not fwd_ok:
            directed.add((k, j))
    graph = Graph(ds.p, frozenset(directed), frozenset(), GraphKind.MIXED)
    return LearnOutcome(graph=graph, weights=None, diagnostics=dict(diagnostics))


SPACE = HyperparameterSpace(
    algorithm="anm",
    params=(
        ParamSpec(
            name="alpha",
            kind="float",
            grid=(0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5),
            default=0.05,
            sim_mean=0.001,
            stage="post",
        ),
    ),
    fixed={"regressor": "kernel-ridge", "independence_test": "hsic-gamma"},
)

register(AlgorithmDef(name="anm", space=SPACE, fit=fit, finalize=finalize))
