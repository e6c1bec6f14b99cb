"""Two-variable direction finding by comparing regression errors.

Fits y = f(x) and x = g(y) with polynomial regressors whose degree is the
`capacity` hyperparameter (the allowed number of regression parameters)
and compares the raw mean squared residuals of the two fits. Declares a
direction only when one error undercuts the other by more than
`decision_threshold`; otherwise predicts no link.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..graph import Graph, GraphKind
from ..sem import Dataset
from . import AlgorithmDef, HyperparameterSpace, LearnOutcome, ParamSpec, register


def _poly_mse(x: np.ndarray, y: np.ndarray, degree: int) -> float:
    # the regressor input is z-scored for Vandermonde conditioning only;
    # residuals stay in the target's own scale
    design = np.vander((x - x.mean()) / x.std(), degree + 1, increasing=True)
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return float(resid @ resid) / len(y)


def fit(ds: Dataset, params: dict):
    if ds.p != 2:
        raise ContractError(f"bivariate direction finding needs p=2 (got p={ds.p})")
    capacity = params["capacity"]
    x, y = ds.X[:, 0], ds.X[:, 1]
    if x.std() == 0 or y.std() == 0:
        raise ContractError("a constant variable has no direction to find")
    eps_f = _poly_mse(x, y, capacity)  # y = f(x)
    eps_g = _poly_mse(y, x, capacity)  # x = g(y)
    return (eps_f, eps_g), {"eps_f": eps_f, "eps_g": eps_g}


def finalize(ds: Dataset, state, post_params: dict) -> LearnOutcome:
    (eps_f, eps_g), diagnostics = state
    threshold = post_params["decision_threshold"]
    directed = set()
    if eps_f < eps_g - threshold:
        directed.add((0, 1))
    elif eps_g < eps_f - threshold:
        directed.add((1, 0))
    graph = Graph(2, frozenset(directed), frozenset(), GraphKind.DAG)
    return LearnOutcome(graph=graph, weights=None, diagnostics=dict(diagnostics))


SPACE = HyperparameterSpace(
    algorithm="bivariate",
    params=(
        ParamSpec(
            name="capacity",
            kind="int",
            grid=(1, 2, 3, 4, 5, 6, 7, 8, 9),
            default=3,
            sim_mean=3,
            stage="fit",
        ),
        ParamSpec(
            name="decision_threshold",
            kind="float",
            grid=(0.02,),
            default=0.02,
            sim_mean=0.02,
            stage="post",
        ),
    ),
    fixed={"regressor": "polynomial-least-squares"},
)

register(AlgorithmDef(name="bivariate", space=SPACE, fit=fit, finalize=finalize, max_p=2))
