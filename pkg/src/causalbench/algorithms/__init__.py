"""Structure learners behind a single learn(dataset, assignment) interface.

Each algorithm declares a HyperparameterSpace (grid, paper default, and the
grid point that won on average across simulations) and is implemented as a
fit stage plus a finalize stage. Parameters marked stage="post" only affect
finalize (thresholding, significance cutoffs), which lets a sweep reuse one
expensive fit across those values without changing any semantics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import product

from ..errors import ConfigError
from ..graph import Graph, WeightedAdjacency
from ..sem import Dataset


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str  # "float" | "int"
    grid: tuple
    default: float
    sim_mean: float  # best-on-average grid value reported for this algorithm
    stage: str = "fit"  # "fit" | "post"

    def validate(self, value):
        if self.kind == "int":
            if int(value) != value:
                raise ConfigError(f"{self.name} must be an integer, got {value!r}")
        return float(value) if self.kind == "float" else int(value)


@dataclass(frozen=True)
class HyperparameterSpace:
    algorithm: str
    params: tuple
    fixed: dict = field(default_factory=dict)  # constants, for documentation/export

    def names(self):
        return [p.name for p in self.params]

    def validate(self, assignment: dict) -> dict:
        unknown = set(assignment) - set(self.names())
        if unknown:
            raise ConfigError(f"{self.algorithm}: unknown hyperparameters {sorted(unknown)}")
        out = {}
        for spec in self.params:
            if spec.name not in assignment:
                raise ConfigError(f"{self.algorithm}: missing hyperparameter {spec.name!r}")
            out[spec.name] = spec.validate(assignment[spec.name])
        return out

    def grid_assignments(self) -> list[dict]:
        axes = [[(p.name, v) for v in p.grid] for p in self.params]
        return [dict(combo) for combo in product(*axes)]

    def default_assignment(self) -> dict:
        return {p.name: p.default for p in self.params}

    def sim_mean_assignment(self) -> dict:
        return {p.name: p.sim_mean for p in self.params}

    def split_stages(self, assignment: dict):
        fit_params, post_params = {}, {}
        for spec in self.params:
            (fit_params if spec.stage == "fit" else post_params)[spec.name] = assignment[
                spec.name
            ]
        return fit_params, post_params

    def describe(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "hyperparameters": [
                {
                    "name": p.name,
                    "kind": p.kind,
                    "grid": list(p.grid),
                    "default": p.default,
                    "sim_mean": p.sim_mean,
                    "stage": p.stage,
                }
                for p in self.params
            ],
            "fixed": dict(self.fixed),
        }


@dataclass(frozen=True)
class HyperparameterAssignment:
    algorithm: str
    params: dict

    def __post_init__(self):
        space = get_algorithm(self.algorithm).space
        object.__setattr__(self, "params", space.validate(self.params))


@dataclass
class LearnOutcome:
    graph: Graph
    weights: WeightedAdjacency | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AlgorithmDef:
    name: str
    space: HyperparameterSpace
    fit: callable
    finalize: callable
    min_p: int = 2
    max_p: int | None = None


_REGISTRY: dict = {}


def register(algo: AlgorithmDef):
    _REGISTRY[algo.name] = algo
    return algo


def get_algorithm(name: str) -> AlgorithmDef:
    if name not in _REGISTRY:
        raise ConfigError(f"unknown algorithm {name!r}; known: {sorted(_REGISTRY)}")
    return _REGISTRY[name]


def algorithm_names() -> list[str]:
    return sorted(_REGISTRY)


def registry_description() -> list[dict]:
    return [get_algorithm(name).space.describe() for name in algorithm_names()]


def learn(ds: Dataset, assignment: HyperparameterAssignment) -> LearnOutcome:
    """Run one learner end to end and stamp runtime into diagnostics."""
    algo = get_algorithm(assignment.algorithm)
    fit_params, post_params = algo.space.split_stages(assignment.params)
    start = time.perf_counter()
    state = algo.fit(ds, fit_params)
    outcome = algo.finalize(ds, state, post_params)
    outcome.diagnostics.setdefault("runtime_ms", int((time.perf_counter() - start) * 1000))
    return outcome


from . import anm, bivariate, ges, lingam, notears, pc  # noqa: E402  (registration)

__all__ = [
    "AlgorithmDef",
    "HyperparameterAssignment",
    "HyperparameterSpace",
    "LearnOutcome",
    "ParamSpec",
    "algorithm_names",
    "get_algorithm",
    "learn",
    "registry_description",
    "register",
]
