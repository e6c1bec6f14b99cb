"""Structural equation model sampling and dataset loading.

Two simulated data generating processes are supported, matching the usual
benchmark pair for identifiable structure recovery:

* linear SEM with Gumbel noise and edge weights drawn uniformly from
  [-2, -0.5] u [0.5, 2]
* nonlinear SEM whose mechanisms are exact draws from a zero-mean Gaussian
  process with a unit-bandwidth RBF kernel, plus standard normal noise

Real datasets (e.g. the protein-signaling data, SynTReN expression files)
are loaded from CSV with an optional ground-truth graph file.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, LoadError, NumericalError, ParseError
from .graph import Graph, GraphKind, topological_order
from .rng import Rng

GP_SAMPLE_LIMIT = 20000  # the exact GP draw is O(n^3); refuse absurd n


@dataclass(frozen=True)
class SemSpec:
    kind: str = "gumbel"  # "gumbel" (linear) or "gp" (nonlinear)
    weight_lo: float = 0.5
    weight_hi: float = 2.0
    noise_scale: float = 1.0
    rbf_bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gumbel", "gp"):
            raise ContractError(f"unknown SEM kind {self.kind!r}")
        if not (0 < self.weight_lo < self.weight_hi):
            raise ContractError("need 0 < weight_lo < weight_hi")
        if self.noise_scale <= 0 or self.rbf_bandwidth <= 0:
            raise ContractError("scales must be strictly positive")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    names: tuple
    truth: Graph | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise ContractError("data matrix must be 2-dimensional")
        if not np.all(np.isfinite(X)):
            raise ContractError("data matrix contains NaN or infinite entries")
        names = tuple(str(v) for v in self.names)
        if len(names) != X.shape[1]:
            raise ContractError(f"{len(names)} names for {X.shape[1]} columns")
        if len(set(names)) != len(names):
            raise ContractError("variable names must be unique")
        if self.truth is not None and self.truth.p != X.shape[1]:
            raise ContractError(
                f"truth graph has p={self.truth.p} but data has {X.shape[1]} columns"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)
        self.X.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _default_names(p: int) -> tuple:
    return tuple(f"X{j}" for j in range(p))


def draw_sem_weights(g: Graph, spec: SemSpec, rng: Rng) -> np.ndarray:
    """Weight matrix for g's edges: |w| ~ U[lo, hi], random sign; w[j,k] is j->k."""
    w = np.zeros((g.p, g.p))
    for j, k in sorted(g.directed):
        magnitude = rng.uniform(1, spec.weight_lo, spec.weight_hi)[0]
        sign = 1.0 if rng.next_u64() & 1 else -1.0
        w[j, k] = sign * magnitude
    return w


def sample_linear_gumbel(
    g: Graph,
    n: int,
    spec: SemSpec | None = None,
    rng: Rng | None = None,
    weights: np.ndarray | None = None,
) -> Dataset:
    """Linear SEM X_j = sum_k w[k,j] X_k + z_j with z_j ~ Gumbel(0, scale).

    `weights` overrides the random weight draw (test hook); it must be zero
    off the edge pattern of g.
    """
    spec = spec or SemSpec(kind="gumbel")
    rng = rng or Rng(0)
    if g.kind != GraphKind.DAG:
        raise ContractError("linear SEM sampling requires a DAG")
    if n < 1:
        raise ContractError("need n >= 1")
    order = topological_order(g)
    w = draw_sem_weights(g, spec, rng) if weights is None else np.asarray(weights, float)
    X = np.zeros((n, g.p))
    for j in order:
        z = rng.gumbel(n, spec.noise_scale)
        parents = sorted(g.parents(j))
        X[:, j] = z if not parents else X[:, parents] @ w[parents, j] + z
    meta = {"generator": "gumbel", "n": n, "seed": rng.seed, "noise_scale": spec.noise_scale}
    return Dataset(X, _default_names(g.p), truth=g, meta=meta)


def _rbf_gram(u: np.ndarray, bandwidth: float) -> np.ndarray:
    sq = np.sum(u * u, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (u @ u.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / (2.0 * bandwidth * bandwidth))


def _chol_with_jitter(k: np.ndarray, start: float = 1e-8, cap: float = 1e-4) -> np.ndarray:
    jitter = start
    while jitter <= cap:
        try:
            return np.linalg.cholesky(k + jitter * np.eye(k.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(f"kernel matrix not positive definite up to jitter {cap}")


def sample_nonlinear_gp(
    g: Graph,
    n: int,
    spec: SemSpec | None = None,
    rng: Rng | None = None,
) -> Dataset:
    """Nonlinear SEM: X_j = f_j(X_parents) + z_j, z_j ~ N(0,1).

    f_j is realized exactly at the observed parent rows by drawing from the
    multivariate normal with RBF-kernel covariance (plus a small jitter for
    Cholesky stability). Root nodes are pure standard normal.
    """
    spec = spec or SemSpec(kind="gp")
    rng = rng or Rng(0)
    if g.kind != GraphKind.DAG:
        raise ContractError("GP SEM sampling requires a DAG")
    if n < 1:
        raise ContractError("need n >= 1")
    if n > GP_SAMPLE_LIMIT:
        raise ContractError(f"n={n} exceeds the GP sampling guard ({GP_SAMPLE_LIMIT})")
    X = np.zeros((n, g.p))
    for j in topological_order(g):
        z = rng.normal(n) * spec.noise_scale
        parents = sorted(g.parents(j))
        if not parents:
            X[:, j] = z
            continue
        gram = _rbf_gram(X[:, parents], spec.rbf_bandwidth)
        chol = _chol_with_jitter(gram)
        f = chol @ rng.normal(n)
        X[:, j] = f + z
    meta = {"generator": "gp", "n": n, "seed": rng.seed, "rbf_bandwidth": spec.rbf_bandwidth}
    return Dataset(X, _default_names(g.p), truth=g, meta=meta)


def simulate(setting_sem: str, g: Graph, n: int, rng: Rng) -> Dataset:
    """Dispatch on the SEM tag used by experiment settings."""
    if setting_sem == "gumbel":
        return sample_linear_gumbel(g, n, SemSpec(kind="gumbel"), rng)
    if setting_sem == "gp":
        return sample_nonlinear_gp(g, n, SemSpec(kind="gp"), rng)
    raise ContractError(f"unknown SEM tag {setting_sem!r}")


# -- file loading -------------------------------------------------------------


def _parse_data_csv(path: Path):
    lines = path.read_text().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    names = [c.strip() for c in lines[0].split(",")]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(names):
            raise ParseError(f"{path}:{lineno}: expected {len(names)} cells, got {len(cells)}")
        row = []
        for colno, cell in enumerate(cells, start=1):
            try:
                row.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"{path}:{lineno}: non-numeric cell in column {colno}: {cell.strip()!r}"
                ) from None
        rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data rows after the header")
    return names, np.array(rows)


def load_truth_graph(path) -> Graph:
    """Ground-truth file: edge-list format or 0/1 adjacency CSV."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"truth file not found: {path}")
    text = path.read_text()
    head = text.lstrip()
    if head.startswith("p="):
        g = Graph.from_edgelist(text)
    else:
        g = Graph.from_adjacency_csv(text)
    if not g.undirected:
        return Graph(g.p, g.directed, frozenset(), GraphKind.DAG)
    return g


def load_dataset(data_path, truth_path=None) -> Dataset:
    """Dataset from a names-header CSV, with optional ground-truth graph."""
    data_path = Path(data_path)
    if not data_path.exists():
        raise LoadError(f"data file not found: {data_path}")
    names, X = _parse_data_csv(data_path)
    truth = None
    if truth_path is not None:
        truth = load_truth_graph(truth_path)
        if truth.p != X.shape[1]:
            raise LoadError(
                f"truth graph p={truth.p} does not match {X.shape[1]} data columns"
            )
    meta = {"data_path": str(data_path), "truth_path": str(truth_path) if truth_path else None}
    return Dataset(X, tuple(names), truth=truth, meta=meta)


def save_dataset(ds: Dataset, data_path, truth_path=None):
    """Write the data CSV (and the truth edge list when requested)."""
    data_path = Path(data_path)
    data_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(ds.names)]
    for row in ds.X:
        lines.append(",".join(repr(float(v)) for v in row))
    data_path.write_text("\n".join(lines) + "\n")
    if truth_path is not None:
        if ds.truth is None:
            raise ContractError("dataset has no truth graph to save")
        ds.truth.save(truth_path)


def standardize(ds: Dataset) -> Dataset:
    """Column-wise z-scoring; names and truth are preserved."""
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0)
    for j, s in enumerate(std):
        if s == 0.0:
            raise ContractError(f"column {ds.names[j]!r} has zero variance")
    X = (ds.X - mean) / std
    return replace(ds, X=X, meta={**ds.meta, "standardized": True})


# -- named real-data fixtures ---------------------------------------------------


def load_sachs(directory) -> Dataset:
    """Protein-signaling data: sachs.csv + sachs_truth.txt in `directory`.

    The logged-and-standardized release has 902 observations of 11
    phosphoprotein/phospholipid levels and a 17-edge consensus graph;
    anything else is rejected as the wrong files.
    """
    directory = Path(directory)
    ds = load_dataset(directory / "sachs.csv", directory / "sachs_truth.txt")
    if (ds.n, ds.p, len(ds.truth.directed)) != (902, 11, 17):
        raise LoadError(
            f"not the expected protein-signaling release: n={ds.n}, p={ds.p}, "
            f"|E|={len(ds.truth.directed)} (want 902, 11, 17)"
        )
    return ds


def load_syntren(directory, seed: int) -> Dataset:
    """One SynTReN expression replicate: syntren_seed<k>.csv (+ _truth.txt).

    Emitted by the external network simulator; this only loads the files.
    Each replicate has 500 samples of 20 genes.
    """
    directory = Path(directory)
    ds = load_dataset(
        directory / f"syntren_seed{seed}.csv",
        directory / f"syntren_seed{seed}_truth.txt",
    )
    if (ds.n, ds.p) != (500, 20):
        raise LoadError(
            f"not a SynTReN replicate: n={ds.n}, p={ds.p} (want 500, 20)"
        )
    return ds
