"""Shared numerical kernels.

Hand-rolled on purpose: the matrix exponential, the box-projected L-BFGS
inner optimizer, the augmented-Lagrangian loop, FastICA, and a one-hidden-
layer MLP with manual backprop. numpy supplies only dense linear algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericalError
from .rng import Rng, derive_seed

# -- matrix exponential and the acyclicity function ---------------------------

_EXPM_TAYLOR_ORDER = 20  # with the scaled norm <= 0.5 the truncation error
# is below 0.5^21/21! ~ 1e-26, i.e. beyond double precision


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring over a truncated series."""
    a = np.asarray(a, dtype=np.float64)
    p = a.shape[0]
    norm = float(np.max(np.sum(np.abs(a), axis=1))) if p else 0.0
    squarings = max(0, int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0)
    t = a / (2.0**squarings)
    result = np.eye(p)
    term = np.eye(p)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, _EXPM_TAYLOR_ORDER + 1):
            term = term @ t / k
            result += term
        for _ in range(squarings):
            result = result @ result
    return result  # callers check finiteness; overflow surfaces as inf/nan


def acyclicity_h(w: np.ndarray):
    """h(W) = tr(exp(W o W)) - p and its gradient exp(W o W)^T o 2W.

    Zero exactly when the weighted graph is acyclic; smooth everywhere.
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ContractError("acyclicity_h requires finite weights")
    e = expm(w * w)
    if not np.all(np.isfinite(e)):
        raise NumericalError(
            "matrix exponential overflowed; clip the weight magnitudes before calling"
        )
    value = float(np.trace(e)) - w.shape[0]
    gradient = e.T * (2.0 * w)
    return value, gradient


# -- box-projected limited-memory quasi-Newton --------------------------------


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def _project(x, lower, upper):
    if lower is None and upper is None:
        return x
    return np.clip(x, lower, upper)


def lbfgs_box(
    fun,
    x0: np.ndarray,
    lower=None,
    upper=None,
    max_iter: int = 100,
    memory: int = 10,
    armijo_c: float = 1e-4,
    pg_tol: float = 1e-5,
    f_tol: float = 1e-9,
) -> LbfgsResult:
    """Minimize fun(x) -> (value, gradient) over a box via L-BFGS.

    Search directions come from the standard two-loop recursion; steps are
    found by backtracking (Armijo) on the projected path, which keeps the
    iterates feasible for simple nonnegativity bounds.
    """
    x = _project(np.array(x0, dtype=np.float64), lower, upper)
    f, g = fun(x)
    if not np.isfinite(f):
        raise NumericalError("objective not finite at the initial point")
    evals = 1
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    it = 0
    converged = False

    def line_search(d, f, g):
        nonlocal evals
        step = 1.0
        slope = float(g @ d)
        for _ in range(40):
            x_new = _project(x + step * d, lower, upper)
            f_new, g_new = fun(x_new)
            evals += 1
            if np.isfinite(f_new) and f_new <= f + armijo_c * float(g @ (x_new - x)):
                return x_new, f_new, g_new
            # quadratic-interpolation backtrack, clamped to [step/10, step/2]
            denom = f_new - f - step * slope
            if np.isfinite(denom) and denom > 0:
                step = min(0.5 * step, max(0.1 * step, -0.5 * slope * step * step / denom))
            else:
                step *= 0.5
        return None

    for it in range(1, max_iter + 1):
        steepest = _project(x - g, lower, upper) - x  # feasible steepest descent
        if np.max(np.abs(steepest)) <= pg_tol:
            converged = True
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = r * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q *= gamma
        else:
            q *= min(1.0, 1.0 / max(1e-12, float(np.max(np.abs(g)))))
        for (s, y, r), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = r * (y @ q)
            q += (a - b) * s
        d = -q
        # drop components that push into an active bound, where movement is
        # impossible; without this the projected direction can turn ascent
        if lower is not None:
            d[(x <= lower) & (d < 0)] = 0.0
        if upper is not None:
            d[(x >= upper) & (d > 0)] = 0.0
        if d @ g >= -1e-12 * float(np.linalg.norm(d)) * float(np.linalg.norm(g)):
            d = steepest
        found = line_search(d, f, g)
        if found is None and d is not steepest:
            found = line_search(steepest, f, g)
        if found is None:
            break
        x_new, f_new, g_new = found
        if not np.any(x_new != x):
            break
        if f - f_new <= f_tol * max(1.0, abs(f)):
            x, f, g = x_new, f_new, g_new
            converged = True
            break
        s_vec = x_new - x
        y_vec = g_new - g
        sy = float(s_vec @ y_vec)
        if sy > 1e-10 * float(np.linalg.norm(s_vec)) * float(np.linalg.norm(y_vec)):
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        x, f, g = x_new, f_new, g_new
    return LbfgsResult(x=x, fun=f, iterations=it, evaluations=evals, converged=converged)


# -- augmented Lagrangian ------------------------------------------------------


@dataclass
class AugLagConfig:
    h_tol: float = 1e-8
    rho_max: float = 1e16
    inner_max_iter: int = 100
    outer_max: int = 100
    memory: int = 10
    armijo_c: float = 1e-4
    pg_tol: float = 1e-5
    f_tol: float = 1e-9
    rho_init: float = 1.0
    rho_growth: float = 10.0
    progress_fraction: float = 0.25  # required constraint shrink per dual update
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None


@dataclass
class AugLagResult:
    theta: np.ndarray
    h: float
    rho: float
    dual: float
    outer_iterations: int
    inner_iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def augmented_lagrangian_minimize(objective, constraint, theta0, config: AugLagConfig):
    """Minimize loss(theta) subject to h(theta) = 0.

    objective(theta) -> (loss, grad); constraint(theta) -> (h, grad_h).
    Each round inner-minimizes loss + rho/2 h^2 + dual*h; if the constraint
    did not shrink to a quarter of its previous value the penalty grows
    tenfold, otherwise the dual estimate absorbs rho*h. Stops at
    h <= h_tol or once rho exceeds rho_max.
    """
    theta = np.array(theta0, dtype=np.float64)
    rho = config.rho_init
    dual = 0.0
    h_prev = math.inf
    h_val = math.inf
    trace = []
    inner_total = 0
    outer = 0
    for outer in range(1, config.outer_max + 1):

        def penalized(t, _rho=rho, _dual=dual):
            # a non-finite trial value (overflowing matrix exponential,
            # runaway weights) is returned as +inf so the line search
            # backtracks instead of aborting the whole solve
            try:
                loss, g_loss = objective(t)
                h, g_h = constraint(t)
            except NumericalError:
                return math.inf, np.zeros_like(t)
            value = loss + 0.5 * _rho * h * h + _dual * h
            if not np.isfinite(value):
                return math.inf, np.zeros_like(t)
            grad = g_loss + (_rho * h + _dual) * g_h
            return value, grad

        try:
            inner = lbfgs_box(
                penalized,
                theta,
                lower=config.lower,
                upper=config.upper,
                max_iter=config.inner_max_iter,
                memory=config.memory,
                armijo_c=config.armijo_c,
                pg_tol=config.pg_tol,
                f_tol=config.f_tol,
            )
        except NumericalError as exc:
            raise NumericalError(
                f"inner optimizer diverged at outer round {outer} (rho={rho:.3g}): "
                f"{exc}; trace so far: {trace}"
            ) from exc
        theta = inner.x
        inner_total += inner.iterations
        h_val = constraint(theta)[0]
        trace.append((outer, rho, h_val, inner.iterations))
        if h_val > config.progress_fraction * h_prev:
            rho *= config.rho_growth
        else:
            dual += rho * h_val
            h_prev = h_val
        if h_val <= config.h_tol or rho > config.rho_max:
            break
    return AugLagResult(
        theta=theta,
        h=h_val,
        rho=rho,
        dual=dual,
        outer_iterations=outer,
        inner_iterations=inner_total,
        converged=h_val <= config.h_tol,
        trace=trace,
    )


# -- assignment problem --------------------------------------------------------


def minimum_cost_assignment(cost: np.ndarray) -> list[int]:
    """Row index assigned to each column, minimizing total cost.

    Shortest-augmenting-path Hungarian method with potentials, O(n^3);
    plenty fast for the p <= 50 matrices this package meets.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ContractError("assignment needs a square cost matrix")
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    match = [0] * (n + 1)  # match[j] = row occupying column j, 1-based
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    return [match[j] - 1 for j in range(1, n + 1)]


# -- FastICA -------------------------------------------------------------------


@dataclass(frozen=True)
class IcaResult:
    unmixing: np.ndarray  # original-space unmixing: sources = Xc @ unmixing.T
    iterations_used: int
    converged: bool
    unmixing_whitened: np.ndarray  # orthonormal rows in whitened space


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(w @ w.T)
    vals = np.maximum(vals, 1e-15)
    return (vecs * (1.0 / np.sqrt(vals))) @ vecs.T @ w


def fast_ica(X: np.ndarray, max_iter: int = 200, tol: float = 1e-4) -> IcaResult:
    """Symmetric fixed-point ICA with the log-cosh contrast g(u) = tanh(u).

    Whitens via eigendecomposition of the covariance first. Non-convergence
    within max_iter is reported, not raised: downstream causal ordering can
    still proceed with the last iterate.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if n <= p:
        raise ContractError(f"fast_ica needs n > p (got n={n}, p={p})")
    xc = X - X.mean(axis=0)
    cov = (xc.T @ xc) / n
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] <= 1e-12 * vals[-1]:
        raise NumericalError("rank-deficient covariance; remove collinear columns")
    whiten = (vecs * (1.0 / np.sqrt(vals))).T  # rows scale eigen-directions
    z = xc @ whiten.T

    init_rng = Rng(derive_seed("fast-ica-init"))
    w = _sym_decorrelate(np.array(init_rng.normal(p * p)).reshape(p, p))
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        wz = z @ w.T
        gz = np.tanh(wz)
        g_prime = (1.0 - gz * gz).mean(axis=0)
        w_new = _sym_decorrelate((gz.T @ z) / n - g_prime[:, None] * w)
        delta = float(np.max(np.abs(np.abs(np.sum(w_new * w, axis=1)) - 1.0)))
        w = w_new
        if delta < tol:
            converged = True
            break
    return IcaResult(
        unmixing=w @ whiten,
        iterations_used=iterations,
        converged=converged,
        unmixing_whitened=w,
    )


# -- one-hidden-layer MLP with manual backprop ---------------------------------


def sigmoid(u: np.ndarray) -> np.ndarray:
    # exp overflow for very negative u saturates to inf and divides to 0,
    # which is the correct limit, so the warning is suppressed rather than
    # paying for branch masking
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-u))


@dataclass
class MlpModel:
    """Per-target network: p inputs -> h sigmoid units -> 1 output."""

    w1: np.ndarray  # (p, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h,)
    b2: float

    @staticmethod
    def init_random(p: int, hidden: int, rng: Rng, scale: float = 0.1) -> "MlpModel":
        return MlpModel(
            w1=np.array(rng.uniform(p * hidden, -scale, scale)).reshape(p, hidden),
            b1=np.array(rng.uniform(hidden, -scale, scale)),
            w2=np.array(rng.uniform(hidden, -scale, scale)),
            b2=float(rng.uniform(1, -scale, scale)[0]),
        )

    def predict(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(X @ self.w1 + self.b1) @ self.w2 + self.b2


def mlp_forward_backward(model: MlpModel, X: np.ndarray, target: np.ndarray):
    """Squared loss (1/2n)||target - MLP(X)||^2 with exact gradients.

    Returns (loss, MlpModel-shaped gradients).
    """
    X = np.asarray(X, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    n = X.shape[0]
    if X.shape[1] != model.w1.shape[0] or target.shape != (n,):
        raise ContractError("inconsistent shapes in mlp_forward_backward")
    hidden = sigmoid(X @ model.w1 + model.b1)
    pred = hidden @ model.w2 + model.b2
    resid = pred - target
    loss = 0.5 / n * float(resid @ resid)
    d_pred = resid / n
    g_w2 = hidden.T @ d_pred
    g_b2 = float(d_pred.sum())
    d_hidden = np.outer(d_pred, model.w2) * hidden * (1.0 - hidden)
    g_w1 = X.T @ d_hidden
    g_b1 = d_hidden.sum(axis=0)
    return loss, MlpModel(w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2)
