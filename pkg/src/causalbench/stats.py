"""Statistical primitives: partial-correlation CI test, HSIC independence
test, kernel ridge regression, and the Gaussian BIC local score."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericalError
from .rng import Rng, derive_seed
from .sem import Dataset


@dataclass(frozen=True)
class CiTestResult:
    statistic: float
    p_value: float
    independent: bool | None = None  # p >= alpha when an alpha was supplied


@dataclass(frozen=True)
class ScoreValue:
    value: float
    penalty_discount: float
    dof: int


def normal_sf(x: float) -> float:
    """Upper tail of the standard normal."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x), series + continued fraction."""
    if a <= 0:
        raise ContractError("gamma shape must be positive")
    if x < 0:
        raise ContractError("gamma argument must be nonnegative")
    if x == 0.0:
        return 0.0
    log_prefix = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        # series representation of P
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(1000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-15:
                break
        return min(1.0, total * math.exp(log_prefix))
    # Lentz continued fraction for Q, then P = 1 - Q
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    q = math.exp(log_prefix) * h
    return max(0.0, 1.0 - q)


def gamma_sf(x: float, shape: float, scale: float) -> float:
    """Upper tail of Gamma(shape, scale)."""
    return max(0.0, min(1.0, 1.0 - _gamma_p(shape, x / scale)))


# -- Fisher-z partial correlation test -----------------------------------------


def fisher_z_test(ds: Dataset, j: int, k: int, z=(), alpha: float | None = None) -> CiTestResult:
    """Test X_j _||_ X_k given X_Z via the Fisher z-transform.

    The partial correlation comes from inverting the correlation submatrix
    of the involved columns; the statistic is sqrt(n - |Z| - 3) |atanh(r)|.
    """
    z = sorted(set(int(v) for v in z))
    if j == k or j in z or k in z:
        raise ContractError("test endpoints must be distinct and outside Z")
    n = ds.n
    if n <= len(z) + 3:
        raise ContractError(f"need n > |Z| + 3 (n={n}, |Z|={len(z)})")
    # canonical column order makes the result exactly symmetric in (j, k)
    a, b = min(j, k), max(j, k)
    sub = ds.X[:, [a, b] + z]
    corr = np.corrcoef(sub, rowvar=False)
    if np.any(~np.isfinite(corr)):
        raise NumericalError("constant column in the test variables")
    if z:
        try:
            precision = np.linalg.inv(corr)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"collinear conditioning set {z} for pair ({j},{k})") from exc
        denom = math.sqrt(abs(precision[0, 0] * precision[1, 1]))
        if denom == 0 or not np.isfinite(denom):
            raise NumericalError(f"degenerate precision matrix for pair ({j},{k})")
        r = float(-precision[0, 1] / denom)
    else:
        r = float(corr[0, 1])
    r = max(-1.0 + 1e-12, min(1.0 - 1e-12, r))
    statistic = math.sqrt(n - len(z) - 3) * abs(math.atanh(r))
    p_value = 2.0 * normal_sf(statistic)
    return CiTestResult(
        statistic=statistic,
        p_value=p_value,
        independent=None if alpha is None else p_value >= alpha,
    )


# -- HSIC ------------------------------------------------------------------------


def median_bandwidth(x: np.ndarray) -> float:
    """RBF width by the median heuristic: sqrt(median of nonzero d^2 / 2)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    upper = d2[np.triu_indices(len(x), k=1)]
    upper = upper[upper > 0]
    if len(upper) == 0:
        raise ContractError("median bandwidth undefined for a constant vector")
    return math.sqrt(0.5 * float(np.median(upper)))


def rbf_kernel(x: np.ndarray, width: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / (2.0 * width * width))


def hsic_statistic(x: np.ndarray, y: np.ndarray):
    """Biased V-statistic n*HSIC_b with median-heuristic RBF kernels.

    Returns (statistic, K, L) so the null approximations can reuse the
    Gram matrices.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n = len(x)
    if len(y) != n:
        raise ContractError("hsic inputs must have equal length")
    k = rbf_kernel(x, median_bandwidth(x))
    l = rbf_kernel(y, median_bandwidth(y))
    kc = k - k.mean(axis=0, keepdims=True) - k.mean(axis=1, keepdims=True) + k.mean()
    lc = l - l.mean(axis=0, keepdims=True) - l.mean(axis=1, keepdims=True) + l.mean()
    statistic = float(np.sum(kc * lc)) / n
    return statistic, k, l, kc, lc


def hsic_test(
    x: np.ndarray,
    y: np.ndarray,
    alpha: float = 0.05,
    method: str = "gamma",
    permutations: int = 200,
) -> CiTestResult:
    """HSIC independence test; p-value via gamma approximation of the null.

    method="permutation" replaces the gamma null with a permutation null
    (slower; used to calibrate the approximation).
    """
    n = len(np.asarray(x).ravel())
    if n < 20:
        raise ContractError(f"hsic_test needs n >= 20 (got {n})")
    statistic, k, l, kc, lc = hsic_statistic(x, y)
    if method == "gamma":
        var_hsic = (kc * lc / 6.0) ** 2
        var_hsic = (float(var_hsic.sum()) - float(np.trace(var_hsic))) / n / (n - 1)
        var_hsic = var_hsic * 72.0 * (n - 4) * (n - 5) / n / (n - 1) / (n - 2) / (n - 3)
        k_off = k - np.diag(np.diag(k))
        l_off = l - np.diag(np.diag(l))
        mu_x = float(k_off.sum()) / n / (n - 1)
        mu_y = float(l_off.sum()) / n / (n - 1)
        mean_hsic = (1.0 + mu_x * mu_y - mu_x - mu_y) / n
        if var_hsic <= 0 or mean_hsic <= 0:
            p_value = 1.0
        else:
            shape = mean_hsic**2 / var_hsic
            scale = var_hsic * n / mean_hsic
            p_value = gamma_sf(statistic, shape, scale)
    elif method == "permutation":
        rng = Rng(derive_seed("hsic-perm", n))
        exceed = 0
        y_arr = np.asarray(y, dtype=np.float64).ravel()
        for _ in range(permutations):
            perm = rng.permutation(n)
            stat_perm, *_ = hsic_statistic(x, y_arr[perm])
            if stat_perm >= statistic:
                exceed += 1
        p_value = (exceed + 1) / (permutations + 1)
    else:
        raise ContractError(f"unknown hsic method {method!r}")
    return CiTestResult(statistic=statistic, p_value=p_value, independent=p_value >= alpha)


# -- kernel ridge regression -----------------------------------------------------


@dataclass
class KernelRegressor:
    x_train: np.ndarray
    coef: np.ndarray
    width: float
    residuals: np.ndarray

    def __call__(self, x_new: np.ndarray) -> np.ndarray:
        x_new = np.asarray(x_new, dtype=np.float64)
        if x_new.ndim == 1:
            x_new = x_new[:, None]
        sq_tr = np.sum(self.x_train * self.x_train, axis=1)
        sq_new = np.sum(x_new * x_new, axis=1)
        d2 = sq_new[:, None] + sq_tr[None, :] - 2.0 * (x_new @ self.x_train.T)
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-d2 / (2.0 * self.width * self.width)) @ self.coef


def kernel_regress(x_in: np.ndarray, y: np.ndarray, ridge: float | None = None) -> KernelRegressor:
    """RBF kernel ridge regression with median-heuristic bandwidth.

    ridge defaults to 1e-3 * n so the regularization tracks sample size.
    Returns the fitted regressor, which carries the in-sample residuals.
    """
    x_in = np.asarray(x_in, dtype=np.float64)
    if x_in.ndim == 1:
        x_in = x_in[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    n = x_in.shape[0]
    if n < 10:
        raise ContractError(f"kernel_regress needs n >= 10 (got {n})")
    if len(y) != n:
        raise ContractError("x and y lengths differ")
    if ridge is None:
        ridge = 1e-3 * n
    if ridge <= 0:
        raise ContractError("ridge must be positive")
    width = median_bandwidth(x_in)
    gram = rbf_kernel(x_in, width)
    jitter = 0.0
    for _ in range(6):
        try:
            chol = np.linalg.cholesky(gram + (ridge + jitter) * np.eye(n))
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-10 * n)
    else:
        raise NumericalError("Gram matrix factorization failed despite jitter escalation")
    coef = np.linalg.solve(chol.T, np.linalg.solve(chol, y))
    fitted = gram @ coef
    return KernelRegressor(x_train=x_in, coef=coef, width=width, residuals=y - fitted)


# -- Gaussian BIC local score ------------------------------------------------------


def bic_score(ds: Dataset, node: int, parents, penalty_discount: float) -> ScoreValue:
    """Local score -n ln(RSS/n) - penalty_discount (|pa|+1) ln n.

    RSS is from the least-squares regression of the node on its parents
    with an intercept; the graph score is the sum of local scores.
    """
    parents = sorted(set(int(v) for v in parents))
    if node in parents:
        raise ContractError("a node cannot be its own parent")
    n = ds.n
    if n <= len(parents) + 1:
        raise ContractError(f"need n > |parents| + 1 (n={n}, |parents|={len(parents)})")
    y = ds.X[:, node]
    if parents:
        design = np.column_stack([np.ones(n), ds.X[:, parents]])
        coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank < design.shape[1]:
            raise NumericalError(f"singular design for node {node} with parents {parents}")
        resid = y - design @ coef
        rss = float(resid @ resid)
    else:
        resid = y - y.mean()
        rss = float(resid @ resid)
    rss = max(rss, 1e-300)
    value = -n * math.log(rss / n) - penalty_discount * (len(parents) + 1) * math.log(n)
    return ScoreValue(value=value, penalty_discount=penalty_discount, dof=len(parents) + 1)
