"""Imputation methods: mean, median, PMM, missForest-style forests, PPCA,
and NIPALS low-rank reconstruction.

Shared contract: observed cells pass through bit-identical, the returned
matrix has no missing cells, and a fixed seed reproduces the result
exactly. Only feature-role columns may contain missing cells; the class,
demographic, and driver columns must arrive complete (they may serve as
predictors, never as targets).
"""

from dataclasses import dataclass, field
from math import ceil

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.ensemble import RandomForestRegressor

from .errors import (
    ContractError,
    ConvergenceError,
    DegenerateColumnError,
    FitError,
)
from .pca import _fit_components
from .rng import derive_seed, forest_state, make_rng
from .table import DataMatrix, destandardize, standardize

SIGMA2_FLOOR = 1e-9


@dataclass(frozen=True)
class ImputationResult:
    """A completed matrix plus provenance.

    diagnostics is a small dict of per-method convergence records; heavy
    entries (per-sweep imputed values) exist so tests can pin the update
    semantics without private hooks.
    """

    completed: DataMatrix
    method: str
    seed: int
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ForestConfig:
    """Random-forest settings for the iterative imputer.

    mtry = None resolves to ceil(#predictors / 3), the regression
    convention. max_rounds caps the outer sweeps.
    """

    n_trees: int = 100
    mtry: int | None = None
    min_node: int = 5
    max_depth: int | None = None
    max_rounds: int = 10
    exclude_class: bool = False

    def __post_init__(self):
        if self.n_trees < 1:
            raise ContractError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.mtry is not None and self.mtry < 1:
            raise ContractError(f"mtry must be >= 1, got {self.mtry}")
        if self.max_rounds < 1:
            raise ContractError(f"max_rounds must be >= 1, got {self.max_rounds}")


@dataclass(frozen=True)
class PmmConfig:
    """Chained-equations PMM settings: m pooled imputations, donor pool
    size per match, sweeps per imputation, ridge stabilizer."""

    m: int = 15
    donors: int = 5
    cycles: int = 5
    ridge: float = 1e-5
    exclude_class: bool = False

    def __post_init__(self):
        if self.m < 1 or self.donors < 1 or self.cycles < 1:
            raise ContractError("m, donors, and cycles must all be >= 1")
        if self.ridge < 0:
            raise ContractError(f"ridge must be >= 0, got {self.ridge}")


# -- shared plumbing ---------------------------------------------------------


def _check_imputable(m: DataMatrix):
    """Missing cells allowed in feature columns only; returns their indices
    in ascending-missingness order (ties keep column order)."""
    missing_per_col = (~m.mask).sum(axis=0)
    targets = []
    for j, (name, role) in enumerate(zip(m.names, m.roles)):
        if missing_per_col[j] == 0:
            continue
        if role != "feature":
            raise ContractError(
                f"column {name!r} has role {role!r} but contains "
                f"{int(missing_per_col[j])} missing cells; only feature "
                "columns are imputed"
            )
        targets.append(j)
    targets.sort(key=lambda j: (missing_per_col[j], j))
    return targets


def _predictor_columns(m: DataMatrix, target: int, exclude_class: bool):
    cols = []
    for j, role in enumerate(m.roles):
        if j == target:
            continue
        if exclude_class and role == "class":
            continue
        cols.append(j)
    return cols


def _column_means(m: DataMatrix) -> np.ndarray:
    means = np.empty(m.n_cols)
    for j, name in enumerate(m.names):
        observed = m.values[m.mask[:, j], j]
        if observed.size == 0:
            raise DegenerateColumnError(f"column {name!r} has no observed values")
        means[j] = observed.mean()
    return means


def _mean_filled(m: DataMatrix) -> np.ndarray:
    work = np.array(m.values)
    means = _column_means(m)
    for j in range(m.n_cols):
        work[~m.mask[:, j], j] = means[j]
    return work


def _finish(m: DataMatrix, filled: np.ndarray, method, seed, diagnostics) -> ImputationResult:
    values = np.array(m.values)
    values[~m.mask] = filled[~m.mask]
    completed = m.with_values(values, np.ones_like(m.mask))
    return ImputationResult(completed, method, seed, diagnostics)


# -- simple baselines --------------------------------------------------------


def impute_mean(m: DataMatrix) -> ImputationResult:
    """Every missing cell becomes its column's observed mean."""
    _check_imputable(m)
    return _finish(m, _mean_filled(m), "mean", 0, {})


def impute_median(m: DataMatrix) -> ImputationResult:
    """Every missing cell becomes its column's observed median (midpoint
    of the two central order statistics for even counts)."""
    _check_imputable(m)
    work = np.array(m.values)
    for j, name in enumerate(m.names):
        hole = ~m.mask[:, j]
        if not hole.any():
            continue
        observed = m.values[m.mask[:, j], j]
        if observed.size == 0:
            raise DegenerateColumnError(f"column {name!r} has no observed values")
        work[hole, j] = np.median(observed)
    return _finish(m, work, "median", 0, {})


# -- predictive mean matching ------------------------------------------------


def _ridge_ols(X, y, ridge):
    """Least-squares fit with a proportional ridge on the Gram diagonal.

    Returns (beta_hat, V, rss, df) where V is the stabilized inverse Gram.
    """
    n, p = X.shape
    S = X.T @ X
    try:
        V = np.linalg.inv(S + np.diag(np.diag(S)) * ridge)
    except np.linalg.LinAlgError:
        raise FitError("design matrix singular even with ridge") from None
    beta_hat = V @ (X.T @ y)
    resid = y - X @ beta_hat
    rss = float(resid @ resid)
    df = n - p
    if df < 1:
        raise FitError(f"{n} observed rows cannot support {p} coefficients")
    return beta_hat, V, rss, df


def _posterior_draw(beta_hat, V, rss, df, rng):
    """Draw regression coefficients from their approximate posterior."""
    sigma2_dot = rss / rng.chisquare(df)
    try:
        L = np.linalg.cholesky((V + V.T) / 2.0)
    except np.linalg.LinAlgError:
        raise FitError("design matrix singular even with ridge") from None
    z = rng.standard_normal(beta_hat.size)
    return beta_hat + np.sqrt(sigma2_dot) * (L @ z)


def _pmm_column(work, m, j, predictors, cfg, rng):
    """One chained-equations visit: refit column j and rematch donors."""
    observed = m.mask[:, j]
    missing = ~observed
    X = np.column_stack([work[:, predictors], np.ones(work.shape[0])])
    y_obs = m.values[observed, j]
    if y_obs.size < cfg.donors:
        raise FitError(
            f"column {m.names[j]!r} has {y_obs.size} observed rows, "
            f"fewer than the donor pool size {cfg.donors}"
        )
    beta_hat, V, rss, df = _ridge_ols(X[observed], y_obs, cfg.ridge)
    beta_dot = _posterior_draw(beta_hat, V, rss, df, rng)
    yhat_obs = X[observed] @ beta_hat
    yhat_mis = X[missing] @ beta_dot
    # type-1 matching: each missing row copies one of the `donors` observed
    # rows whose beta_hat prediction is nearest its beta_dot prediction
    dist = np.abs(yhat_obs[None, :] - yhat_mis[:, None])
    pool = np.argsort(dist, axis=1, kind="stable")[:, : cfg.donors]
    picks = rng.integers(0, cfg.donors, size=pool.shape[0])
    work[missing, j] = y_obs[pool[np.arange(pool.shape[0]), picks]]


def impute_pmm(m: DataMatrix, cfg: PmmConfig = PmmConfig(), seed: int = 0) -> ImputationResult:
    """Predictive mean matching, pooled over cfg.m chained imputations.

    Each imputation starts from mean fill and runs cfg.cycles sweeps over
    the target columns in ascending-missingness order. Per visit the
    column is regressed on all other columns, coefficients are drawn from
    the posterior (chi-squared residual scaling), and each missing row
    copies the observed value of one of the nearest-prediction donors.
    The final matrix is the cell-wise mean of the m imputations, so
    single imputations stay inside the observed support while the pooled
    result averages over matching noise.
    """
    targets = _check_imputable(m)
    for j in targets:
        n_obs = int(m.mask[:, j].sum())
        need = len(_predictor_columns(m, j, cfg.exclude_class)) + 2
        if n_obs < need:
            raise FitError(
                f"column {m.names[j]!r} has {n_obs} observed rows, "
                f"needs at least {need}"
            )
    predictors = {j: _predictor_columns(m, j, cfg.exclude_class) for j in targets}
    hole = ~m.mask
    stack = []
    for imp in range(cfg.m):
        rng = make_rng(derive_seed(seed, "pmm", imp))
        work = _mean_filled(m)
        for _ in range(cfg.cycles):
            for j in targets:
                _pmm_column(work, m, j, predictors[j], cfg, rng)
        stack.append(work[hole])
    pooled = _mean_filled(m)
    pooled[hole] = np.mean(stack, axis=0)
    diagnostics = {
        "m": cfg.m,
        "cycles": cfg.cycles,
        "column_order": [m.names[j] for j in targets],
        "imputation_stack": stack,
    }
    return _finish(m, pooled, "pmm", seed, diagnostics)


# -- iterative random forest -------------------------------------------------


def impute_missforest(
    m: DataMatrix, cfg: ForestConfig = ForestConfig(), seed: int = 0
) -> ImputationResult:
    """Iterative random-forest imputation with the classic stopping rule.

    Start from mean fill. Each sweep refits a regression forest per target
    column (ascending missingness order) on the rows where that column is
    observed and re-predicts its missing rows. Sweeps continue until the
    normalized change in the imputed cells increases, and the values from
    the sweep before the increase are returned; max_rounds caps the loop,
    returning the last sweep.
    """
    targets = _check_imputable(m)
    work = _mean_filled(m)
    col_sd = np.std(work, axis=0)
    if np.all(col_sd == 0.0):
        raise DegenerateColumnError("every column is constant; nothing to learn")
    if not targets:
        return _finish(m, work, "missforest", seed, {"deltas": [], "rounds": 0})
    predictors = {j: _predictor_columns(m, j, cfg.exclude_class) for j in targets}
    hole = ~m.mask

    prev_vals = work[hole].copy()
    prev_delta = np.inf
    deltas = []
    sweep_values = [prev_vals.copy()]
    returned = 0
    for sweep in range(1, cfg.max_rounds + 1):
        for j in targets:
            cols = predictors[j]
            mtry = cfg.mtry if cfg.mtry is not None else ceil(len(cols) / 3)
            forest = RandomForestRegressor(
                n_estimators=cfg.n_trees,
                max_features=min(mtry, len(cols)),
                min_samples_leaf=cfg.min_node,
                max_depth=cfg.max_depth,
                bootstrap=True,
                n_jobs=1,
                random_state=forest_state(derive_seed(seed, "missforest", sweep, m.names[j])),
            )
            observed = m.mask[:, j]
            forest.fit(work[observed][:, cols], m.values[observed, j])
            work[~observed, j] = forest.predict(work[~observed][:, cols])
        new_vals = work[hole].copy()
        denom = float(new_vals @ new_vals)
        diff = new_vals - prev_vals
        delta = float(diff @ diff) / denom if denom > 0 else 0.0
        deltas.append(delta)
        sweep_values.append(new_vals.copy())
        if delta > prev_delta:
            break
        returned = sweep
        prev_delta = delta
        prev_vals = new_vals
    filled = _mean_filled(m)
    filled[hole] = sweep_values[returned]
    diagnostics = {
        "deltas": deltas,
        "rounds": len(deltas),
        "returned_sweep": returned,
        "sweep_values": sweep_values,
    }
    return _finish(m, filled, "missforest", seed, diagnostics)


# -- probabilistic PCA ---------------------------------------------------------


def _pattern_groups(mask: np.ndarray):
    """Group row indices by missingness pattern."""
    _, inverse = np.unique(mask, axis=0, return_inverse=True)
    groups = {}
    for i, g in enumerate(inverse):
        groups.setdefault(int(g), []).append(i)
    return [np.asarray(rows) for rows in groups.values()]


def _ppca_em(X0, observed, k, max_iter, tol, rng):
    """EM for x = W z + mu + eps with isotropic noise, missing cells
    marginalized out of the likelihood.

    The E-step computes posterior moments of the latent scores per
    missingness pattern; the M-step solves one (k+1)-sized regression per
    feature over the rows observing it, then the closed-form sigma^2.
    Joint exact maximization of the expected complete-data objective makes
    the observed log-likelihood non-decreasing at every step.
    """
    n, p = X0.shape
    groups = _pattern_groups(observed)
    n_observed = int(observed.sum())
    col_sq = np.array([float(X0[observed[:, j], j] @ X0[observed[:, j], j]) for j in range(p)])

    W = rng.standard_normal((p, k)) * 0.1
    mu = np.zeros(p)
    sigma2 = 1.0
    trace = []
    Ez_full = np.zeros((n, k))

    for it in range(max_iter):
        A = np.zeros((p, k + 1, k + 1))
        b = np.zeros((p, k + 1))
        loglik = 0.0
        for rows in groups:
            o = np.flatnonzero(observed[rows[0]])
            ng = rows.size
            if o.size == 0:
                Ez_full[rows] = 0.0
                continue
            Wo = W[o]
            Xo = X0[np.ix_(rows, o)] - mu[o]
            M = Wo.T @ Wo + sigma2 * np.eye(k)
            Minv = np.linalg.inv(M)
            Ez = Xo @ (Wo @ Minv)
            Cz = sigma2 * Minv
            Ez_full[rows] = Ez

            # observed-data log-likelihood of this pattern
            cov = Wo @ Wo.T + sigma2 * np.eye(o.size)
            chol = cho_factor(cov, lower=True)
            logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
            quad = float(np.sum(Xo * cho_solve(chol, Xo.T).T))
            loglik -= 0.5 * (ng * (o.size * np.log(2.0 * np.pi) + logdet) + quad)

            szz = Ez.T @ Ez + ng * Cz
            sz = Ez.sum(axis=0)
            block = np.empty((k + 1, k + 1))
            block[:k, :k] = szz
            block[:k, k] = sz
            block[k, :k] = sz
            block[k, k] = ng
            xz = X0[np.ix_(rows, o)].T @ Ez
            xs = X0[np.ix_(rows, o)].sum(axis=0)
            A[o] += block
            b[o, :k] += xz
            b[o, k] += xs
        trace.append(loglik)
        if len(trace) > 1:
            change = abs(trace[-1] - trace[-2]) / (abs(trace[-2]) + 1e-12)
            if change < tol:
                break

        resid = 0.0
        for j in range(p):
            try:
                theta = np.linalg.solve(A[j], b[j])
            except np.linalg.LinAlgError:
                raise FitError(
                    f"PPCA M-step: feature {j} is observed in too few rows "
                    "to identify its loadings"
                ) from None
            W[j] = theta[:k]
            mu[j] = theta[k]
            resid += col_sq[j] - float(theta @ b[j])
        sigma2 = max(resid / n_observed, SIGMA2_FLOOR)
    else:
        raise ConvergenceError(
            f"PPCA EM did not converge in {max_iter} iterations",
            trace=trace,
        )
    return W, mu, sigma2, Ez_full, trace


def impute_ppca(
    m: DataMatrix,
    k: int = 3,
    max_iter: int = 1000,
    tol: float = 1e-6,
    seed: int = 0,
) -> ImputationResult:
    """Probabilistic PCA imputation: EM fit, posterior-mean reconstruction.

    The matrix is standardized internally over observed cells (the latent
    model is fit on that scale) and the reconstruction is mapped back.
    diagnostics carry the observed log-likelihood trace, which is
    non-decreasing by construction.
    """
    if not 1 <= k < m.n_cols:
        raise ContractError(f"k must be in 1..{m.n_cols - 1}, got {k}")
    _check_imputable(m)
    std = standardize(m)
    X0 = np.where(std.mask, std.values, 0.0)
    rng = make_rng(derive_seed(seed, "ppca"))
    W, mu, sigma2, Ez, trace = _ppca_em(X0, std.mask, k, max_iter, tol, rng)
    recon_std = Ez @ W.T + mu
    recon = destandardize(recon_std, m)
    filled = np.array(m.values)
    filled[~m.mask] = recon[~m.mask]
    diagnostics = {
        "k": k,
        "iterations": len(trace),
        "loglik_trace": trace,
        "sigma2": sigma2,
    }
    return _finish(m, filled, "ppca", seed, diagnostics)


# -- NIPALS reconstruction -----------------------------------------------------


def impute_nipals(
    m: DataMatrix,
    k: int = 2,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> ImputationResult:
    """Fill missing cells with the k-component NIPALS reconstruction.

    Components are fit on the standardized matrix; missing cells take
    sum_c t_ic p_jc there and are mapped back to the original scale.
    k = 0 degenerates to mean imputation (the empty reconstruction).

    Defaults are more conservative than the PCA engine's: score changes
    below 1e-6 move reconstructions far below the noise scale, the
    masked-data iteration contracts much more slowly than the complete
    one, and components past the second are rarely stable at the
    missingness rates this tool targets, often circling their
    tolerance forever. Pass k explicitly to dig deeper anyway.
    """
    if k < 0 or k > m.n_cols:
        raise ContractError(f"k must be in 0..{m.n_cols}, got {k}")
    _check_imputable(m)
    diagnostics = {"k": k}
    if k == 0:
        return _finish(m, _mean_filled(m), "nipals", 0, diagnostics)
    std = standardize(m)
    X0 = np.where(std.mask, std.values, 0.0)
    T, P, drops, ss_total, iterations = _fit_components(
        X0, std.mask, k, tol, max_iter
    )
    recon = destandardize(T @ P.T, m)
    filled = np.array(m.values)
    filled[~m.mask] = recon[~m.mask]
    diagnostics["iterations"] = iterations
    diagnostics["explained"] = (drops / ss_total).tolist() if ss_total else []
    return _finish(m, filled, "nipals", 0, diagnostics)


IMPUTERS = ("mean", "median", "pmm", "missforest", "ppca", "nipals")
