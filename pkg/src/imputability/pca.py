"""PCA two ways: eigendecomposition of the correlation matrix on complete
data, and NIPALS alternating least squares on data with missing cells.

NIPALS extracts one component at a time. Scores and loadings are updated
by regressions whose sums run over observed cells only (missing cells
carry no weight), the loading is normalized, and on convergence the
component's rank-1 contribution is subtracted from the observed cells
before the next component is extracted. On complete data the fixed points
are exactly the correlation-matrix eigenvectors, which is what the tests
pin.

Sign convention everywhere: the largest-magnitude entry of each loading
column is positive. Component order is descending eigenvalue (eigen) or
extraction order (NIPALS); equal eigenvalues keep the solver's order,
which is deterministic for identical input.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ConvergenceError, DegenerateColumnError
from .rng import make_rng
from .table import DataMatrix, correlation_matrix, standardize

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 500

EXPLAINED_SLACK = 1e-8
RESIDUAL_FLOOR = 1e-12
# ridge on the score refit during cross-validated scoring; a full row has
# denominator 1 (unit loading), so this shifts well-observed rows by ~5%
CV_DAMP = 0.05


@dataclass(frozen=True)
class NipalsConfig:
    """k = 0 means auto: extract components up to the working rank."""

    k: int = 0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ContractError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ContractError(f"max_iter must be >= 1, got {self.max_iter}")


class PcaModel:
    """Loadings (p x k, unit columns), scores (n x k), explained shares.

    ``explained[c]`` is the share of the total observed sum of squares
    removed by component c; on complete standardized data it equals the
    eigenvalue share. Shares are non-increasing by construction of both
    fitting routines, and the constructor enforces it.
    """

    def __init__(self, loadings, scores, explained, names, method, iterations=()):
        loadings = np.asarray(loadings, dtype=float)
        scores = np.asarray(scores, dtype=float)
        explained = np.asarray(explained, dtype=float)
        names = tuple(names)
        if loadings.ndim != 2 or scores.ndim != 2:
            raise ContractError("loadings and scores must be 2-d")
        k = loadings.shape[1]
        if scores.shape[1] != k or explained.shape != (k,):
            raise ContractError("component counts disagree across fields")
        if len(names) != loadings.shape[0]:
            raise ContractError("need one name per loading row")
        norms = np.linalg.norm(loadings, axis=0)
        if k and not np.allclose(norms, 1.0, atol=1e-8):
            raise ContractError(f"loading columns must be unit norm, got {norms}")
        if np.any(explained < -EXPLAINED_SLACK) or np.any(explained > 1 + EXPLAINED_SLACK):
            raise ContractError(f"explained shares outside [0, 1]: {explained}")
        if np.any(np.diff(explained) > EXPLAINED_SLACK):
            raise ContractError(f"explained shares must be non-increasing: {explained}")
        loadings.setflags(write=False)
        scores.setflags(write=False)
        explained.setflags(write=False)
        self.loadings = loadings
        self.scores = scores
        self.explained = np.clip(explained, 0.0, 1.0)
        self.names = names
        self.method = method
        self.iterations = tuple(iterations)

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    def loading_map(self, component: int = 0) -> dict:
        """Column name -> loading on the given component (0 = PC1)."""
        return {n: float(v) for n, v in zip(self.names, self.loadings[:, component])}

    def __repr__(self):
        return f"PcaModel({self.method}, k={self.k}, p={len(self.names)})"


def _orient(loadings: np.ndarray, scores: np.ndarray) -> None:
    """Flip signs so each loading column's largest-|entry| is positive."""
    for c in range(loadings.shape[1]):
        j = int(np.argmax(np.abs(loadings[:, c])))
        if loadings[j, c] < 0:
            loadings[:, c] = -loadings[:, c]
            scores[:, c] = -scores[:, c]


def pca_correlation(m: DataMatrix, k: int | None = None) -> PcaModel:
    """Classical PCA by eigendecomposition of the correlation matrix.

    Requires complete data. Components are ordered by descending
    eigenvalue; explained shares are eigenvalues over the trace.
    """
    if not m.mask.all():
        raise ContractError(
            f"correlation-method PCA needs complete data, found "
            f"{int((~m.mask).sum())} missing cells"
        )
    corr = correlation_matrix(m)
    eigvals, eigvecs = np.linalg.eigh(corr)
    order = np.argsort(-eigvals, kind="stable")
    eigvals = np.clip(eigvals[order], 0.0, None)
    loadings = eigvecs[:, order]
    if k is not None:
        if not 1 <= k <= m.n_cols:
            raise ContractError(f"k must be in 1..{m.n_cols}, got {k}")
        eigvals = eigvals[:k]
        loadings = loadings[:, :k]
    z = standardize(m).values
    scores = z @ loadings
    loadings = np.array(loadings)
    scores = np.array(scores)
    _orient(loadings, scores)
    explained = eigvals / m.n_cols
    return PcaModel(loadings, scores, explained, m.names, method="eigen")


def _init_score(X: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Start from the column with the largest observed sample variance."""
    counts = observed.sum(axis=0)
    sums = X.sum(axis=0)
    sq = (X * X).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        var = (sq - sums * sums / np.maximum(counts, 1)) / np.maximum(counts - 1, 1)
    var = np.where(counts >= 2, var, -np.inf)
    return X[:, int(np.argmax(var))].copy()


def _fit_components(X0, observed, k, tol, max_iter, strict=True, damp=0.0):
    """Sequential NIPALS extraction on a working copy.

    X0 holds zeros at unobserved cells. Returns (T, P, drops, ss_total,
    iterations); fewer than k components come back when the observed
    residual is exhausted.

    strict=False keeps the last iterate of a component that runs out of
    iterations instead of raising. Each alternating update is a least
    squares solve, so the observed residual never increases and the
    truncated component is still a usable approximation; only callers
    that score reconstructions rather than report loadings may opt in.

    damp > 0 adds a ridge to the score refit. A row whose observed cells
    carry almost no loading mass has an under-determined score: the plain
    update divides by nearly zero and the reconstruction explodes at that
    row's unobserved cells. Damping shrinks exactly those rows toward
    zero while shifting well-observed rows by about damp. Reserved for
    reconstruction scoring; reported loadings always use the plain
    update, so damp=0 leaves the arithmetic bit for bit unchanged.
    """
    X = np.array(X0, dtype=float)
    n, p = X.shape
    ss_total = float((X * X).sum())
    T, P, drops, iterations = [], [], [], []
    ss_prev = ss_total
    for c in range(k):
        if ss_prev <= ss_total * RESIDUAL_FLOOR:
            break
        t = _init_score(X, observed)
        if not np.any(t):
            break
        delta = np.inf
        for it in range(1, max_iter + 1):
            denom_p = (t * t) @ observed
            pvec = np.where(denom_p > 0.0, (t @ X) / np.where(denom_p > 0.0, denom_p, 1.0), 0.0)
            pnorm = np.linalg.norm(pvec)
            if pnorm == 0.0:
                raise DegenerateColumnError(
                    f"NIPALS component {c + 1}: loading collapsed to zero"
                )
            pvec /= pnorm
            denom_t = observed @ (pvec * pvec)
            if damp > 0.0:
                t_new = (X @ pvec) / (denom_t + damp)
            else:
                t_new = np.where(denom_t > 0.0, (X @ pvec) / np.where(denom_t > 0.0, denom_t, 1.0), 0.0)
            tnorm = np.linalg.norm(t_new)
            if tnorm == 0.0:
                t = t_new
                delta = 0.0
                break
            delta = float(np.linalg.norm(t_new - t) / tnorm)
            t = t_new
            if delta < tol:
                break
        else:
            if strict:
                raise ConvergenceError(
                    f"NIPALS component {c + 1} did not converge in {max_iter} "
                    f"iterations (last relative score change {delta:.3e})",
                    component=c + 1,
                    delta=delta,
                )
        iterations.append(it)
        X -= np.outer(t, pvec)
        X[~observed] = 0.0
        ss_now = float((X * X).sum())
        drops.append(max(ss_prev - ss_now, 0.0))
        ss_prev = ss_now
        T.append(t)
        P.append(pvec)
    T = np.column_stack(T) if T else np.zeros((n, 0))
    P = np.column_stack(P) if P else np.zeros((p, 0))
    return T, P, np.asarray(drops), ss_total, iterations


def nipals(m: DataMatrix, cfg: NipalsConfig = NipalsConfig()) -> PcaModel:
    """NIPALS PCA of the correlation structure, tolerating missing cells.

    Columns are standardized over their observed cells first, so on
    complete data the components coincide with pca_correlation's up to
    iteration tolerance. Every row and every column must have at least
    one observed cell (and enough variation to standardize).
    """
    rows_empty = ~m.mask.any(axis=1)
    if rows_empty.any():
        raise ContractError(f"row {int(np.argmax(rows_empty))} has no observed cells")
    cols_empty = ~m.mask.any(axis=0)
    if cols_empty.any():
        raise ContractError(
            f"column {m.names[int(np.argmax(cols_empty))]!r} has no observed cells"
        )
    k = cfg.k if cfg.k else min(m.n_rows - 1, m.n_cols)
    if not 1 <= k <= m.n_cols:
        raise ContractError(f"k must be in 1..{m.n_cols}, got {k}")
    z = standardize(m)
    X0 = np.where(z.mask, z.values, 0.0)
    T, P, drops, ss_total, iterations = _fit_components(
        X0, z.mask, k, cfg.tol, cfg.max_iter
    )
    _orient(P, T)
    explained = drops / ss_total if ss_total > 0 else drops
    return PcaModel(P, T, explained, m.names, method="nipals", iterations=iterations)


def estimate_k(
    m: DataMatrix,
    k_max: int,
    folds: int,
    seed: int = 0,
    tol: float = 1e-4,
    max_iter: int = 1000,
) -> int:
    """Pick a component count by cross-validated reconstruction error.

    Observed cells are split into ``folds`` random groups, dealt out row
    by row so no fold takes more than its share of any single row. An
    unstratified draw can strip a row of the cells that carry a
    component's loading mass, leaving that row's score undetermined: the
    fit then drifts along a flat direction and the held-out
    reconstruction for the row explodes. For each fold, NIPALS runs once
    at k_max on the remaining cells and the nested prefix reconstructions
    score all k = 1..k_max on the held-out cells (the sequential
    extraction makes the k-component fit a prefix of the k_max fit). The
    k with the smallest mean error wins; ties go to the smaller k. The
    internal tolerance is looser than the NIPALS default because
    reconstruction scoring does not need 1e-9 scores.

    Fold fits run with a fixed iteration budget and keep the last iterate
    when a component runs out: masked extraction is alternating least
    squares, so the observed residual only ever decreases and a truncated
    component is a valid reconstruction that merely scores a hair worse.
    Raising instead would make the answer hinge on which fold drew a
    near-degenerate spectrum. The score refit is ridge-damped (CV_DAMP)
    so rows that arrive with little loading mass stay bounded at their
    held-out cells. Structural failures (a collapsed loading, a bare row
    or column) still propagate.
    """
    if not 1 <= k_max <= m.n_cols:
        raise ContractError(f"k_max must be in 1..{m.n_cols}, got {k_max}")
    if folds < 2:
        raise ContractError(f"folds must be >= 2, got {folds}")
    std = standardize(m)
    values = np.where(std.mask, std.values, 0.0)
    obs_idx = np.argwhere(std.mask)
    rng = make_rng(seed)
    # row-stratified assignment: argwhere is row-major, so each row's
    # observed cells form a contiguous run
    fold_of = np.empty(len(obs_idx), dtype=int)
    start = 0
    for count in np.bincount(obs_idx[:, 0], minlength=m.n_rows):
        if count == 0:
            continue
        deal = (rng.permutation(count) + rng.integers(folds)) % folds
        fold_of[start : start + count] = deal
        start += count

    errors = np.zeros(k_max)
    counts = np.zeros(k_max)
    for f in range(folds):
        held = fold_of == f
        train_mask = np.array(std.mask)
        train_mask[obs_idx[held, 0], obs_idx[held, 1]] = False
        # a fold may strip a row or column bare; return one cell to training
        for i in np.flatnonzero(~train_mask.any(axis=1)):
            j = int(np.argmax(std.mask[i]))
            train_mask[i, j] = True
        for j in np.flatnonzero(~train_mask.any(axis=0)):
            i = int(np.argmax(std.mask[:, j]))
            train_mask[i, j] = True
        eval_mask = std.mask & ~train_mask
        X_train = np.where(train_mask, values, 0.0)
        T, P, _, _, _ = _fit_components(
            X_train, train_mask, k_max, tol, max_iter, strict=False, damp=CV_DAMP
        )
        recon = np.zeros_like(values)
        got = T.shape[1]
        for k in range(1, k_max + 1):
            if k <= got:
                recon += np.outer(T[:, k - 1], P[:, k - 1])
            diff = (values - recon)[eval_mask]
            errors[k - 1] += float(diff @ diff)
            counts[k - 1] += diff.size
    mean_err = errors / np.maximum(counts, 1)
    best = 0
    for k in range(1, k_max):
        if mean_err[k] < mean_err[best]:
            best = k
    return best + 1
