"""Optimization kernels behind the learners and the meta-regressions.

Everything here is deterministic: identical inputs give bitwise-identical
outputs. Inputs in this toolkit are probabilities and O(1) covariates, so
absolute convergence tolerances are meaningful.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEnsembleError, NumericalError, ValidationError

__all__ = [
    "NnlsSolution",
    "nnls",
    "simplex_normalize",
    "logistic_irls",
    "CoxFit",
    "newton_cox",
    "cox_quantities",
    "CoxLassoFit",
    "coord_descent_cox_lasso",
    "constrained_logit_stack",
]

GRADIENT_TOL = 1e-8
COORD_TOL = 1e-7


def _check_design(a, y=None, weights=None):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValidationError("design matrix must be 2-d")
    if a.shape[0] == 0:
        raise ValidationError("design matrix has zero rows")
    if not np.all(np.isfinite(a)):
        raise ValidationError("design matrix has non-finite entries")
    if y is not None:
        y = np.asarray(y, dtype=float)
        if y.shape != (a.shape[0],):
            raise ValidationError("response length must match design rows")
        if not np.all(np.isfinite(y)):
            raise ValidationError("response has non-finite entries")
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (a.shape[0],):
            raise ValidationError("weights length must match design rows")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValidationError("weights must be finite and >= 0")
    return a, y, weights


@dataclass(frozen=True)
class NnlsSolution:
    """Nonnegative least-squares solution with its KKT certificate."""

    coefficients: np.ndarray
    objective: float
    active_set: tuple

    def __post_init__(self):
        if np.any(self.coefficients < 0):
            raise NumericalError("nnls produced a negative coefficient")


def nnls(a, y, weights=None, tol: float = 1e-9) -> NnlsSolution:
    """Minimize sum of w * (y - A @ coef)^2 subject to coef >= 0.

    Active-set method: repeatedly move the most negative-gradient column
    into the passive set, solve the unconstrained least squares there, and
    back coefficients off the boundary as needed. Exact boundary zeros and
    a clean KKT certificate fall out of the construction.
    """
    a, y, weights = _check_design(a, y, weights)
    n, p = a.shape
    if weights is not None:
        sw = np.sqrt(weights)
        aw = a * sw[:, None]
        yw = y * sw
    else:
        aw, yw = a, y

    x = np.zeros(p)
    passive = np.zeros(p, dtype=bool)
    skip = np.zeros(p, dtype=bool)  # entrants the passive solve cannot lift
    grad = aw.T @ yw  # dual: positive entries mean the objective improves
    iters = 0
    max_outer = 3 * max(p, 1) + 10
    while True:
        candidates = np.where(~passive & ~skip, grad, -np.inf)
        if float(np.max(candidates, initial=-np.inf)) <= tol:
            break
        iters += 1
        if iters > max_outer:
            raise NumericalError("nnls active-set iteration limit exceeded")
        entering = int(np.argmax(candidates))
        passive[entering] = True

        while True:
            z = np.zeros(p)
            sol, *_ = np.linalg.lstsq(aw[:, passive], yw, rcond=None)
            z[passive] = sol
            if z[entering] <= 0.0:
                # Numerically collinear with the current passive set: the
                # unconstrained solve cannot move it off the boundary.
                passive[entering] = False
                skip[entering] = True
                break
            if np.all(z[passive] > 0.0):
                x = z
                skip[:] = False
                break
            # Largest feasible step toward z; the blocking coordinate that
            # reaches its bound first leaves the passive set.
            blocking = passive & (z <= 0.0)
            b_idx = np.flatnonzero(blocking)
            denom = x[b_idx] - z[b_idx]
            ratios = np.where(denom > 0.0, x[b_idx] / denom, 0.0)
            hit = b_idx[int(np.argmin(ratios))]
            x = x + float(np.min(ratios)) * (z - x)
            x[hit] = 0.0
            passive[hit] = False
            low = passive & (x <= 1e-14)
            x[low] = 0.0
            passive[low] = False
        grad = aw.T @ (yw - aw @ x)

    residual = yw - aw @ x
    objective = float(residual @ residual)
    grad = aw.T @ residual
    kkt_tol = max(GRADIENT_TOL, tol * 10)
    if np.any(grad[x == 0] > kkt_tol) or np.any(np.abs(grad[x > 0]) > kkt_tol):
        raise NumericalError("nnls KKT conditions violated")
    x = np.where(x < 0, 0.0, x)
    return NnlsSolution(
        coefficients=x,
        objective=objective,
        active_set=tuple(int(j) for j in np.flatnonzero(x == 0)),
    )


def simplex_normalize(raw) -> np.ndarray:
    """Scale a nonnegative vector to sum to 1, preserving the argmax."""
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise ValidationError("weights to normalize must be finite and >= 0")
    total = raw.sum()
    if total <= 0:
        raise DegenerateEnsembleError("all candidate weights are zero")
    return raw / total


def _expit(eta):
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logistic_irls(a, y, offset=None, ridge: float = 0.0, max_iter: int = 100):
    """Penalized Bernoulli maximum likelihood by Newton iteration.

    The design is used exactly as given (add a constant column for an
    intercept). Perfect separation is detected from diverging linear
    predictors and handled by restarting with a small ridge penalty.
    Raises NumericalError with the iteration trace on non-convergence.
    """
    a, y, _ = _check_design(a, y)
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValidationError("outcomes must be binary")
    offset = np.zeros(len(y)) if offset is None else np.asarray(offset, dtype=float)
    if offset.shape != y.shape:
        raise ValidationError("offset length must match response")

    beta = np.zeros(a.shape[1])
    trace = []
    for _ in range(max_iter):
        eta = a @ beta + offset
        if ridge == 0.0 and np.max(np.abs(eta)) > 30.0:
            warnings.warn(
                "perfect separation detected; refitting with ridge 1e-6",
                RuntimeWarning,
                stacklevel=2,
            )
            return logistic_irls(a, y, offset=offset, ridge=1e-6, max_iter=max_iter)
        p = _expit(eta)
        grad = a.T @ (y - p) - ridge * beta
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        trace.append(gnorm)
        if gnorm < GRADIENT_TOL:
            return beta
        w = np.clip(p * (1.0 - p), 1e-12, None)
        hess = (a * w[:, None]).T @ a + ridge * np.eye(a.shape[1])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            if ridge == 0.0:
                warnings.warn(
                    "singular information in logistic fit; adding ridge 1e-6",
                    RuntimeWarning,
                    stacklevel=2,
                )
                return logistic_irls(a, y, offset=offset, ridge=1e-6, max_iter=max_iter)
            raise NumericalError("singular penalized information matrix")
        # Step-halving keeps the penalized log-likelihood from decreasing.
        def pen_loglik(b):
            e = a @ b + offset
            return float(y @ e - np.logaddexp(0.0, e).sum() - 0.5 * ridge * (b @ b))

        current = pen_loglik(beta)
        scale = 1.0
        for _ in range(30):
            candidate = beta + scale * step
            if pen_loglik(candidate) >= current - 1e-12:
                beta = candidate
                break
            scale *= 0.5
        else:
            beta = beta + step
    raise NumericalError(
        f"logistic IRLS did not converge in {max_iter} iterations; "
        f"gradient trace tail {[f'{g:.3e}' for g in trace[-5:]]}"
    )


def cox_quantities(time, event, x, beta):
    """Log partial likelihood, score, and information at ``beta``.

    Tied event times share the full risk set (Breslow). Row order does not
    matter; computation sorts internally.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=int)
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    n, p = x.shape

    order = np.argsort(time, kind="mergesort")
    t_s, e_s, x_s = time[order], event[order], x[order]
    eta = x_s @ beta
    r = np.exp(eta)

    # Suffix sums over the risk set {j : t_j >= t}.
    s0 = np.cumsum(r[::-1])[::-1]
    s1 = np.cumsum((x_s * r[:, None])[::-1], axis=0)[::-1]
    outer = x_s[:, :, None] * x_s[:, None, :] * r[:, None, None]
    s2 = np.cumsum(outer[::-1], axis=0)[::-1]

    loglik = 0.0
    score = np.zeros(p)
    info = np.zeros((p, p))
    i = 0
    while i < n:
        j = i
        while j < n and t_s[j] == t_s[i]:
            j += 1
        d_idx = np.flatnonzero(e_s[i:j] == 1) + i
        d = len(d_idx)
        if d:
            loglik += float(eta[d_idx].sum() - d * np.log(s0[i]))
            xbar = s1[i] / s0[i]
            score += x_s[d_idx].sum(axis=0) - d * xbar
            info += d * (s2[i] / s0[i] - np.outer(xbar, xbar))
        i = j
    return loglik, score, info


@dataclass(frozen=True)
class CoxFit:
    """Proportional-hazards fit: coefficients and Breslow baseline.

    The baseline cumulative hazard is a step function at the distinct event
    times, anchored at the training covariate means (covariates are
    centered internally).
    """

    beta: np.ndarray
    means: np.ndarray
    baseline_times: np.ndarray
    baseline_cumhaz: np.ndarray
    loglik: float

    def cumhaz(self, x, times) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        times = np.asarray(times, dtype=float)
        idx = np.searchsorted(self.baseline_times, times, side="right")
        base = np.concatenate([[0.0], self.baseline_cumhaz])[idx]
        rel = np.exp((x - self.means) @ self.beta)
        return rel[:, None] * base[None, :]

    def survival(self, x, times) -> np.ndarray:
        return np.exp(-self.cumhaz(x, times))


def _breslow_baseline(time, event, eta):
    order = np.argsort(time, kind="mergesort")
    t_s, e_s = time[order], event[order]
    r = np.exp(eta[order])
    s0 = np.cumsum(r[::-1])[::-1]
    times, increments = [], []
    i, n = 0, len(t_s)
    while i < n:
        j = i
        while j < n and t_s[j] == t_s[i]:
            j += 1
        d = int(e_s[i:j].sum())
        if d:
            times.append(t_s[i])
            increments.append(d / s0[i])
        i = j
    return np.asarray(times), np.cumsum(increments)


def newton_cox(dataset, covariates=None, max_iter: int = 100) -> CoxFit:
    """Maximize the Cox log partial likelihood by Newton-Raphson.

    ``covariates`` selects a subset by name or index; default all. Raises on
    constant columns, singular information, and monotone likelihood (a
    diverging coefficient, the risk-set analogue of perfect separation).
    """
    x, names = _select_covariates(dataset, covariates)
    if dataset.n_events < 1:
        raise ValidationError("Cox fit needs at least one event")
    sd = x.std(axis=0)
    for j, s in enumerate(sd):
        if s == 0:
            raise ValidationError(f"constant covariate column {names[j]!r}")
    means = x.mean(axis=0)
    xc = x - means

    beta = np.zeros(x.shape[1])
    time, event = dataset.time, dataset.event
    for _ in range(max_iter):
        loglik, score, info = cox_quantities(time, event, xc, beta)
        if np.max(np.abs(score)) < GRADIENT_TOL:
            break
        if np.max(np.abs(beta)) > 50.0:
            raise NumericalError(
                "monotone partial likelihood (risk-set separation); "
                "consider penalization"
            )
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise NumericalError("singular information matrix in Cox fit")
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            cand_ll, _, _ = cox_quantities(time, event, xc, cand)
            if cand_ll >= loglik - 1e-12:
                beta = cand
                break
            scale *= 0.5
        else:
            beta = beta + step
    else:
        raise NumericalError(f"Cox Newton did not converge in {max_iter} iterations")

    loglik, _, _ = cox_quantities(time, event, xc, beta)
    bt, bch = _breslow_baseline(time, event, xc @ beta)
    return CoxFit(beta=beta, means=means, baseline_times=bt, baseline_cumhaz=bch, loglik=loglik)


def _select_covariates(dataset, covariates):
    names = list(dataset.covariate_names)
    if covariates is None:
        return np.asarray(dataset.covariates, dtype=float), names
    idx = []
    for c in covariates:
        if isinstance(c, str):
            if c not in names:
                raise ValidationError(f"unknown covariate {c!r}")
            idx.append(names.index(c))
        else:
            idx.append(int(c))
    return dataset.covariates[:, idx], [names[i] for i in idx]


@dataclass(frozen=True)
class CoxLassoFit:
    """L1-penalized proportional-hazards fit on standardized covariates."""

    beta: np.ndarray
    means: np.ndarray
    baseline_times: np.ndarray
    baseline_cumhaz: np.ndarray
    lam: float
    lambda_path: np.ndarray

    cumhaz = CoxFit.cumhaz
    survival = CoxFit.survival


def _eta_gradient_diag(time, event, eta):
    """Per-observation gradient and curvature of the partial likelihood
    with respect to the linear predictor (Breslow ties)."""
    order = np.argsort(time, kind="mergesort")
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    t_s, e_s = time[order], event[order]
    r = np.exp(eta[order])
    s0 = np.cumsum(r[::-1])[::-1]

    # Group tied times so every observation at a tied time sees the same
    # risk-set sums.
    n = len(t_s)
    haz1 = np.zeros(n)  # sum over event times <= t_i of d/s0
    haz2 = np.zeros(n)  # sum over event times <= t_i of d/s0^2
    c1 = c2 = 0.0
    i = 0
    while i < n:
        j = i
        while j < n and t_s[j] == t_s[i]:
            j += 1
        d = int(e_s[i:j].sum())
        if d:
            c1 += d / s0[i]
            c2 += d / (s0[i] ** 2)
        haz1[i:j] = c1
        haz2[i:j] = c2
        i = j
    grad_s = e_s - r * haz1
    curv_s = r * haz1 - (r ** 2) * haz2
    return grad_s[inv], np.maximum(curv_s[inv], 1e-10)


def _cd_cox_fit(time, event, xs, lam, beta0, max_outer=100):
    n, p = xs.shape
    beta = beta0.copy()
    for _ in range(max_outer):
        eta = xs @ beta
        grad, w = _eta_gradient_diag(time, event, eta)
        z = eta + grad / w
        beta_old = beta.copy()
        for _ in range(200):
            delta = 0.0
            for j in range(p):
                resid = z - eta + xs[:, j] * beta[j]
                rho = float(w @ (xs[:, j] * resid)) / n
                denom = float(w @ (xs[:, j] ** 2)) / n
                new = np.sign(rho) * max(abs(rho) - lam, 0.0) / denom if denom > 0 else 0.0
                if new != beta[j]:
                    eta = eta + xs[:, j] * (new - beta[j])
                    delta = max(delta, abs(new - beta[j]))
                    beta[j] = new
            if delta < COORD_TOL:
                break
        if np.max(np.abs(beta - beta_old)) < COORD_TOL:
            break
    return beta


def coord_descent_cox_lasso(dataset, lam=None, covariates=None, seed: int = 0,
                            n_lambda: int = 50, cv_folds: int = 5):
    """Lasso-penalized Cox fit by coordinate descent on the standardized scale.

    lam = 0 reproduces the unpenalized Newton fit; lam >= lam_max gives the
    zero vector. With lam unspecified, lam is selected by internal
    ``cv_folds``-fold cross-validation over a log-spaced path from lam_max
    down to lam_max * 1e-3 using the held-out partial likelihood.
    """
    x, names = _select_covariates(dataset, covariates)
    if dataset.n_events < 1:
        raise ValidationError("Cox lasso needs at least one event")
    means = x.mean(axis=0)
    sd = x.std(axis=0)
    for j, s in enumerate(sd):
        if s == 0:
            raise ValidationError(f"constant covariate column {names[j]!r}")
    xs = (x - means) / sd
    time, event = dataset.time, dataset.event
    n = len(time)

    grad0, _ = _eta_gradient_diag(time, event, np.zeros(n))
    lam_max = float(np.max(np.abs(xs.T @ grad0)) / n)
    path = np.geomspace(lam_max, lam_max * 1e-3, n_lambda)

    if lam is None:
        lam = _cv_select_lambda(time, event, xs, path, dataset, seed, cv_folds)
    if lam < 0:
        raise ValidationError("penalty must be >= 0")

    # Warm-start down the path to the requested penalty for stability.
    beta = np.zeros(xs.shape[1])
    for lam_k in path[path > lam]:
        beta = _cd_cox_fit(time, event, xs, float(lam_k), beta)
    beta = _cd_cox_fit(time, event, xs, float(lam), beta)

    beta_orig = beta / sd
    bt, bch = _breslow_baseline(time, event, (x - means) @ beta_orig)
    return CoxLassoFit(
        beta=beta_orig,
        means=means,
        baseline_times=bt,
        baseline_cumhaz=bch,
        lam=float(lam),
        lambda_path=path,
    )


def _cv_select_lambda(time, event, xs, path, dataset, seed, cv_folds):
    from .data import assign_folds

    folds = assign_folds(dataset, cv_folds, seed)
    # Held-out contribution of fold k: full-data partial likelihood minus
    # the training-fold partial likelihood, both at the fold-k coefficients.
    scores = np.zeros(len(path))
    for k in range(1, cv_folds + 1):
        tr = folds.training_index(dataset, k)
        beta = np.zeros(xs.shape[1])
        for li, lam_k in enumerate(path):
            beta = _cd_cox_fit(time[tr], event[tr], xs[tr], float(lam_k), beta)
            ll_all, _, _ = cox_quantities(time, event, xs, beta)
            ll_train, _, _ = cox_quantities(time[tr], event[tr], xs[tr], beta)
            scores[li] += ll_all - ll_train
    return float(path[int(np.argmax(scores))])


def constrained_logit_stack(transformed, outcomes, ridge: float = 0.0) -> np.ndarray:
    """No-intercept logistic stack on logit-transformed hazards.

    No sign or sum constraint applies; the transformed predictors are
    unbounded. Singular designs (duplicated learners) are refitted with
    ridge 1e-6, splitting weight evenly across the duplicates.
    """
    transformed = np.asarray(transformed, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    try:
        return logistic_irls(transformed, outcomes, ridge=ridge)
    except NumericalError:
        if ridge == 0.0:
            warnings.warn(
                "collinear stack; refitting with ridge 1e-6",
                RuntimeWarning,
                stacklevel=2,
            )
            return logistic_irls(transformed, outcomes, ridge=1e-6)
        raise
