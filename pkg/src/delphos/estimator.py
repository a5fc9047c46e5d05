"""Multinomial logit estimation of decoded utility specifications.

A specification is compiled against a dataset into a :class:`UtilityDesign`
(canonical parameter layout plus precomputed attribute matrices), then fit
by maximum likelihood: BFGS ascent with Armijo backtracking, analytic
gradients, and a finite-difference Hessian for standard errors.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import ChoiceDataset
from .space import GENERIC, ModellingSpace, ModelSpec, validate_spec
from .transforms import BOXCOX, apply_transform, transform_dlambda


@dataclass(frozen=True)
class OptimizerSettings:
    grad_tol: float = 1e-6
    max_iter: int = 500
    time_budget_s: float = 30.0
    hess_step: float = 1e-5
    armijo_c: float = 1e-4

    def to_json(self) -> dict:
        return {
            "grad_tol": self.grad_tol,
            "max_iter": self.max_iter,
            "time_budget_s": self.time_budget_s,
            "hess_step": self.hess_step,
            "armijo_c": self.armijo_c,
        }


@dataclass
class _TermData:
    """One attribute term bound to data: coefficient gather + transform input."""

    attr: int
    transform: str
    coef_idx: np.ndarray          # (N, J) int indices into the parameter vector
    z_static: np.ndarray | None   # transformed values when lambda-free
    x_pos: np.ndarray | None      # shifted positive attribute values (Box-Cox)
    lam_idx: int = -1


@dataclass
class UtilityDesign:
    """Deterministic parameter layout for one specification on one dataset.

    Layout: ASC block (reference alternative 0 fixed at zero, expanded per
    covariate level under an interaction), then per attribute in ascending
    index its beta block followed by its Box-Cox lambda if any.
    """

    spec: ModelSpec
    param_names: tuple[str, ...]
    boxcox_shift: dict[int, float]
    n_obs: int
    n_alts: int
    _asc_idx: np.ndarray | None
    _terms: list[_TermData]

    @property
    def n_params(self) -> int:
        return len(self.param_names)


def null_log_likelihood(ds: ChoiceDataset) -> float:
    """LL of the zero-parameter equal-shares model (chosen among available)."""
    return float(-np.log(ds.avail.sum(axis=1)).sum())


def build_design(spec: ModelSpec, space: ModellingSpace, ds: ChoiceDataset) -> UtilityDesign:
    """Compile a specification into a parameter layout bound to ``ds``."""
    validate_spec(space, spec)
    if ds.n_attrs != space.n_attrs:
        raise ValueError(f"dataset has {ds.n_attrs} attributes, space expects {space.n_attrs}")
    for cov in space.covariates:
        if not 0 <= cov < ds.n_covs:
            raise ValueError(f"space covariate cov{cov} missing from dataset")

    n, j = ds.n_obs, ds.n_alts
    names: list[str] = []
    asc_idx = None
    if spec.asc is not None:
        asc_idx = np.full((n, j), -1, dtype=int)
        if spec.asc.interaction is None:
            for alt in range(1, j):
                asc_idx[:, alt] = len(names)
                names.append(f"asc_{alt}")
        else:
            cov = spec.asc.interaction
            levels = ds.cov_levels[cov]
            base = len(names)
            for alt in range(1, j):
                for lev in range(levels):
                    names.append(f"asc_{alt}_c{lev}")
            for alt in range(1, j):
                asc_idx[:, alt] = base + (alt - 1) * levels + ds.covs[:, cov]

    terms: list[_TermData] = []
    shifts: dict[int, float] = {}
    for t in spec.terms:
        label = f"x{t.attr + 1}"
        base = len(names)
        coef_idx = np.empty((n, j), dtype=int)
        if t.interaction is None:
            if t.taste == GENERIC:
                names.append(f"b_{label}")
                coef_idx[:] = base
            else:
                names.extend(f"b_{label}_a{alt}" for alt in range(j))
                coef_idx[:] = base + np.arange(j)
        else:
            levels = ds.cov_levels[t.interaction]
            lev = ds.covs[:, t.interaction]
            if t.taste == GENERIC:
                names.extend(f"b_{label}_c{l}" for l in range(levels))
                coef_idx[:] = (base + lev)[:, None]
            else:
                names.extend(
                    f"b_{label}_a{alt}_c{l}" for alt in range(j) for l in range(levels)
                )
                coef_idx[:] = base + np.arange(j)[None, :] * levels + lev[:, None]

        x = ds.attrs[:, :, t.attr]
        if t.transform == BOXCOX:
            shift = 1.0 if x.min() <= 0 else 0.0
            if (x + shift).min() <= 0:
                raise ValueError(
                    f"attribute {label} not positive after +1 shift; Box-Cox undefined"
                )
            if shift:
                shifts[t.attr] = shift
            lam_idx = len(names)
            names.append(f"lambda_{label}")
            terms.append(_TermData(t.attr, t.transform, coef_idx, None, x + shift, lam_idx))
        else:
            z = apply_transform(t.transform, x)
            terms.append(_TermData(t.attr, t.transform, coef_idx, z, None))

    return UtilityDesign(
        spec=spec,
        param_names=tuple(names),
        boxcox_shift=shifts,
        n_obs=n,
        n_alts=j,
        _asc_idx=asc_idx,
        _terms=terms,
    )


def utilities(design: UtilityDesign, params: np.ndarray) -> np.ndarray:
    """Deterministic utility matrix V (n_obs, n_alts) at the given parameters."""
    params = np.asarray(params, dtype=float)
    v = np.zeros((design.n_obs, design.n_alts))
    if design._asc_idx is not None:
        v[:, 1:] += params[design._asc_idx[:, 1:]]
    for t in design._terms:
        z = t.z_static
        if z is None:
            z = apply_transform(BOXCOX, t.x_pos, params[t.lam_idx])
        v += z * params[t.coef_idx]
    return v


def _choice_residual(design: UtilityDesign, ds: ChoiceDataset, params: np.ndarray):
    """Log-likelihood and the (observed - predicted) choice indicator matrix."""
    v = np.where(ds.avail, utilities(design, params), -np.inf)
    vmax = v.max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        expv = np.exp(v - vmax)
    denom = expv.sum(axis=1, keepdims=True)
    rows = np.arange(ds.n_obs)
    ll = float((v[rows, ds.choice] - vmax[:, 0] - np.log(denom[:, 0])).sum())
    w = -expv / denom
    w[rows, ds.choice] += 1.0
    return ll, w


def log_likelihood(design: UtilityDesign, ds: ChoiceDataset, params: np.ndarray) -> float:
    """Sum of log choice probabilities; non-finite on utility overflow, never raises."""
    params = np.asarray(params, dtype=float)
    if params.shape != (design.n_params,):
        raise ValueError(f"expected {design.n_params} parameters, got {params.shape}")
    ll, _ = _choice_residual(design, ds, params)
    return ll


def gradient(design: UtilityDesign, ds: ChoiceDataset, params: np.ndarray) -> np.ndarray:
    """Analytic dLL/dtheta for every beta and lambda parameter."""
    params = np.asarray(params, dtype=float)
    _, w = _choice_residual(design, ds, params)
    p = design.n_params
    grad = np.zeros(p)
    if design._asc_idx is not None:
        grad += np.bincount(
            design._asc_idx[:, 1:].ravel(), weights=w[:, 1:].ravel(), minlength=p
        )
    for t in design._terms:
        z = t.z_static
        if z is None:
            z = apply_transform(BOXCOX, t.x_pos, params[t.lam_idx])
            dz = transform_dlambda(t.x_pos, params[t.lam_idx])
            grad[t.lam_idx] += float((w * params[t.coef_idx] * dz).sum())
        grad += np.bincount(t.coef_idx.ravel(), weights=(w * z).ravel(), minlength=p)
    return grad


def _score_matrix(design: UtilityDesign, ds: ChoiceDataset, params: np.ndarray) -> np.ndarray:
    """Per-observation score vectors, rows summing to the gradient."""
    _, w = _choice_residual(design, ds, params)
    n, p = design.n_obs, design.n_params
    rows = np.broadcast_to(np.arange(n)[:, None], w.shape)
    g = np.zeros((n, p))
    if design._asc_idx is not None:
        np.add.at(g, (rows[:, 1:], design._asc_idx[:, 1:]), w[:, 1:])
    for t in design._terms:
        z = t.z_static
        if z is None:
            z = apply_transform(BOXCOX, t.x_pos, params[t.lam_idx])
            dz = transform_dlambda(t.x_pos, params[t.lam_idx])
            g[:, t.lam_idx] += (w * params[t.coef_idx] * dz).sum(axis=1)
        np.add.at(g, (rows, t.coef_idx), w * z)
    return g


def _fd_hessian(design, ds, params, step: float) -> np.ndarray:
    """Central finite differences of the analytic gradient."""
    p = design.n_params
    h = np.zeros((p, p))
    for i in range(p):
        hi = step * max(1.0, abs(params[i]))
        up, dn = params.copy(), params.copy()
        up[i] += hi
        dn[i] -= hi
        h[:, i] = (gradient(design, ds, up) - gradient(design, ds, dn)) / (2 * hi)
    return (h + h.T) / 2


def initial_point(design: UtilityDesign) -> np.ndarray:
    """Neutral start: betas at 0, Box-Cox lambdas at 1 (linear)."""
    x0 = np.zeros(design.n_params)
    for t in design._terms:
        if t.lam_idx >= 0:
            x0[t.lam_idx] = 1.0
    return x0


@dataclass
class EstimationOutcome:
    ll: float
    ll0: float
    rho2: float
    adj_rho2: float
    aic: float
    bic: float
    n_params: int
    estimates: dict[str, float]
    std_errors: dict[str, float]
    robust_std_errors: dict[str, float]
    converged: bool
    est_time: float
    n_obs: int
    boxcox_shifts: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "ll": self.ll,
            "ll0": self.ll0,
            "rho2": self.rho2,
            "adj_rho2": self.adj_rho2,
            "aic": self.aic,
            "bic": self.bic,
            "n_params": self.n_params,
            "estimates": self.estimates,
            "std_errors": self.std_errors,
            "robust_std_errors": self.robust_std_errors,
            "converged": self.converged,
            "est_time": self.est_time,
            "n_obs": self.n_obs,
            "boxcox_shifts": self.boxcox_shifts,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EstimationOutcome":
        return cls(**doc)


def _outcome(design, ds, params, converged, t0, hess_step=1e-5) -> EstimationOutcome:
    ll = log_likelihood(design, ds, params)
    ll0 = null_log_likelihood(ds)
    k, n = design.n_params, ds.n_obs
    se = {}
    rse = {}
    if k and np.isfinite(ll):
        try:
            h = _fd_hessian(design, ds, params, step=hess_step)
            np.linalg.cholesky(-h)  # curvature must be negative definite
            cov = np.linalg.inv(-h)
            se_vec = np.sqrt(np.diag(cov))
            g = _score_matrix(design, ds, params)
            rcov = cov @ (g.T @ g) @ cov
            rse_vec = np.sqrt(np.diag(rcov))
            if not (np.all(np.isfinite(se_vec)) and np.all(np.isfinite(rse_vec))):
                raise np.linalg.LinAlgError("non-finite standard errors")
            se = dict(zip(design.param_names, se_vec.tolist()))
            rse = dict(zip(design.param_names, rse_vec.tolist()))
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            converged = False
    elif not np.isfinite(ll):
        converged = False
    return EstimationOutcome(
        ll=ll,
        ll0=ll0,
        rho2=1.0 - ll / ll0 if np.isfinite(ll) else float("nan"),
        adj_rho2=1.0 - (ll - k) / ll0 if np.isfinite(ll) else float("nan"),
        aic=-2.0 * ll + 2.0 * k,
        bic=-2.0 * ll + k * np.log(n),
        n_params=k,
        estimates=dict(zip(design.param_names, np.asarray(params, dtype=float).tolist())),
        std_errors=se,
        robust_std_errors=rse,
        converged=converged,
        est_time=time.perf_counter() - t0,
        n_obs=n,
        boxcox_shifts={f"x{a + 1}": s for a, s in design.boxcox_shift.items()},
    )


def estimate(
    design: UtilityDesign, ds: ChoiceDataset, opts: OptimizerSettings | None = None
) -> EstimationOutcome:
    """Maximum-likelihood fit. Never raises: budget exhaustion, line-search
    failure, or indefinite curvature all surface as ``converged=False``."""
    opts = opts or OptimizerSettings()
    t0 = time.perf_counter()
    theta = initial_point(design)
    if design.n_params == 0:
        return _outcome(design, ds, theta, converged=True, t0=t0)

    def fg(x):
        ll = log_likelihood(design, ds, x)
        return -ll, -gradient(design, ds, x)

    f, g = fg(theta)
    binv = np.eye(design.n_params)
    first_update = True
    for _ in range(opts.max_iter):
        if np.max(np.abs(g)) <= opts.grad_tol:
            break
        if time.perf_counter() - t0 > opts.time_budget_s:
            break
        d = -binv @ g
        slope = float(d @ g)
        if not np.isfinite(slope) or slope >= 0:
            binv = np.eye(design.n_params)
            d, slope = -g, -float(g @ g)
        alpha, accepted = 1.0, False
        while alpha >= 1e-13:
            xn = theta + alpha * d
            fn, gn = fg(xn)
            if np.isfinite(fn) and fn <= f + opts.armijo_c * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        s, y = xn - theta, gn - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                binv *= sy / float(y @ y)
                first_update = False
            rho = 1.0 / sy
            v = np.eye(design.n_params) - rho * np.outer(s, y)
            binv = v @ binv @ v.T + rho * np.outer(s, s)
        theta, f, g = xn, fn, gn

    grad_ok = bool(np.max(np.abs(g)) <= opts.grad_tol)
    return _outcome(design, ds, theta, converged=grad_ok, t0=t0, hess_step=opts.hess_step)


def sandwich_se(design: UtilityDesign, ds: ChoiceDataset, params: np.ndarray) -> dict[str, float]:
    """Robust standard errors sqrt(diag(H^-1 B H^-1)) at a converged MLE.

    H is the finite-difference Hessian of the log-likelihood and B the
    outer-product sum of per-observation scores. Raises LinAlgError when
    H is singular; callers downgrade the convergence flag.
    """
    params = np.asarray(params, dtype=float)
    if design.n_params == 0:
        return {}
    h = _fd_hessian(design, ds, params, step=1e-5)
    hinv = np.linalg.inv(h)
    g = _score_matrix(design, ds, params)
    cov = hinv @ (g.T @ g) @ hinv
    se = np.sqrt(np.diag(cov))
    if not np.all(np.isfinite(se)):
        raise np.linalg.LinAlgError("non-finite robust standard errors")
    return dict(zip(design.param_names, se.tolist()))
