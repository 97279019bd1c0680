"""
Closed-form inverse Ising estimators: naive mean-field and Bethe approximation
"""
import logging
import warnings
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.linalg import LinAlgError, LinAlgWarning

import sys
sys.path.append(str(Path(__file__).parent.parent))

from models.schemas import EmpiricalMoments, IsingModel
from .errors import SingularCovarianceError, BetheDomainError

logger = logging.getLogger(__name__)

MU_CLAMP = 1.0 - 1e-6
ATANH_CLAMP = 1.0 - 1e-12
MAX_CONDITION = 1e12
# reciprocal pivot ratio below which a factorization counts as singular
RCOND_MIN = 1e-12
AUTO_RIDGE_SCALE = 1e-8
# beyond this the Bethe coupling argument is not sampling noise
BETHE_DOMAIN_SLACK = 1e-6
EPS_DIV = 1e-15


def _pivoted_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse through QR with column pivoting; raises on numerical rank loss"""
    q, r, piv = linalg.qr(a, pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size and diag[-1] <= diag[0] * RCOND_MIN:
        raise SingularCovarianceError("connected correlation matrix is singular")
    inv = np.empty_like(a)
    inv[piv, :] = linalg.solve_triangular(r, q.T)
    return inv


def invert_covariance(m: EmpiricalMoments, ridge: float = 0.0) -> np.ndarray:
    """
    Return (Gamma + ridge * I)^-1.

    Cholesky first; on failure, QR with column pivoting. With ridge 0 a
    singular Gamma raises SingularCovarianceError.
    """
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    n = m.N
    a = m.gamma + ridge * np.eye(n)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            factor = linalg.cho_factor(a, lower=True)
            pivots = np.diag(factor[0]) ** 2
            if pivots.min() <= pivots.max() * RCOND_MIN:
                raise LinAlgError("Cholesky pivot lost to rounding")
            inv = linalg.cho_solve(factor, np.eye(n))
    except (LinAlgError, LinAlgWarning):
        logger.debug("Cholesky failed, falling back to pivoted QR")
        try:
            inv = _pivoted_inverse(a)
        except LinAlgError as exc:
            raise SingularCovarianceError(str(exc)) from exc
    if not np.all(np.isfinite(inv)):
        raise SingularCovarianceError("inverse of connected correlation matrix is not finite")
    return 0.5 * (inv + inv.T)


def default_ridge(m: EmpiricalMoments) -> float:
    """1e-8 times the mean variance"""
    return AUTO_RIDGE_SCALE * float(np.trace(m.gamma)) / m.N


def _inverse_with_policy(m: EmpiricalMoments, ridge: Optional[float]) -> np.ndarray:
    """
    Explicit ridge: use it. ridge None: plain inversion, falling back to
    the default ridge when it fails or the condition estimate exceeds 1e12.
    """
    if ridge is not None:
        return invert_covariance(m, ridge)
    try:
        inv = invert_covariance(m, 0.0)
        condition = np.linalg.norm(m.gamma, 1) * np.linalg.norm(inv, 1)
        if condition <= MAX_CONDITION:
            return inv
        reason = f"condition estimate {condition:.3g}"
    except SingularCovarianceError:
        reason = "singular matrix"
    fallback = default_ridge(m)
    logger.warning(f"Regularizing Gamma with ridge {fallback:.3g} ({reason})")
    return invert_covariance(m, fallback)


def _clamped_mu(m: EmpiricalMoments) -> np.ndarray:
    mu = np.clip(m.mu, -MU_CLAMP, MU_CLAMP)
    saturated = int(np.count_nonzero(mu != m.mu))
    if saturated:
        logger.warning(f"Clamped {saturated} saturated magnetizations to +-{MU_CLAMP}")
    return mu


def infer_nmf(m: EmpiricalMoments, ridge: Optional[float] = None) -> IsingModel:
    """
    Naive mean-field inversion.

    w_ij = -(Gamma^-1)_ij for i != j, h_i = atanh(mu_i) - sum_j w_ij mu_j.
    """
    mu = _clamped_mu(m)
    inv = _inverse_with_policy(m, ridge)
    w = -inv
    np.fill_diagonal(w, 0.0)
    h = np.arctanh(mu) - w @ mu
    logger.info(f"NMF inference done for N={m.N}")
    return IsingModel(L=m.L, w=w, h=h)


def bethe_f(mu1: np.ndarray, mu2: np.ndarray, t: np.ndarray) -> np.ndarray:
    """
    f(mu1, mu2, t) of the Bethe field equation, in the rationalized form
    2(mu1 - mu2 t) / (1 - t^2 + sqrt((1 - t^2)^2 - 4t(mu1 - mu2 t)(mu2 - mu1 t))),
    which equals the quotient form and has no singularity at t = 0.
    """
    a = mu1 - mu2 * t
    b = mu2 - mu1 * t
    one_t2 = 1.0 - t * t
    root = np.sqrt(np.maximum(one_t2 * one_t2 - 4.0 * t * a * b, 0.0))
    denom = one_t2 + root
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(denom > 0.0, 2.0 * a / denom, 0.0)
    return np.where(np.abs(t) < 1e-12, mu1 * np.ones_like(t), f)


def _bethe_coupling_argument(mu: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    tanh(w_ij) from the Bethe inversion, x = (Gamma^-1)_ij.

    mu_i mu_j - D/(2x) + sqrt(Q)/x is evaluated as
    mu_i mu_j + (-mu_i mu_j D + (mu_i^2 mu_j^2 - 1) x) / (sqrt(Q) + D/2),
    which reaches the w = 0 limit smoothly as x -> 0.
    """
    mi = mu[:, None]
    mj = mu[None, :]
    mimj = mi * mj
    mi2 = mi * mi
    mj2 = mj * mj
    d = np.sqrt(1.0 + 4.0 * (1.0 - mi2) * (1.0 - mj2) * x * x)
    q = 0.25 - mimj * x * d + (2.0 * mi2 * mj2 - mi2 - mj2) * x * x
    floored = q < 0.0
    s = np.sqrt(np.maximum(q, 0.0))
    arg = mimj + (-mimj * d + (mi2 * mj2 - 1.0) * x) / (s + 0.5 * d)
    arg = np.where(np.abs(x) < EPS_DIV, 0.0, arg)
    if np.any(floored):
        logger.warning(f"Floored {int(np.count_nonzero(floored))} negative Bethe square-root arguments")
        with np.errstate(divide="ignore", invalid="ignore"):
            arg = np.where(floored, mimj - 0.5 * d / x, arg)
    return arg


def infer_ba(m: EmpiricalMoments, ridge: Optional[float] = None) -> IsingModel:
    """
    Bethe-approximation inversion; exact on tree-structured models.

    Couplings from the pairwise Bethe formula with D_ij, fields from
    h_i = atanh(mu_i) - sum_j atanh(t_ij f(mu_j, mu_i, t_ij)), t_ij = tanh w_ij.
    """
    mu = _clamped_mu(m)
    inv = _inverse_with_policy(m, ridge)
    n = m.N
    off = ~np.eye(n, dtype=bool)

    arg = _bethe_coupling_argument(mu, inv)
    bad = off & (~np.isfinite(arg) | (np.abs(arg) > 1.0 + BETHE_DOMAIN_SLACK))
    if np.any(bad):
        i, j = (int(k) for k in np.argwhere(bad)[0])
        raise BetheDomainError(
            f"Bethe coupling argument {arg[i, j]!r} outside (-1, 1) for pair ({i}, {j})",
            pair=(i, j),
        )
    arg = np.clip(arg, -ATANH_CLAMP, ATANH_CLAMP)
    w = np.where(off, np.arctanh(arg), 0.0)
    w = 0.5 * (w + w.T)

    t = np.tanh(w)
    f = bethe_f(mu[None, :], mu[:, None], t)
    cavity = np.arctanh(np.clip(t * f, -ATANH_CLAMP, ATANH_CLAMP))
    cavity[~off] = 0.0
    h = np.arctanh(mu) - cavity.sum(axis=1)
    logger.info(f"BA inference done for N={n}")
    return IsingModel(L=m.L, w=w, h=h)
