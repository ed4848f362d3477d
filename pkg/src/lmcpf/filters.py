"""Local analysis transforms: LETKF, LAPF and LMCPF.

Every filter produces, at each analysis point, an ``L x L`` matrix ``W`` such
that the local analysis ensemble is ``xbar + X @ W``.  For the LETKF the mean
increment is folded into ``W`` as ``gamma * w 1^T``; because ``X 1 = 0`` this
does not change the perturbation part.
"""
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .diagnostics import d_C as _d_C, d_min as _d_min
from .ensemble import (
    a_norm,
    build_ens_space,
    ensemble_mean,
    perturbations,
)
from .errors import AllWeightsZero, ConfigError, CoverageGap, WeightSumMismatch
from .obs import LocalizationSpec, apply_H, localization_weights

WEIGHT_SUM_TOL = 1e-9


class FilterKind(str, Enum):
    LETKF = "letkf"
    LAPF = "lapf"
    LMCPF = "lmcpf"


@dataclass(frozen=True)
class FilterConfig:
    kind: FilterKind = FilterKind.LMCPF
    kappa: float = 2.5
    kappa_post: float = 1.0
    c0: float = 0.02
    c1: float = 0.5
    rho0: float = 1.0
    rho1: float = 1.5
    smoothing_alpha: float = 0.7
    rho_clip: float = 10.0
    loc: LocalizationSpec = field(default_factory=LocalizationSpec)
    seed: int | None = None
    exact_weights: bool = False
    shared_noise: bool = True
    shared_resampling_draws: bool = True
    inflation: float = 1.0  # multiplicative prior inflation, LETKF only
    analysis_stride: int = 1
    k_qc: float | None = 3.0

    def __post_init__(self):
        object.__setattr__(self, "kind", FilterKind(self.kind))
        if isinstance(self.loc, dict):
            object.__setattr__(self, "loc", LocalizationSpec(**self.loc))
        if not (0 <= self.c0 <= self.c1):
            raise ConfigError("need 0 <= c0 <= c1")
        if not self.rho0 < self.rho1:
            raise ConfigError("need rho0 < rho1")
        if not (self.kappa > 0 and self.kappa_post > 0 and self.inflation > 0):
            raise ConfigError("kappa, kappa_post and inflation must be positive")
        if not 0 <= self.smoothing_alpha < 1:
            raise ConfigError("smoothing_alpha must lie in [0, 1)")
        if self.analysis_stride < 1:
            raise ConfigError("analysis_stride must be >= 1")
        if self.k_qc is not None and not self.k_qc > 0:
            raise ConfigError("k_qc must be positive (or null to disable QC)")


@dataclass
class LocalAnalysis:
    W: np.ndarray
    Wbreve: np.ndarray | None = None
    Wshift: np.ndarray | None = None
    Ga_ens: np.ndarray | None = None
    weights: np.ndarray | None = None
    rho: float = math.nan
    rho_raw: float = math.nan
    sigma: float = math.nan
    d_C: float = math.nan
    d_min: float = math.nan
    shift_norm: float = math.nan
    n_obs: int = 0


@dataclass(frozen=True)
class LocalDraws:
    """Random input of one local analysis: stratified offsets and the N matrix."""

    uniform: np.ndarray
    normal: np.ndarray

    @classmethod
    def from_rng(cls, rng, L):
        rng = np.random.default_rng(rng)
        return cls(uniform=rng.random(L), normal=rng.standard_normal((L, L)))


@dataclass(frozen=True)
class LocalObs:
    """Observations seen from one analysis point (weights already > 0)."""

    Y: np.ndarray
    innovation: np.ndarray
    err_var: np.ndarray
    loc_weights: np.ndarray

    @property
    def rinv(self):
        return self.loc_weights / self.err_var

    @property
    def m(self):
        return self.innovation.shape[0]


def select_local_obs(hx_pert, innovation, batch, loc, point):
    w = localization_weights(loc, point, batch)
    keep = w > 0
    return LocalObs(hx_pert[keep], innovation[keep], batch.err_var[keep], w[keep])


# -- ensemble-space building blocks -------------------------------------------------


def letkf_mean_weights(q):
    """``w = (I + gamma A)^-1 Y^T R^-1 (y - ybar)``; analysis mean is ``xbar + gamma X w``."""
    g = q.gamma
    return q.matrix_function(lambda lam: 1.0 / (1.0 + g * lam)) @ q.rhs


def letkf_transform(q):
    """Symmetric square root ``(I + gamma A)^-1/2``."""
    g = q.gamma
    return q.matrix_function(lambda lam: (1.0 + g * lam) ** -0.5)


def normalize_log_weights(logw):
    """Exponentiate and scale to sum ``L``; invariant to constant shifts."""
    logw = np.asarray(logw, dtype=float)
    w = np.exp(logw - logw.max())
    return w * (logw.size / w.sum())


def _member_quadratic(M, C):
    # (C - e_l)^T M (C - e_l) for every l
    MC = M @ C
    return C @ MC - 2.0 * MC + np.diag(M)


def pf_weights_approx(q):
    """Particle likelihood weights exp(-1/2 ||C - e_l||_A^2), summing to L."""
    return normalize_log_weights(-0.5 * _member_quadratic(q.A, q.C))


def pf_weights_exact(q):
    """Mixture weights with the particle covariance integrated out.

    The Gaussian-times-Gaussian integral over ensemble space leaves
    exp(-1/2 (C - e_l)^T A (I + gamma A)^-1 (C - e_l)); l-independent
    determinant factors drop out in the normalization.
    """
    g = q.gamma
    M = q.matrix_function(lambda lam: lam / (1.0 + g * lam))
    return normalize_log_weights(-0.5 * _member_quadratic(M, q.C))


def resampling_matrix(weights, uniform_draws):
    """Stratified selection matrix.

    Column l picks particle i when ``l - 1 + r_l`` falls in the right-closed
    accumulated-weight interval ``(wac_{i-1}, wac_i]``.
    """
    weights = np.asarray(weights, dtype=float)
    r = np.asarray(uniform_draws, dtype=float)
    L = weights.size
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    if abs(weights.sum() - L) > WEIGHT_SUM_TOL * L:
        raise WeightSumMismatch(f"weights sum to {weights.sum()!r}, expected {L}")
    wac = np.cumsum(weights)
    wac *= L / wac[-1]  # the last interval closes exactly at L
    pos = np.arange(L) + r
    idx = np.searchsorted(wac, pos, side="left")
    # position 0 is not inside (0, wac_1]; take the first particle with mass
    idx = np.where(pos <= 0.0, np.searchsorted(wac, 0.0, side="right"), idx)
    idx = np.minimum(idx, L - 1)
    Wb = np.zeros((L, L))
    Wb[idx, np.arange(L)] = 1.0
    return Wb


def shift_matrix(q):
    """Columns ``gamma (I + gamma A)^-1 A (C - e_l)``."""
    g = q.gamma
    F = q.matrix_function(lambda lam: g * lam / (1.0 + g * lam))
    return F @ (q.C[:, None] - np.eye(q.L))


def posterior_cov_ens(q):
    """``(gamma^-1 I + A)^-1`` via the eigenpairs of A."""
    g = q.gamma
    return q.matrix_function(lambda lam: g / (1.0 + g * lam))


def rho_spread(innovation, err_var, hbht_diag, weights=None):
    """Innovation-consistency ratio (d^T d - Tr R) / Tr(H B H^T).

    With localization ``weights`` every observation contributes with its
    weight to both traces.  Returns nan when no observation is usable and
    +-inf when the ensemble has no spread in observation space.
    """
    d = np.asarray(innovation, dtype=float)
    r = np.asarray(err_var, dtype=float)
    hb = np.asarray(hbht_diag, dtype=float)
    w = np.ones_like(d) if weights is None else np.asarray(weights, dtype=float)
    if d.size == 0 or not np.any(w > 0):
        return math.nan
    num = math.fsum(w * (d * d - r))
    den = math.fsum(w * hb)
    if den <= 0.0:
        return math.copysign(math.inf, num) if num != 0 else math.nan
    return num / den


def smooth_rho(rho_raw, rho_prev, alpha, clip=math.inf):
    """Exponential temporal smoothing, raw values clipped to ``[-clip, clip]``."""
    if math.isnan(rho_raw):
        return rho_prev
    rho_raw = min(max(rho_raw, -clip), clip)
    if math.isnan(rho_prev):
        return rho_raw
    return alpha * rho_prev + (1.0 - alpha) * rho_raw


def sigma_of_rho(rho, cfg):
    if rho is None or math.isnan(rho) or rho < cfg.rho0:
        return cfg.c0
    if rho > cfg.rho1:
        return cfg.c1
    return cfg.c0 + (cfg.c1 - cfg.c0) * (rho - cfg.rho0) / (cfg.rho1 - cfg.rho0)


# -- local analyses -------------------------------------------------------------------


def _rho_and_sigma(obs, cfg, rho_prev):
    L = obs.Y.shape[1]
    hbht = np.einsum("ij,ij->i", obs.Y, obs.Y) / (L - 1)
    raw = rho_spread(obs.innovation, obs.err_var, hbht, obs.loc_weights)
    rho = smooth_rho(raw, rho_prev, cfg.smoothing_alpha, cfg.rho_clip)
    return raw, rho, sigma_of_rho(rho, cfg)


def _identity_analysis(L, rho_prev, cfg):
    return LocalAnalysis(W=np.eye(L), rho=rho_prev, sigma=sigma_of_rho(rho_prev, cfg),
                         d_C=0.0, d_min=0.0, shift_norm=0.0)


def _pf_analysis(obs, cfg, draws, rho_prev, with_shift):
    L = obs.Y.shape[1]
    try:
        q = build_ens_space(obs.Y, obs.rinv, obs.innovation, cfg.kappa / (L - 1))
    except AllWeightsZero:
        return _identity_analysis(L, rho_prev, cfg)
    weights = pf_weights_exact(q) if cfg.exact_weights else pf_weights_approx(q)
    Wb = resampling_matrix(weights, draws.uniform)
    raw, rho, sigma = _rho_and_sigma(obs, cfg, rho_prev)
    ones = np.full(L, 1.0 / L)
    if with_shift:
        Wshift = shift_matrix(q)
        Ga = posterior_cov_ens(q)
        # square root of the inflated covariance from the eigenpairs already at hand
        g, kp = q.gamma, cfg.kappa_post
        sqrtG = q.matrix_function(lambda lam: np.sqrt(kp * g / (1.0 + g * lam)))
        W = Wb + Wshift @ Wb + sqrtG @ draws.normal * sigma
        shift_norm = float(a_norm(Wshift @ ones, q))
    else:
        Wshift = np.zeros((L, L))
        Ga = None
        W = Wb + draws.normal * (sigma / math.sqrt(L - 1))
        shift_norm = float(a_norm((Wb - np.eye(L)) @ ones, q))
    return LocalAnalysis(W=W, Wbreve=Wb, Wshift=Wshift, Ga_ens=Ga, weights=weights, rho=rho,
                         rho_raw=raw, sigma=sigma, d_C=_d_C(q), d_min=_d_min(q),
                         shift_norm=shift_norm, n_obs=obs.m)


def lmcpf_point(obs, cfg, draws, rho_prev=math.nan):
    return _pf_analysis(obs, cfg, draws, rho_prev, with_shift=True)


def lapf_point(obs, cfg, draws, rho_prev=math.nan):
    return _pf_analysis(obs, cfg, draws, rho_prev, with_shift=False)


def letkf_point(obs, cfg, draws=None, rho_prev=math.nan):
    L = obs.Y.shape[1]
    infl = math.sqrt(cfg.inflation)
    try:
        q = build_ens_space(infl * obs.Y, obs.rinv, obs.innovation, 1.0 / (L - 1))
    except AllWeightsZero:
        return _identity_analysis(L, rho_prev, cfg)
    w = letkf_mean_weights(q)
    Wsqrt = letkf_transform(q)
    W = infl * (q.gamma * w[:, None] + Wsqrt)
    raw, rho, sigma = _rho_and_sigma(obs, cfg, rho_prev)
    return LocalAnalysis(W=W, rho=rho, rho_raw=raw, sigma=math.nan, d_C=_d_C(q), d_min=_d_min(q),
                         shift_norm=float(a_norm(q.gamma * w, q)), n_obs=obs.m)


POINT_ANALYSES = {
    FilterKind.LETKF: letkf_point,
    FilterKind.LAPF: lapf_point,
    FilterKind.LMCPF: lmcpf_point,
}


def analyze_point(obs, cfg, draws, rho_prev=math.nan):
    return POINT_ANALYSES[cfg.kind](obs, cfg, draws, rho_prev)


def _local_from_ensemble(ens, batch, cfg, analysis_point):
    hx = apply_H(batch, ens)
    ybar = hx.mean(axis=1)
    return select_local_obs(hx - ybar[:, None], batch.values - ybar, batch, cfg.loc, analysis_point)


def lmcpf_analysis(ens, batch, cfg, analysis_point, draws, rho_prev=math.nan):
    return lmcpf_point(_local_from_ensemble(ens, batch, cfg, analysis_point), cfg, draws, rho_prev)


def lapf_analysis(ens, batch, cfg, analysis_point, draws, rho_prev=math.nan):
    return lapf_point(_local_from_ensemble(ens, batch, cfg, analysis_point), cfg, draws, rho_prev)


def letkf_analysis(ens, batch, cfg, analysis_point):
    return letkf_point(_local_from_ensemble(ens, batch, cfg, analysis_point), cfg)


# -- global assembly ------------------------------------------------------------------


def interpolate_transforms(W_points, point_locs, n, cyclic):
    """Linearly interpolate per-point ``W`` matrices onto grid indices ``0..n-1``."""
    W_points = np.asarray(W_points, dtype=float)
    locs = np.asarray(point_locs, dtype=float)
    if locs.size == 0:
        raise CoverageGap("no analysis points")
    order = np.argsort(locs, kind="stable")
    locs, W_points = locs[order], W_points[order]
    grid = np.arange(n, dtype=float)
    if cyclic:
        locs_ext = np.concatenate([locs, [locs[0] + n]])
        W_ext = np.concatenate([W_points, W_points[:1]])
        g = np.where(grid < locs[0], grid + n, grid)
    else:
        if locs[0] > 0 or locs[-1] < n - 1:
            raise CoverageGap("analysis points do not span the model grid")
        locs_ext, W_ext, g = locs, W_points, grid
    hi = np.clip(np.searchsorted(locs_ext, g, side="left"), 0, locs_ext.size - 1)
    lo = np.clip(hi - 1, 0, None)
    exact = locs_ext[hi] == g
    lo = np.where(exact, hi, lo)
    span = locs_ext[hi] - locs_ext[lo]
    t = np.where(span > 0, (g - locs_ext[lo]) / np.where(span > 0, span, 1.0), 0.0)
    t = t[:, None, None]
    return (1.0 - t) * W_ext[lo] + t * W_ext[hi]


def assemble_global(ens, W_points, point_locs, cyclic=True):
    """Analysis ensemble ``xbar_j + X_j W_j`` at every grid point ``j``."""
    ens = np.asarray(ens, dtype=float)
    n = ens.shape[0]
    Wg = interpolate_transforms(W_points, point_locs, n, cyclic)
    X = perturbations(ens)
    return ensemble_mean(ens)[:, None] + np.einsum("jl,jlk->jk", X, Wg)
