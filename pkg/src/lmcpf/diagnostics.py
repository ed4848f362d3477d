"""Measurement machinery: ensemble-space distances, shift statistics, spread,
forecast scores and the eigen-decay model.

Reductions go through ``math.fsum`` so results do not depend on summation
order.
"""
import math
from dataclasses import dataclass

import numpy as np

from .ensemble import a_norm
from .errors import DimensionMismatch, NonPositiveInput


def d_C(q):
    """A-metric distance of the projected observation to the ensemble mean."""
    return float(a_norm(q.C, q))


def d_min(q):
    """A-metric distance of the projected observation to the nearest member."""
    diffs = q.C[:, None] - np.eye(q.L)
    return float(np.min(a_norm(diffs, q)))


def one_dim_shift_factor(kappa, b, r):
    """Fraction of the innovation by which a scalar particle moves."""
    if not (b > 0 and r > 0):
        raise NonPositiveInput("variances must be positive")
    return kappa * b / (r + kappa * b)


def freedman_diaconis_width(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return 1.0
    q75, q25 = np.percentile(x, [75, 25])
    width = 2.0 * (q75 - q25) / x.size ** (1.0 / 3.0)
    if width <= 0:
        span = float(x.max() - x.min())
        width = span if span > 0 else 1.0
    return float(width)


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    median: float
    mean: float

    @property
    def bin_width(self):
        return float(self.edges[1] - self.edges[0])


def histogram(values, bin_width=None, start=0.0):
    """Fixed-width histogram anchored at ``start`` so runs stay bin-compatible."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return Histogram(np.array([start, start + 1.0]), np.zeros(1, dtype=int), math.nan, math.nan)
    width = freedman_diaconis_width(values) if bin_width is None else float(bin_width)
    lo = min(start, float(values.min()))
    nbins = max(1, int(math.ceil((values.max() - lo) / width)) + 1)
    edges = lo + width * np.arange(nbins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(edges, counts, float(np.median(values)), math.fsum(values) / values.size)


def shift_stats(shift_norms, bin_width=None):
    """Histogram and median of per-point mean-shift norms."""
    return histogram(shift_norms, bin_width)


def spread(ens):
    """Per-variable ensemble standard deviation (divisor L - 1)."""
    return np.asarray(ens, dtype=float).std(axis=1, ddof=1)


def spread_stats(ens):
    s = spread(ens)
    return math.fsum(s) / s.size, float(s.min()), float(s.max())


def rmse_and_bias(values, reference):
    values = np.asarray(values, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if values.shape != reference.shape:
        raise DimensionMismatch(f"shapes {values.shape} and {reference.shape} differ")
    diff = (values - reference).ravel()
    rmse = math.sqrt(math.fsum(diff * diff) / diff.size)
    return rmse, math.fsum(diff) / diff.size


def crps(ensemble_values, obs):
    """Empirical ensemble CRPS: E|X - y| - 1/2 E|X - X'|."""
    x = np.asarray(ensemble_values, dtype=float).ravel()
    L = x.size
    skill = math.fsum(np.abs(x - obs)) / L
    # sum_{i,j} |x_i - x_j| from the sorted sample in O(L log L)
    xs = np.sort(x)
    k = np.arange(1, L + 1)
    pair_sum = 2.0 * math.fsum((2 * k - L - 1) * xs)
    return skill - pair_sum / (2.0 * L * L)


def crps_field(ens, truth):
    """Mean CRPS over state variables (rows of ``ens``)."""
    ens = np.asarray(ens, dtype=float)
    truth = np.asarray(truth, dtype=float)
    vals = [crps(ens[i], truth[i]) for i in range(ens.shape[0])]
    return math.fsum(vals) / len(vals)


@dataclass(frozen=True)
class DecayModel:
    """Standard deviations ``eta / j**nu`` for ``j = 1..L``."""

    eta: float
    nu: float

    def __post_init__(self):
        if not self.eta > 0:
            raise NonPositiveInput("eta must be positive")

    def sigmas(self, L):
        j = np.arange(1, L + 1, dtype=float)
        return self.eta / j**self.nu


def fit_decay_exponent(sigmas):
    """Fit ``eta`` from the leading value and ``nu`` as the mean log-slope.

    For each ``j >= 2``: ``nu_j = (log eta - log sigma_j) / log j``.
    """
    s = np.asarray(sigmas, dtype=float)
    if s.size < 2:
        raise ValueError("need at least two values to fit a decay exponent")
    if np.any(~(s > 0)):
        raise NonPositiveInput("decay fit needs strictly positive values")
    eta = float(s[0])
    j = np.arange(2, s.size + 1, dtype=float)
    nus = (math.log(eta) - np.log(s[1:])) / np.log(j)
    return DecayModel(eta=eta, nu=math.fsum(nus) / nus.size)


def simulate_norms(model, L, n_draws, rng):
    """Euclidean norms of Gaussian draws with component stddevs ``model.sigmas(L)``."""
    rng = np.random.default_rng(rng)
    s = model.sigmas(L)
    draws = rng.standard_normal((n_draws, L)) * s
    return np.sqrt(np.einsum("ij,ij->i", draws, draws))


def simulate_norm_histogram(model, L, n_draws, rng, bin_width=None):
    return histogram(simulate_norms(model, L, n_draws, rng), bin_width)


@dataclass
class CycleDiagnostics:
    """Scalar scores of one assimilation cycle plus per-point arrays."""

    cycle: int
    rmse_a: float
    rmse_b: float
    bias_a: float
    crps_a: float
    spread_mean: float
    spread_min: float
    spread_max: float
    n_obs_passed_qc: int
    n_obs_total: int
    d_C: np.ndarray
    d_min: np.ndarray
    shift_norm: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray

    SCALAR_FIELDS = ("cycle", "rmse_a", "rmse_b", "bias_a", "crps_a", "spread_mean",
                     "spread_min", "spread_max", "n_obs_passed_qc", "n_obs_total")
    POINT_FIELDS = ("d_C", "d_min", "shift_norm", "rho", "sigma")
