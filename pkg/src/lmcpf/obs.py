"""Synthetic observations, the observation operator, localization and QC."""
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, DimensionMismatch, IndexOutOfRange


@dataclass(frozen=True)
class ObservationBatch:
    """Point observations of a gridded state.

    ``locations`` are (possibly fractional) grid coordinates; the operator
    interpolates linearly between neighbouring grid points, wrapping around
    when ``cyclic``.  ``err_var`` is the diagonal of R.
    """

    values: np.ndarray
    err_var: np.ndarray
    locations: np.ndarray
    n: int
    cyclic: bool = True

    def __post_init__(self):
        for name in ("values", "err_var", "locations"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        m = self.locations.shape[0]
        if self.values.shape != (m,) or self.err_var.shape != (m,):
            raise DimensionMismatch("values, err_var and locations must have equal length")
        if np.any(self.err_var <= 0):
            raise ValueError("observation error variances must be positive")

    @property
    def m(self):
        return self.locations.shape[0]

    def subset(self, mask):
        mask = np.asarray(mask)
        return replace(self, values=self.values[mask], err_var=self.err_var[mask],
                       locations=self.locations[mask])

    def with_values(self, values):
        return replace(self, values=np.asarray(values, dtype=float))


def observation_network(n, every=1, err_var=1.0, offset=0, cyclic=True):
    """Template batch observing every ``every``-th grid point (values zero)."""
    if every < 1:
        raise ConfigError("observation density 'every' must be >= 1")
    locs = np.arange(offset, n, every, dtype=float)
    return ObservationBatch(values=np.zeros(locs.size), err_var=np.full(locs.size, float(err_var)),
                            locations=locs, n=n, cyclic=cyclic)


def _stencil(batch):
    loc = batch.locations
    hi = batch.n if batch.cyclic else batch.n - 1
    if np.any(loc < 0) or np.any(loc > hi) or (batch.cyclic and np.any(loc >= batch.n)):
        raise IndexOutOfRange("observation location outside the model grid")
    i0 = np.floor(loc).astype(int)
    frac = loc - i0
    if batch.cyclic:
        i1 = (i0 + 1) % batch.n
    else:
        i1 = np.minimum(i0 + 1, batch.n - 1)
    return i0, i1, frac


def apply_H(batch, x):
    """Interpolate state(s) ``x`` of shape ``(n,)`` or ``(n, L)`` to the observations."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != batch.n:
        raise DimensionMismatch(f"state has {x.shape[0]} rows, observations expect {batch.n}")
    i0, i1, frac = _stencil(batch)
    if x.ndim == 2:
        frac = frac[:, None]
    return x[i0] * (1.0 - frac) + x[i1] * frac


def operator_matrix(batch):
    i0, i1, frac = _stencil(batch)
    H = np.zeros((batch.m, batch.n))
    rows = np.arange(batch.m)
    np.add.at(H, (rows, i0), 1.0 - frac)
    np.add.at(H, (rows, i1), frac)
    return H


def generate_twin_obs(truth, template, rng):
    rng = np.random.default_rng(rng)
    noise = rng.standard_normal(template.m) * np.sqrt(template.err_var)
    return template.with_values(apply_H(template, truth) + noise)


class LocalizationKind(str, Enum):
    GASPARI_COHN = "gaspari_cohn"
    BOXCAR = "boxcar"
    NONE = "none"


@dataclass(frozen=True)
class LocalizationSpec:
    kind: LocalizationKind = LocalizationKind.GASPARI_COHN
    radius: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LocalizationKind(self.kind))
        if self.kind is not LocalizationKind.NONE and not self.radius > 0:
            raise ConfigError("localization radius must be positive")


def gaspari_cohn(z):
    """Gaspari-Cohn fifth-order taper as a function of ``distance / radius``.

    Compactly supported on ``[0, 2]``.
    """
    z = np.abs(np.asarray(z, dtype=float))
    out = np.zeros_like(z)
    inner = z <= 1.0
    outer = (z > 1.0) & (z < 2.0)
    r = z[inner]
    out[inner] = (((-0.25 * r + 0.5) * r + 0.625) * r - 5.0 / 3.0) * r**2 + 1.0
    r = z[outer]
    out[outer] = ((((r / 12.0 - 0.5) * r + 0.625) * r + 5.0 / 3.0) * r - 5.0) * r + 4.0 - 2.0 / (3.0 * r)
    return np.clip(out, 0.0, 1.0)


def grid_distance(a, b, n=None, cyclic=False):
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if cyclic:
        d = np.minimum(d % n, n - d % n)
    return d


def localization_weights(loc, analysis_point, batch):
    d = grid_distance(batch.locations, analysis_point, batch.n, batch.cyclic)
    if loc.kind is LocalizationKind.NONE:
        return np.ones_like(d)
    if loc.kind is LocalizationKind.BOXCAR:
        return (d <= loc.radius).astype(float)
    return gaspari_cohn(d / loc.radius)


@dataclass
class QCResult:
    batch: ObservationBatch
    mask: np.ndarray = field(repr=False)

    @property
    def n_passed(self):
        return int(self.mask.sum())


def qc_filter(batch, fg_mean_obs, fg_spread_obs, k_qc=3.0):
    """First-guess check: keep obs within ``k_qc`` combined standard deviations."""
    if not k_qc > 0:
        raise ValueError("k_qc must be positive")
    fg_mean_obs = np.asarray(fg_mean_obs, dtype=float)
    fg_spread_obs = np.asarray(fg_spread_obs, dtype=float)
    bound = k_qc * np.sqrt(batch.err_var + fg_spread_obs**2)
    mask = np.abs(batch.values - fg_mean_obs) <= bound
    return QCResult(batch.subset(mask), mask)
