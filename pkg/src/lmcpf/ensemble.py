"""Ensemble-space linear algebra shared by all filters.

Ensembles are plain ``(n, L)`` arrays: one column per member.  Observation-space
perturbations ``Y`` are ``(m, L)``.  Observation error covariance is diagonal
and enters only through its inverse diagonal, already multiplied by the
localization weights.
"""
from dataclasses import dataclass

import numpy as np

from .errors import AllWeightsZero, NotPositiveDefinite, NotSymmetric

RANK_RTOL = 1e-10
SQRT_NEG_RTOL = 1e-8
INV_SQRT_RTOL = 1e-12


def ensemble_mean(ens):
    ens = np.asarray(ens, dtype=float)
    return ens.mean(axis=1)


def perturbations(ens):
    ens = np.asarray(ens, dtype=float)
    return ens - ensemble_mean(ens)[:, None]


@dataclass(frozen=True)
class EnsembleSpaceQuantities:
    """The Bayesian update at one analysis point, written in ensemble space.

    ``A = Y^T R^-1 Y`` is the metric, ``C`` the observation projected into
    ensemble coordinates (pseudo-inverse solution), ``gamma`` the scaling of
    the per-particle covariance ``gamma * X X^T``.  The eigendecomposition of
    ``A`` (eigenvalues clamped at zero) is kept because every downstream
    matrix function reuses it.
    """

    A: np.ndarray
    C: np.ndarray
    gamma: float
    rankA: int
    eigvals: np.ndarray
    eigvecs: np.ndarray
    rhs: np.ndarray  # Y^T R^-1 (y - ybar)

    @property
    def L(self):
        return self.A.shape[0]

    def with_gamma(self, gamma):
        return EnsembleSpaceQuantities(
            self.A, self.C, float(gamma), self.rankA, self.eigvals, self.eigvecs, self.rhs
        )

    def matrix_function(self, f):
        """``U diag(f(lambda)) U^T`` for the eigenpairs of ``A``."""
        U = self.eigvecs
        return (U * f(self.eigvals)) @ U.T


def build_ens_space(Y, rinv_weights, innovation, gamma):
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    rinv_weights = np.asarray(rinv_weights, dtype=float)
    innovation = np.asarray(innovation, dtype=float)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if np.any(rinv_weights < 0):
        raise ValueError("localized R^-1 weights must be non-negative")
    if rinv_weights.size == 0 or not np.any(rinv_weights > 0):
        raise AllWeightsZero("no effective observations at this analysis point")

    weighted = Y * rinv_weights[:, None]
    A = Y.T @ weighted
    A = 0.5 * (A + A.T)
    rhs = weighted.T @ innovation

    lam, U = np.linalg.eigh(A)
    lam = np.maximum(lam, 0.0)
    lam_max = float(lam[-1])
    keep = lam > RANK_RTOL * lam_max if lam_max > 0 else np.zeros_like(lam, dtype=bool)
    Uk = U[:, keep]
    C = Uk @ ((Uk.T @ rhs) / lam[keep])
    return EnsembleSpaceQuantities(
        A=A, C=C, gamma=float(gamma), rankA=int(keep.sum()), eigvals=lam, eigvecs=U, rhs=rhs
    )


def a_norm(beta, q):
    """Length of ``beta`` in the A-metric.  2-D input is taken column-wise."""
    beta = np.asarray(beta, dtype=float)
    sq = np.einsum("i...,ij,j...->...", beta, q.A, beta)
    return np.sqrt(np.maximum(sq, 0.0))


def _check_symmetric(M):
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-10 * scale):
        raise NotSymmetric("matrix is not symmetric")


def sym_inv_sqrt(M):
    M = np.asarray(M, dtype=float)
    _check_symmetric(M)
    lam, U = np.linalg.eigh(0.5 * (M + M.T))
    if lam[0] <= INV_SQRT_RTOL * max(1.0, abs(lam[-1])):
        raise NotPositiveDefinite(f"smallest eigenvalue {lam[0]:.3e} below tolerance")
    return (U / np.sqrt(lam)) @ U.T


def sym_sqrt(M):
    M = np.asarray(M, dtype=float)
    _check_symmetric(M)
    lam, U = np.linalg.eigh(0.5 * (M + M.T))
    scale = float(np.max(np.abs(lam)))
    if lam[0] < -SQRT_NEG_RTOL * scale:
        raise NotPositiveDefinite(f"eigenvalue {lam[0]:.3e} is negative beyond round-off")
    return (U * np.sqrt(np.maximum(lam, 0.0))) @ U.T
