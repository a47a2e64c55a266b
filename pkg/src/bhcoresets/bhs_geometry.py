"""Monte Carlo CLR features, the likelihood Gram kernel, and MMD norms.

Column n of the feature matrix holds the centred log-likelihood of data
point n evaluated on a shared grid of parameter draws from the base
measure. All expectations downstream (Gram entries, norms, inner
products) are empirical means over that one grid, which makes the
feature-space and Gram-space expressions of the squared MMD agree to
floating-point rounding rather than only in expectation.
"""

from dataclasses import dataclass

import numpy as np

from . import binio
from .errors import DegenerateInputError, InputError, NumericError
from .model_zoo import Dataset, LikelihoodModel, ParameterSamples, loglik_matrix


@dataclass(frozen=True)
class FeatureMatrix:
    """Centred log-likelihood evaluations plus the raw column means."""

    phi: np.ndarray        # (S, N), every column has empirical mean 0
    col_means: np.ndarray  # (N,) raw means, i.e. MC estimates of E[log l_n]
    seed: int
    base_tag: str

    @property
    def s(self) -> int:
        return self.phi.shape[0]

    @property
    def n(self) -> int:
        return self.phi.shape[1]

    @classmethod
    def from_loglik(cls, raw: np.ndarray, seed: int = 0, base_tag: str = "unknown"):
        """Centre a raw S x N log-likelihood matrix column by column."""
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[0] < 2:
            raise InputError("log-likelihood matrix must be 2-D with at least 2 rows")
        if not np.all(np.isfinite(raw)):
            s_bad, n_bad = np.argwhere(~np.isfinite(raw))[0]
            raise NumericError(
                f"non-finite log-likelihood at data index {n_bad}, sample index {s_bad}")
        means = raw.mean(axis=0)
        phi = raw - means
        # Second centring pass removes the O(eps * scale) residual of the
        # first subtraction, so the column-mean-zero invariant holds tightly.
        phi -= phi.mean(axis=0)
        phi.setflags(write=False)
        means = means.copy()
        means.setflags(write=False)
        return cls(phi=phi, col_means=means, seed=seed, base_tag=base_tag)


@dataclass(frozen=True)
class GramMatrix:
    """Likelihood kernel matrix K[n, m] = mean_s phi[s, n] phi[s, m]."""

    k: np.ndarray
    s: int
    seed: int
    base_tag: str

    @property
    def n(self) -> int:
        return self.k.shape[0]


def clr_features(model: LikelihoodModel, data: Dataset,
                 samples: ParameterSamples) -> FeatureMatrix:
    """Feature matrix of the dataset on the shared parameter grid."""
    raw = loglik_matrix(model, data, samples.values)
    return FeatureMatrix.from_loglik(raw, seed=samples.seed, base_tag=samples.tag)


def gram(features: FeatureMatrix) -> GramMatrix:
    k = features.phi.T @ features.phi / features.s
    k = 0.5 * (k + k.T)
    k.setflags(write=False)
    return GramMatrix(k=k, s=features.s, seed=features.seed, base_tag=features.base_tag)


def _check_weights(w, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,):
        raise InputError(f"weight vector has shape {w.shape}, expected ({n},)")
    return w


def mmd_sq(gram_matrix: GramMatrix, w) -> float:
    """Squared MMD between the weighted and the full empirical embedding.

    Equals (w-1)' K (w-1); clamped below at 0 so rounding can never
    produce a negative squared distance. `w = 1` gives exactly 0.
    """
    w = _check_weights(w, gram_matrix.n)
    r = w - 1.0
    return max(float(r @ gram_matrix.k @ r), 0.0)


def bhs_norm_via_features(features: FeatureMatrix, w) -> float:
    """Same squared distance computed directly in feature space.

    mean_s (sum_n (w_n - 1) phi[s, n])^2; agrees with `mmd_sq` on the
    matching Gram matrix to floating-point rounding.
    """
    w = _check_weights(w, features.n)
    v = features.phi @ (w - 1.0)
    return float(np.mean(v * v))


def feature_norms(features: FeatureMatrix) -> np.ndarray:
    """Per-point feature norms sigma_n = sqrt(K[n, n])."""
    return np.sqrt(np.mean(features.phi * features.phi, axis=0))


def min_eigenvalue_check(gram_matrix: GramMatrix, rel_tol: float = 1e-8) -> float:
    """Smallest eigenvalue; raises if below -rel_tol * trace / N."""
    eigs = np.linalg.eigvalsh(gram_matrix.k)
    floor = -rel_tol * np.trace(gram_matrix.k) / gram_matrix.n
    if eigs[0] < floor:
        raise DegenerateInputError(
            f"Gram matrix is not PSD within tolerance: min eigenvalue {eigs[0]:.3e}")
    return float(eigs[0])


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_features(path, features: FeatureMatrix) -> None:
    # The raw (uncentred) matrix is stored so the column means survive the
    # single-matrix binary layout; loading recentres.
    binio.write_matrix(path, binio.MAGIC_FEATURES,
                       features.phi + features.col_means, features.seed)


def load_features(path, base_tag: str = "file") -> FeatureMatrix:
    raw, seed = binio.read_matrix(path, binio.MAGIC_FEATURES)
    return FeatureMatrix.from_loglik(raw, seed=seed, base_tag=base_tag)


def save_gram(path, gram_matrix: GramMatrix) -> None:
    binio.write_matrix(path, binio.MAGIC_GRAM, gram_matrix.k, gram_matrix.seed)


def load_gram(path, s: int = 0, base_tag: str = "file") -> GramMatrix:
    k, seed = binio.read_matrix(path, binio.MAGIC_GRAM)
    return GramMatrix(k=k, s=s, seed=seed, base_tag=base_tag)


def export_csv(path, matrix: np.ndarray) -> None:
    """Plain CSV dump for inspection ('.' decimals, '\\n' line endings)."""
    np.savetxt(path, np.asarray(matrix, dtype=np.float64), delimiter=",", newline="\n")
