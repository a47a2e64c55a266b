"""Likelihood models, base measures, synthetic data, and CSV ingestion.

Two likelihood models are supported: inference of a Gaussian mean with
known isotropic observation variance, and binary logistic regression.
Downstream modules interact with a model only through log-likelihood
evaluation and base-measure sampling, so a new model only needs those two
surfaces.

The prior is the standard Gaussian N(0, I_d) throughout; the base measure
used for expectations and centring is a separate, configurable choice.
All containers are immutable after construction (arrays are marked
read-only), so concurrent reads are safe.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import binio
from .errors import InputError, ParseError

GAUSSIAN_MEAN = "gaussian-mean"
LOGISTIC = "logistic-regression"

STANDARD_GAUSSIAN = "standard-gaussian"
GAUSSIAN = "gaussian"
LAPLACE_APPROXIMATION = "laplace-approximation"

_LOG_2PI = math.log(2.0 * math.pi)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LikelihoodModel:
    """A likelihood family with fixed hyperparameters.

    `obs_variance` only applies to the gaussian-mean model; logistic
    regression has no hyperparameters.
    """

    kind: str
    d: int
    obs_variance: float = 1.0

    def __post_init__(self):
        if self.kind not in (GAUSSIAN_MEAN, LOGISTIC):
            raise InputError(f"unknown model kind {self.kind!r}")
        if self.d < 1:
            raise InputError("parameter dimension must be >= 1")
        if self.kind == GAUSSIAN_MEAN and not self.obs_variance > 0:
            raise InputError("observation variance must be positive")


def gaussian_mean_model(d: int = 1, obs_variance: float = 1.0) -> LikelihoodModel:
    return LikelihoodModel(GAUSSIAN_MEAN, d, obs_variance)


def logistic_model(d: int) -> LikelihoodModel:
    return LikelihoodModel(LOGISTIC, d)


@dataclass(frozen=True)
class Dataset:
    """Observed data: N points of dimension d, plus binary labels for logistic."""

    points: np.ndarray
    labels: np.ndarray | None
    source: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:  # N scalar observations
            pts = pts[:, None]
        object.__setattr__(self, "points", _freeze(pts))
        if self.points.shape[0] < 1:
            raise InputError("dataset must contain at least one point")
        if not np.all(np.isfinite(self.points)):
            raise InputError("dataset points must be finite")
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (self.points.shape[0],):
                raise InputError("labels must be one per data point")
            if not np.all(np.isin(lab, (0, 1))):
                raise InputError("labels must lie in {0, 1}")
            frozen = np.array(lab, dtype=np.int64, copy=True)
            frozen.setflags(write=False)
            object.__setattr__(self, "labels", frozen)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class ParameterSamples:
    """S draws from a measure on parameter space, one row per draw."""

    values: np.ndarray
    tag: str
    seed: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:  # S scalar draws
            vals = vals[:, None]
        object.__setattr__(self, "values", _freeze(vals))
        if self.values.shape[0] < 2:
            raise InputError("parameter sample count must be >= 2")
        if not np.all(np.isfinite(self.values)):
            raise InputError("parameter samples must be finite")

    @property
    def s(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BaseMeasure:
    """A Gaussian probability measure on parameter space.

    All three supported kinds (standard Gaussian, general Gaussian, Laplace
    approximation) are realised as a mean vector plus covariance matrix;
    the kind tag records provenance.
    """

    kind: str
    d: int
    mean: np.ndarray = None
    cov: np.ndarray = None
    _chol: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in (STANDARD_GAUSSIAN, GAUSSIAN, LAPLACE_APPROXIMATION):
            raise InputError(f"unknown base measure kind {self.kind!r}")
        if self.d < 1:
            raise InputError("base measure dimension must be >= 1")
        mean = np.zeros(self.d) if self.mean is None else np.asarray(self.mean, float)
        cov = np.eye(self.d) if self.cov is None else np.atleast_2d(np.asarray(self.cov, float))
        if mean.shape != (self.d,):
            raise InputError("base measure mean has wrong dimension")
        if cov.shape != (self.d, self.d):
            raise InputError("base measure covariance has wrong shape")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise InputError("base measure covariance must be positive definite") from exc
        object.__setattr__(self, "mean", _freeze(mean))
        object.__setattr__(self, "cov", _freeze(cov))
        object.__setattr__(self, "_chol", _freeze(chol))

    def log_density(self, thetas: np.ndarray) -> np.ndarray:
        """Log density at each row of `thetas` (accepts a single vector too)."""
        th = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        diff = th - self.mean
        # Solve L z = diff^T once; the quadratic form is then |z|^2.
        z = np.linalg.solve(self._chol, diff.T)
        quad = np.sum(z * z, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))
        out = -0.5 * (quad + logdet + self.d * _LOG_2PI)
        return out[0] if np.asarray(thetas).ndim == 1 else out

    @property
    def tag(self) -> str:
        return f"{self.kind}(d={self.d})"


def standard_gaussian(d: int) -> BaseMeasure:
    return BaseMeasure(STANDARD_GAUSSIAN, d)


def gaussian_measure(mean, cov) -> BaseMeasure:
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    return BaseMeasure(GAUSSIAN, mean.shape[0], mean, cov)


# ---------------------------------------------------------------------------
# Prior (standard Gaussian) and log-likelihoods
# ---------------------------------------------------------------------------

def log_prior(thetas: np.ndarray) -> np.ndarray:
    """Standard Gaussian N(0, I) log density, vectorised over rows."""
    th = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    out = -0.5 * np.sum(th * th, axis=1) - 0.5 * th.shape[1] * _LOG_2PI
    return out[0] if np.asarray(thetas).ndim == 1 else out


def log_likelihood(model: LikelihoodModel, x, theta) -> float:
    """Log likelihood of one data point at one parameter value.

    For the logistic model `x` is a pair (u, y) with covariate vector u and
    binary label y; for the gaussian-mean model it is the observation
    vector itself.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if theta.shape != (model.d,):
        raise InputError(f"theta has dimension {theta.shape}, model expects ({model.d},)")
    if model.kind == GAUSSIAN_MEAN:
        xv = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if xv.shape != (model.d,):
            raise InputError(f"data point has dimension {xv.shape}, model expects ({model.d},)")
        var = model.obs_variance
        resid = xv - theta
        return float(-0.5 * resid @ resid / var - 0.5 * model.d * math.log(2.0 * math.pi * var))
    u, y = x
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if u.shape != (model.d,):
        raise InputError(f"covariate has dimension {u.shape}, model expects ({model.d},)")
    if y not in (0, 1):
        raise InputError("logistic label must be 0 or 1")
    s = float(u @ theta)
    # log sigma(s) = -log(1+e^-s); log(1-sigma(s)) = -log(1+e^s)
    return -np.logaddexp(0.0, -s) if y == 1 else -np.logaddexp(0.0, s)


def loglik_matrix(model: LikelihoodModel, data: Dataset, thetas: np.ndarray) -> np.ndarray:
    """S x N matrix of log l_{x_n}(theta_s) over all points and parameter rows."""
    th = np.asarray(thetas, dtype=np.float64)
    if th.ndim == 1:
        th = th[:, None] if model.d == 1 else th[None, :]
    if th.shape[1] != model.d:
        raise InputError(f"parameter rows have dimension {th.shape[1]}, model expects {model.d}")
    if data.d != model.d:
        raise InputError(f"data has dimension {data.d}, model expects {model.d}")
    if model.kind == GAUSSIAN_MEAN:
        var = model.obs_variance
        # |x - theta|^2 = |x|^2 - 2 theta.x + |theta|^2, expanded blockwise
        x_sq = np.sum(data.points * data.points, axis=1)
        t_sq = np.sum(th * th, axis=1)
        cross = th @ data.points.T
        sq = x_sq[None, :] - 2.0 * cross + t_sq[:, None]
        return -0.5 * sq / var - 0.5 * model.d * math.log(2.0 * math.pi * var)
    if data.labels is None:
        raise InputError("logistic model needs labelled data")
    s = th @ data.points.T
    signed = s * (2.0 * data.labels - 1.0)[None, :]
    return -np.logaddexp(0.0, -signed)


# ---------------------------------------------------------------------------
# Sampling and synthetic data
# ---------------------------------------------------------------------------

def sample_base(base: BaseMeasure, s: int, seed: int) -> ParameterSamples:
    """S i.i.d. draws from the base measure; bit-identical for equal inputs."""
    if s < 2:
        raise InputError("sample count must be >= 2")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((s, base.d))
    vals = base.mean + z @ base._chol.T
    return ParameterSamples(vals, tag=base.tag, seed=seed)


def generate_synthetic(kind: str, n: int, d: int, seed: int,
                       theta_star=None, obs_variance: float = 1.0) -> Dataset:
    """Synthetic dataset drawn from the model at ground truth `theta_star`.

    Default ground truth is the all-ones vector scaled to unit norm.
    """
    if n < 1:
        raise InputError("dataset size must be >= 1")
    if d < 1:
        raise InputError("dimension must be >= 1")
    if theta_star is None:
        theta_star = np.ones(d) / math.sqrt(d)
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=np.float64))
    if theta_star.shape != (d,):
        raise InputError("theta_star has wrong dimension")
    rng = np.random.default_rng(seed)
    source = f"synthetic:{kind}:seed={seed}"
    if kind == GAUSSIAN_MEAN:
        pts = theta_star + rng.standard_normal((n, d))
        return Dataset(pts, None, source)
    if kind == LOGISTIC:
        u = rng.standard_normal((n, d))
        p = 1.0 / (1.0 + np.exp(-u @ theta_star))
        y = (rng.random(n) < p).astype(np.int64)
        return Dataset(u, y, source)
    raise InputError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# Laplace approximation of the posterior as a base measure
# ---------------------------------------------------------------------------

def _log_posterior_grad(model, data, theta):
    if model.kind == GAUSSIAN_MEAN:
        return -theta + np.sum(data.points - theta, axis=0) / model.obs_variance
    s = data.points @ theta
    p = 1.0 / (1.0 + np.exp(-s))
    return -theta + (data.labels - p) @ data.points


def _neg_hessian(model, data, theta):
    if model.kind == GAUSSIAN_MEAN:
        return (1.0 + data.n / model.obs_variance) * np.eye(model.d)
    s = data.points @ theta
    p = 1.0 / (1.0 + np.exp(-s))
    return np.eye(model.d) + (data.points * (p * (1.0 - p))[:, None]).T @ data.points


def laplace_approximation(model: LikelihoodModel, data: Dataset) -> BaseMeasure:
    """Gaussian at the posterior mode, covariance from the Hessian there.

    The mode is found by 200 fixed gradient-ascent steps on the unnormalised
    log posterior; the step size is the reciprocal of a global curvature
    bound, which guarantees monotone ascent for both models.
    """
    if model.kind == GAUSSIAN_MEAN:
        curvature = 1.0 + data.n / model.obs_variance
    else:
        curvature = 1.0 + 0.25 * float(np.sum(data.points * data.points))
    step = 1.0 / curvature
    theta = np.zeros(model.d)
    for _ in range(200):
        theta = theta + step * _log_posterior_grad(model, data, theta)
    cov = np.linalg.inv(_neg_hessian(model, data, theta))
    cov = 0.5 * (cov + cov.T)
    return BaseMeasure(LAPLACE_APPROXIMATION, model.d, theta, cov)


# ---------------------------------------------------------------------------
# CSV ingestion / export
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """Expected CSV layout: d covariate columns plus an optional final label."""

    d: int
    has_label: bool = False
    header: bool = False


def load_dataset(path, schema: CsvSchema) -> Dataset:
    expected = schema.d + (1 if schema.has_label else 0)
    points, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader):
            if schema.header and i == 0:
                continue
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != expected:
                raise ParseError(f"{path}: row {i}: expected {expected} columns, got {len(row)}")
            try:
                vals = [float(cell) for cell in row[: schema.d]]
            except ValueError as exc:
                raise ParseError(f"{path}: row {i}: {exc}") from exc
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}: row {i}: non-finite value")
            points.append(vals)
            if schema.has_label:
                cell = row[-1].strip()
                if cell not in ("0", "1"):
                    raise ParseError(f"{path}: row {i}: label must be 0 or 1, got {cell!r}")
                labels.append(int(cell))
    if not points:
        raise InputError(f"{path}: empty dataset")
    return Dataset(np.asarray(points), np.asarray(labels) if schema.has_label else None,
                   source=str(path))


def save_dataset(path, data: Dataset) -> None:
    """CSV export: one row per observation, '.' decimals, '\\n' line endings."""
    with open(path, "w", newline="") as fh:
        for i in range(data.n):
            cells = [repr(float(v)) for v in data.points[i]]
            if data.labels is not None:
                cells.append(str(int(data.labels[i])))
            fh.write(",".join(cells) + "\n")


def save_samples(path, samples: ParameterSamples) -> None:
    binio.write_matrix(path, binio.MAGIC_SAMPLES, samples.values, samples.seed)


def load_samples(path, tag: str = "file") -> ParameterSamples:
    data, seed = binio.read_matrix(path, binio.MAGIC_SAMPLES)
    return ParameterSamples(data, tag=tag, seed=seed)
