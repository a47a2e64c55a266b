"""Coreset construction: Frank-Wolfe herding, IHT, uniform subsampling,
and the quasi-Newton KL reweighting scheme.

All solvers return a `Coreset` whose trace records the squared MMD
objective per iteration (for the quasi-Newton solver, a Monte Carlo proxy
of it under the current coreset posterior). Argmax ties break toward the
lowest index everywhere, and every solver is bit-deterministic given its
inputs, config, and seed.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .bhs_geometry import GramMatrix
from .errors import DegenerateInputError, InputError, SolverError
from .mcmc import McmcConfig, rw_metropolis
from .model_zoo import Dataset, LikelihoodModel, log_prior, loglik_matrix
from .seeds import derive_seed

STALL_WINDOW = 3  # consecutive low-progress iterations before stopping


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver knobs: target size m, iteration cap t, stall tolerance."""

    m: int
    t: int = 200
    tolerance: float = 1e-8
    seed: int = 0
    backtracking: bool = True
    max_halvings: int = 10

    def __post_init__(self):
        if self.m < 1:
            raise InputError("coreset size m must be >= 1")
        if self.t < 1:
            raise InputError("iteration cap t must be >= 1")
        if not self.tolerance > 0:
            raise InputError("tolerance must be positive")


@dataclass(frozen=True)
class Coreset:
    """Non-negative weights over the full dataset plus solver provenance."""

    weights: np.ndarray
    solver: str
    seed: int
    trace: tuple = ()
    warnings: tuple = ()
    stop_reason: str = ""
    vertices: tuple = ()  # per-iteration vertex picks (Frank-Wolfe only)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        if w.ndim != 1:
            raise InputError("weights must be a flat vector")
        if np.any(w < 0):
            raise InputError("coreset weights must be non-negative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "trace", tuple(float(v) for v in self.trace))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


class _StallDetector:
    """Stop after STALL_WINDOW consecutive relative decreases below `tol`."""

    def __init__(self, tol: float):
        self.tol = tol
        self.prev = None
        self.count = 0

    def update(self, value: float) -> bool:
        if self.prev is not None:
            drop = self.prev - value
            if drop < self.tol * max(abs(self.prev), 1e-300):
                self.count += 1
            else:
                self.count = 0
        self.prev = value
        return self.count >= STALL_WINDOW


def _objective(k, k1, sum_k1, w, kw=None):
    # (w-1)' K (w-1) expanded around precomputed K @ 1
    if kw is None:
        kw = k @ w
    return max(float(w @ kw - 2.0 * (w @ k1) + sum_k1), 0.0)


# ---------------------------------------------------------------------------
# Frank-Wolfe herding
# ---------------------------------------------------------------------------

def frank_wolfe(gram_matrix: GramMatrix, config: SolverConfig) -> Coreset:
    """Conditional-gradient descent over the scaled-vertex polytope.

    Vertices are v_n = (sigma/sigma_n) e_n with sigma_n the per-point
    feature norm. Iteration 1 jumps to the vertex most aligned with the
    target; every later iteration picks the vertex most aligned with the
    residual and takes the exact line-search step, clamped to [0, 1].
    Starting on a vertex keeps all iterates on the face
    sum_n w_n sigma_n = sigma, where the line search converges linearly;
    it also makes the active-set size at most the iteration count.
    Zero-norm points never enter the vertex search.
    """
    k = gram_matrix.k
    n = k.shape[0]
    sigma_n = np.sqrt(np.clip(np.diag(k), 0.0, None))
    usable = sigma_n > 0
    if not np.any(usable):
        raise DegenerateInputError("all-zero Gram matrix: no usable vertices")
    sigma = float(sigma_n.sum())
    scale = np.full(n, -np.inf)
    scale[usable] = sigma / sigma_n[usable]

    k1 = k @ np.ones(n)
    sum_k1 = float(k1.sum())

    # Iteration 1: land on the vertex maximising <f, g_v>.
    j0 = int(np.argmax(np.where(usable, scale * k1, -np.inf)))
    v0 = sigma / sigma_n[j0]
    w = np.zeros(n)
    w[j0] = v0
    kw = v0 * k[:, j0]
    vertices = [j0]
    trace = [_objective(k, k1, sum_k1, w, kw)]
    stall = _StallDetector(config.tolerance)
    stop_reason = "max_iterations"

    for _ in range(config.t - 1):
        resid = k1 - kw
        scores = np.where(usable, scale * resid, -np.inf)
        j = int(np.argmax(scores))
        vertices.append(j)
        vj = sigma / sigma_n[j]

        num = vj * resid[j] - float(w @ resid)
        den = vj * vj * k[j, j] - 2.0 * vj * kw[j] + float(w @ kw)
        if den <= 0.0:
            stop_reason = "degenerate_direction"
            break
        rho = min(max(num / den, 0.0), 1.0)

        w = (1.0 - rho) * w
        w[j] += rho * vj
        kw = (1.0 - rho) * kw + (rho * vj) * k[:, j]

        obj = _objective(k, k1, sum_k1, w, kw)
        trace.append(obj)
        if stall.update(obj):
            stop_reason = "stalled"
            break

    return Coreset(w, solver="fw", seed=config.seed, trace=trace,
                   stop_reason=stop_reason, vertices=vertices)


# ---------------------------------------------------------------------------
# Iterative hard thresholding
# ---------------------------------------------------------------------------

def hard_threshold(w, m: int) -> np.ndarray:
    """Euclidean projection onto {w >= 0, at most m non-zeros}.

    Negative entries are clipped first; ties for the m-th largest break
    toward the lowest index.
    """
    if m < 0:
        raise InputError("sparsity level must be >= 0")
    w = np.asarray(w, dtype=np.float64)
    clipped = np.maximum(w, 0.0)
    if m >= w.shape[0]:
        return clipped
    out = np.zeros_like(clipped)
    if m == 0:
        return out
    keep = np.argsort(-clipped, kind="stable")[:m]
    out[keep] = clipped[keep]
    return out


def _power_iteration_lmax(k: np.ndarray, iters: int = 50) -> float:
    # Fixed-seed random start: a deterministic structured vector (e.g. all
    # ones) can be exactly orthogonal to the dominant eigenvector on
    # symmetric instances, which silently halves the usable step size.
    n = k.shape[0]
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        kv = k @ v
        norm = float(np.linalg.norm(kv))
        if norm == 0.0:
            return 0.0
        v = kv / norm
    return float(v @ (k @ v))


def iht(gram_matrix: GramMatrix, config: SolverConfig) -> Coreset:
    """Projected gradient descent onto the m-sparse non-negative set.

    Step size 1/lambda_max(K) from 50 power iterations; an optional
    backtracking guard halves the step whenever a move would increase the
    objective. Returns the best iterate seen.
    """
    k = gram_matrix.k
    n = k.shape[0]
    if config.m > n:
        raise InputError(f"coreset size m={config.m} exceeds dataset size {n}")
    lam = _power_iteration_lmax(k)
    if lam <= 0.0:
        raise DegenerateInputError("all-zero Gram matrix: IHT step size undefined")
    step0 = 1.0 / lam

    k1 = k @ np.ones(n)
    sum_k1 = float(k1.sum())

    w = hard_threshold(uniform_subsample(n, config.m, config.seed).weights, config.m)
    obj = _objective(k, k1, sum_k1, w)
    trace = [obj]
    best_w, best_obj = w, obj
    stall = _StallDetector(config.tolerance)
    stop_reason = "max_iterations"

    for _ in range(config.t):
        grad = k @ w - k1
        step = step0
        w_new = hard_threshold(w - step * grad, config.m)
        obj_new = _objective(k, k1, sum_k1, w_new)
        if config.backtracking:
            halvings = 0
            while obj_new > obj and halvings < 20:
                step *= 0.5
                w_new = hard_threshold(w - step * grad, config.m)
                obj_new = _objective(k, k1, sum_k1, w_new)
                halvings += 1
        w, obj = w_new, obj_new
        trace.append(obj)
        if obj < best_obj:
            best_w, best_obj = w, obj
        if stall.update(obj):
            stop_reason = "stalled"
            break

    return Coreset(best_w, solver="iht", seed=config.seed, trace=trace,
                   stop_reason=stop_reason)


# ---------------------------------------------------------------------------
# Uniform subsampling baseline
# ---------------------------------------------------------------------------

def uniform_subsample(n: int, m: int, seed: int) -> Coreset:
    """m distinct indices uniform without replacement, each with weight n/m."""
    if n < 1:
        raise InputError("dataset size must be >= 1")
    if not 1 <= m <= n:
        raise InputError(f"subsample size m={m} must satisfy 1 <= m <= {n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=m, replace=False)
    w = np.zeros(n)
    w[idx] = n / m
    return Coreset(w, solver="uniform", seed=seed, trace=())


# ---------------------------------------------------------------------------
# Quasi-Newton KL reweighting
# ---------------------------------------------------------------------------

def coreset_posterior_logdensity(model: LikelihoodModel, data: Dataset, coreset,
                                 theta) -> float:
    """Unnormalised log density of the coreset posterior at theta.

    log prior + sum_n w_n log l_n(theta); the evidence term is never
    computed because samplers only need the density up to a constant.
    """
    weights = coreset.weights if isinstance(coreset, Coreset) else np.asarray(coreset, float)
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    ll = loglik_matrix(model, data, theta[None, :])[0]
    if weights.shape != ll.shape:
        raise InputError("weight vector length must match dataset size")
    return float(log_prior(theta) + ll @ weights)


def _kl_proxy(full_ll, sub_ll, w_sub) -> float:
    """Variance of the residual log-likelihood under the current samples.

    This is the squared distance between the target and the weighted
    approximation in the Hilbert geometry centred at the current coreset
    posterior, and it vanishes exactly at perfect reconstruction.
    """
    resid = full_ll - sub_ll @ w_sub
    return float(np.var(resid))


def quasi_newton_kl(model: LikelihoodModel, data: Dataset, initial_subset,
                    config: SolverConfig, mcmc_config: McmcConfig) -> Coreset:
    """Iteratively reweight a fixed subset by covariance-matching updates.

    Each iteration samples the current coreset posterior, estimates the
    subset Gram matrix of log-likelihood covariances and the covariance of
    each subset log-likelihood with the residual, solves the regularised
    linear system for the weight update, and clips the weights at zero.
    The step is halved (up to `max_halvings`) while the KL proxy increases.
    """
    subset = np.asarray(initial_subset, dtype=np.int64)
    if subset.ndim != 1 or subset.shape[0] != config.m:
        raise InputError(f"initial subset must contain exactly m={config.m} indices")
    if np.unique(subset).shape[0] != subset.shape[0]:
        raise InputError("initial subset indices must be distinct")
    if subset.min() < 0 or subset.max() >= data.n:
        raise InputError("initial subset indices out of range")
    subset = np.sort(subset)
    sub_data = Dataset(data.points[subset],
                       None if data.labels is None else data.labels[subset],
                       source=data.source + ":subset")

    m = config.m
    w_sub = np.full(m, data.n / m)
    trace = []
    warnings = []
    stall = _StallDetector(config.tolerance)
    stop_reason = "max_iterations"

    for it in range(1, config.t + 1):
        cfg_t = replace(mcmc_config, seed=derive_seed(config.seed, it))
        w_closed = w_sub

        def log_target(theta, _w=w_closed):
            ll = loglik_matrix(model, sub_data, theta[None, :])[0]
            return float(log_prior(theta) + ll @ _w)

        samples, diags = rw_metropolis(log_target, cfg_t)
        if not 0.05 < diags.acceptance_rate < 0.95:
            warnings.append(f"iteration {it}: MCMC acceptance rate "
                            f"{diags.acceptance_rate:.3f} outside (0.05, 0.95)")

        sub_ll = loglik_matrix(model, sub_data, samples.values)
        full_ll = loglik_matrix(model, data, samples.values).sum(axis=1)
        sub_c = sub_ll - sub_ll.mean(axis=0)
        resid = full_ll - sub_ll @ w_sub
        resid_c = resid - resid.mean()
        s = samples.s
        g = sub_c.T @ sub_c / s
        c = sub_c.T @ resid_c / s

        eps = 1e-6 * float(np.trace(g)) / m
        g_reg = g + eps * np.eye(m)
        cond = float(np.linalg.cond(g_reg))
        if not math.isfinite(cond) or cond > 1e12:
            raise SolverError(f"subset Gram matrix singular beyond regularisation; "
                              f"condition estimate {cond:.3e}")
        delta = np.linalg.solve(g_reg, c)

        cur_proxy = _kl_proxy(full_ll, sub_ll, w_sub)
        step = 1.0
        w_new = np.maximum(w_sub + step * delta, 0.0)
        halvings = 0
        while (_kl_proxy(full_ll, sub_ll, w_new) > cur_proxy
               and halvings < config.max_halvings):
            step *= 0.5
            w_new = np.maximum(w_sub + step * delta, 0.0)
            halvings += 1
        w_sub = w_new

        proxy = _kl_proxy(full_ll, sub_ll, w_sub)
        trace.append(proxy)
        if stall.update(proxy):
            stop_reason = "stalled"
            break

    weights = np.zeros(data.n)
    weights[subset] = w_sub
    return Coreset(weights, solver="qnkl", seed=config.seed, trace=trace,
                   warnings=warnings, stop_reason=stop_reason)


# ---------------------------------------------------------------------------
# JSON round-trip
# ---------------------------------------------------------------------------

def coreset_to_dict(coreset: Coreset) -> dict:
    active = coreset.active
    return {
        "solver": coreset.solver,
        "seed": coreset.seed,
        "m": int(active.shape[0]),
        "n": int(coreset.n),
        "weights": [[int(i), float(coreset.weights[i])] for i in active],
        "trace": list(coreset.trace),
        "warnings": list(coreset.warnings),
        "stop_reason": coreset.stop_reason,
        "vertices": list(coreset.vertices),
    }


def coreset_from_dict(payload: dict) -> Coreset:
    w = np.zeros(int(payload["n"]))
    for i, val in payload["weights"]:
        w[int(i)] = float(val)
    return Coreset(w, solver=payload["solver"], seed=int(payload["seed"]),
                   trace=tuple(payload.get("trace", ())),
                   warnings=tuple(payload.get("warnings", ())),
                   stop_reason=payload.get("stop_reason", ""),
                   vertices=tuple(payload.get("vertices", ())))


def write_coreset(path, coreset: Coreset) -> None:
    with open(path, "w") as fh:
        json.dump(coreset_to_dict(coreset), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_coreset(path) -> Coreset:
    with open(path) as fh:
        return coreset_from_dict(json.load(fh))
