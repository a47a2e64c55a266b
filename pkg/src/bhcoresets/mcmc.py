"""Random-walk Metropolis over unnormalised log densities.

Deliberately minimal: isotropic Gaussian proposals, no adaptation, no
gradients. Determinism per seed is exact because all proposal noise and
acceptance uniforms are drawn up front from one generator.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .model_zoo import ParameterSamples


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings. Defaults: burn-in 20% of the chain, proposal sd 2.4/sqrt(d)."""

    n_steps: int
    initial: np.ndarray
    burn_in: int = None
    thinning: int = 1
    proposal_sd: float = None
    seed: int = 0

    def __post_init__(self):
        init = np.atleast_1d(np.asarray(self.initial, dtype=np.float64))
        object.__setattr__(self, "initial", init)
        if self.n_steps < 1:
            raise InputError("chain length must be >= 1")
        burn = int(0.2 * self.n_steps) if self.burn_in is None else int(self.burn_in)
        if not 0 <= burn < self.n_steps:
            raise InputError("burn-in must satisfy 0 <= burn_in < chain length")
        object.__setattr__(self, "burn_in", burn)
        if self.thinning < 1:
            raise InputError("thinning must be >= 1")
        sd = 2.4 / math.sqrt(init.shape[0]) if self.proposal_sd is None else self.proposal_sd
        sd = np.broadcast_to(np.asarray(sd, dtype=np.float64), (init.shape[0],)).copy()
        if not np.all(sd > 0):
            raise InputError("proposal standard deviation must be positive")
        object.__setattr__(self, "proposal_sd", sd)

    @property
    def d(self) -> int:
        return self.initial.shape[0]


@dataclass(frozen=True)
class McmcDiagnostics:
    acceptance_rate: float
    ess: np.ndarray
    ess_degenerate: np.ndarray
    warnings: tuple


def rw_metropolis(log_target, config: McmcConfig):
    """Run the chain; returns (ParameterSamples, McmcDiagnostics).

    `log_target` maps a d-vector to an unnormalised log density. Raises
    InputError when the target is -inf/NaN at the initial point; an
    acceptance rate below 1% is reported as a warning, not an error.
    """
    d = config.d
    current = config.initial.copy()
    lp = float(log_target(current))
    if not math.isfinite(lp):
        raise InputError("log target is not finite at the initial point")

    n_kept = (config.n_steps - config.burn_in + config.thinning - 1) // config.thinning
    if n_kept < 2:
        raise InputError("fewer than 2 post-burn-in samples would be kept")

    rng = np.random.default_rng(config.seed)
    noise = rng.standard_normal((config.n_steps, d)) * config.proposal_sd
    log_u = np.log(rng.random(config.n_steps))

    kept = []
    n_accept = 0
    for t in range(config.n_steps):
        prop = current + noise[t]
        lp_prop = float(log_target(prop))
        if lp_prop - lp > log_u[t]:
            current = prop
            lp = lp_prop
            n_accept += 1
        if t >= config.burn_in and (t - config.burn_in) % config.thinning == 0:
            kept.append(current.copy())

    chain = np.asarray(kept)
    accept_rate = n_accept / config.n_steps
    warnings = []
    if accept_rate < 0.01:
        warnings.append(f"acceptance rate {accept_rate:.4f} below 0.01; "
                        "proposal scale likely too large")
    if chain.shape[0] >= 100:
        ess_vals, degenerate = ess(chain)
    else:
        ess_vals = np.full(d, float(chain.shape[0]))
        degenerate = np.zeros(d, dtype=bool)
        warnings.append("kept chain shorter than 100; ESS not estimated")
    samples = ParameterSamples(chain, tag=f"mcmc(seed={config.seed})", seed=config.seed)
    diags = McmcDiagnostics(acceptance_rate=accept_rate, ess=ess_vals,
                            ess_degenerate=degenerate, warnings=tuple(warnings))
    return samples, diags


def ess(chain) -> tuple:
    """Effective sample size per coordinate, initial-positive-sequence rule.

    Returns (ess, degenerate) arrays; a constant coordinate gets ESS 1 and
    a degenerate flag instead of an error. Estimates are clamped to
    (0, chain length].
    """
    values = chain.values if isinstance(chain, ParameterSamples) else np.asarray(chain, float)
    if values.ndim == 1:
        values = values[:, None]
    s, d = values.shape
    if s < 100:
        raise InputError("ESS needs a chain of length >= 100")
    out = np.empty(d)
    degenerate = np.zeros(d, dtype=bool)
    nfft = 1 << int(np.ceil(np.log2(2 * s)))
    for j in range(d):
        x = values[:, j] - values[:, j].mean()
        var0 = float(x @ x) / s
        if var0 == 0.0:
            out[j] = 1.0
            degenerate[j] = True
            continue
        f = np.fft.rfft(x, nfft)
        acov = np.fft.irfft(f * np.conj(f), nfft)[:s].real / s
        rho = acov / acov[0]
        # Sum Geyer pair autocorrelations while they stay positive.
        tau = -1.0
        k = 0
        while 2 * k + 1 < s:
            pair = rho[2 * k] + rho[2 * k + 1]
            if pair <= 0.0:
                break
            tau += 2.0 * pair
            k += 1
        tau = max(tau, 1.0)
        out[j] = s / tau
    return out, degenerate
