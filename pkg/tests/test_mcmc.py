"""Random-walk Metropolis and ESS estimator tests.

Calibration targets have known moments; tolerances are 3 standard errors
at the effective sample size except where the stated contract fixes an
absolute tolerance.
"""

import math

import numpy as np
import pytest

from bhcoresets import (InputError, McmcConfig, ess, gaussian_mean_model,
                        generate_synthetic, rw_metropolis)
from bhcoresets.coreset_solvers import coreset_posterior_logdensity


def std_normal_logpdf(theta):
    return -0.5 * float(theta @ theta)


class TestRwMetropolis:
    def test_standard_normal_calibration(self):
        cfg = McmcConfig(n_steps=10 ** 5, initial=np.zeros(1), seed=3)
        samples, diags = rw_metropolis(std_normal_logpdf, cfg)
        assert abs(samples.values.mean()) < 0.05
        assert abs(samples.values.var() - 1.0) < 0.1
        assert 0.0 < diags.acceptance_rate < 1.0

    def test_coreset_posterior_moments_match_conjugate(self):
        """Moments agree with the closed-form Gaussian posterior within
        3 standard errors at the estimated ESS."""
        rng = np.random.default_rng(0)
        model = gaussian_mean_model(1)
        data = generate_synthetic("gaussian-mean", 25, 1, seed=1)
        w = np.abs(rng.standard_normal(25)) * 1.5
        mean = (w @ data.points[:, 0]) / (1.0 + w.sum())
        var = 1.0 / (1.0 + w.sum())

        cfg = McmcConfig(n_steps=6 * 10 ** 4, initial=np.zeros(1),
                         proposal_sd=2.4 * math.sqrt(var), seed=4)
        samples, diags = rw_metropolis(
            lambda th: coreset_posterior_logdensity(model, data, w, th), cfg)
        n_eff = diags.ess[0]
        se_mean = math.sqrt(var / n_eff)
        se_var = var * math.sqrt(2.0 / n_eff)
        assert abs(samples.values.mean() - mean) < 3 * se_mean
        assert abs(samples.values.var() - var) < 3 * se_var

    def test_determinism_byte_exact(self):
        cfg = McmcConfig(n_steps=5000, initial=np.zeros(2), seed=11)
        a, _ = rw_metropolis(lambda th: -0.5 * float(th @ th), cfg)
        b, _ = rw_metropolis(lambda th: -0.5 * float(th @ th), cfg)
        assert a.values.tobytes() == b.values.tobytes()

    def test_infinite_start_rejected(self):
        cfg = McmcConfig(n_steps=1000, initial=np.zeros(1), seed=0)
        with pytest.raises(InputError):
            rw_metropolis(lambda th: -math.inf, cfg)

    def test_low_acceptance_warning(self):
        cfg = McmcConfig(n_steps=5000, initial=np.zeros(1), proposal_sd=1e5, seed=0)
        _, diags = rw_metropolis(std_normal_logpdf, cfg)
        assert diags.acceptance_rate < 0.01
        assert any("acceptance" in w for w in diags.warnings)

    def test_burn_in_and_thinning_bookkeeping(self):
        cfg = McmcConfig(n_steps=1000, initial=np.zeros(1), burn_in=200,
                         thinning=4, seed=1)
        samples, _ = rw_metropolis(std_normal_logpdf, cfg)
        assert samples.s == 200

    def test_two_well_occupancy(self):
        """Metropolis on two wells at -1/+1 weighted 1:2. The wells are
        congruent, so long-run occupancy of each side must match the weight
        ratio; 2% tolerance at 1e6 steps."""
        log_w = (math.log(1.0 / 3.0), math.log(2.0 / 3.0))

        def target(theta):
            t = theta[0]
            atom, lw = (1.0, log_w[1]) if t > 0 else (-1.0, log_w[0])
            return lw - (t - atom) ** 2 / (2.0 * 0.3 ** 2)

        cfg = McmcConfig(n_steps=10 ** 6, initial=np.array([1.0]), burn_in=1000,
                         proposal_sd=2.4, seed=7)
        samples, _ = rw_metropolis(target, cfg)
        frac_right = float(np.mean(samples.values[:, 0] > 0))
        assert abs(frac_right - 2.0 / 3.0) <= 0.02 * (2.0 / 3.0)

    def test_config_validation(self):
        with pytest.raises(InputError):
            McmcConfig(n_steps=100, initial=np.zeros(1), burn_in=100)
        with pytest.raises(InputError):
            McmcConfig(n_steps=100, initial=np.zeros(1), thinning=0)
        with pytest.raises(InputError):
            McmcConfig(n_steps=100, initial=np.zeros(1), proposal_sd=0.0)


class TestEss:
    def test_iid_chain_near_full_size(self):
        rng = np.random.default_rng(2)
        chain = rng.standard_normal((20000, 2))
        vals, degenerate = ess(chain)
        assert np.all(vals >= 0.8 * 20000)
        assert not degenerate.any()

    def test_constant_chain_degenerate(self):
        chain = np.ones((500, 1))
        vals, degenerate = ess(chain)
        assert vals[0] == 1.0
        assert degenerate[0]

    def test_never_exceeds_length(self):
        rng = np.random.default_rng(3)
        # AR(1) with both positive and negative correlation
        for rho in (-0.6, 0.0, 0.9):
            x = np.empty(5000)
            x[0] = rng.standard_normal()
            eps = rng.standard_normal(5000)
            for t in range(1, 5000):
                x[t] = rho * x[t - 1] + eps[t]
            vals, _ = ess(x)
            assert 0 < vals[0] <= 5000

    def test_correlated_chain_shrinks(self):
        """AR(1) at rho = 0.9 has autocorrelation time (1+rho)/(1-rho) = 19."""
        rng = np.random.default_rng(4)
        x = np.empty(200000)
        x[0] = 0.0
        eps = rng.standard_normal(200000)
        for t in range(1, 200000):
            x[t] = 0.9 * x[t - 1] + eps[t]
        vals, _ = ess(x)
        assert vals[0] == pytest.approx(200000 / 19.0, rel=0.15)

    def test_short_chain_rejected(self):
        with pytest.raises(InputError):
            ess(np.zeros((50, 1)))
