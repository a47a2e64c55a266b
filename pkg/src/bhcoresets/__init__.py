"""Bayesian coreset construction and evaluation in a likelihood-kernel geometry.

The pipeline: draw parameter samples from a base measure, centre the
per-point log-likelihoods on that shared grid to get feature columns, form
the Gram kernel of those features, and optimise sparse non-negative
weights so that the weighted likelihood product stays close to the full
one in the induced Hilbert norm. Posterior quality is then audited against
distance bounds and a subsampling concentration inequality.
"""

__version__ = "0.1.0"

from .bhs_geometry import (FeatureMatrix, GramMatrix, bhs_norm_via_features,
                           clr_features, feature_norms, gram, mmd_sq)
from .coreset_solvers import (Coreset, SolverConfig, coreset_posterior_logdensity,
                              frank_wolfe, hard_threshold, iht, quasi_newton_kl,
                              read_coreset, uniform_subsample, write_coreset)
from .errors import (BhcError, DegenerateInputError, InputError, NumericError,
                     ParseError, ScopeError, SolverError)
from .mcmc import McmcConfig, McmcDiagnostics, ess, rw_metropolis
from .model_zoo import (BaseMeasure, CsvSchema, Dataset, LikelihoodModel,
                        ParameterSamples, gaussian_mean_model, gaussian_measure,
                        generate_synthetic, laplace_approximation, load_dataset,
                        log_likelihood, log_prior, loglik_matrix, logistic_model,
                        sample_base, standard_gaussian)
from .posterior_metrics import (BoundReport, ConcentrationReport, QuadratureGrid,
                                bound_constant_B, concentration_bound,
                                concentration_experiment, hellinger_1d, kl_1d,
                                make_grid, verify_bounds, w1_1d)

__all__ = [name for name in dir() if not name.startswith("_")]
