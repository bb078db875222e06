"""Spike-train probability models: simulation, estimation, template matching.

Core surfaces:

- :mod:`spikescan.point_process` -- spike-train containers, simulators,
  exact log-likelihood.
- :mod:`spikescan.intensity_model` -- floored-spline intensities, sieve
  MLE and its convergence-rate study, occurrence density, divergence.
- :mod:`spikescan.kernel` -- score functions and exact template kernels.
- :mod:`spikescan.scoring` -- sliding score series, scan statistics,
  overlap-limited match counting.
- :mod:`spikescan.tilt` -- large-deviation constants and analytic
  p-values.
- :mod:`spikescan.montecarlo` -- direct and importance-sampling
  estimators.
- :mod:`spikescan.cli` -- batch command line.
"""

from .errors import (BranchError, ConfigError, CoverageError, DivergenceError,
                     FitFailureError, InvalidParameterError, ModelError,
                     SpanError, SpikescanError, SubcriticalThresholdError)
from .intensity_model import (FitReport, IntensityPair, OccurrenceDensity,
                              RateStudyResult, SievePolicy, SmoothNonneg,
                              fit_sieve_mle, kl_divergence, l1_distance,
                              occurrence_density, rate_study)
from .kernel import (ScoreFunction, TemplateKernel, build_template_kernel,
                     detect_arithmetic, jump_span, kernel_integrals)
from .montecarlo import (Estimate, MatchCountEstimate, McConfig,
                         direct_mc_pvalue, direct_mc_sweep,
                         importance_sampling_pvalue, importance_sampling_sweep,
                         mc_match_count, tilted_generate)
from .point_process import (MultiTrain, SpikeTrain, janossy_log_density,
                            simulate_modulated, simulate_poisson,
                            simulate_renewal_deadtime)
from .rng import RngStream
from .scoring import (MatchConfig, MatchReport, ScoreSeries, count_matches,
                      scan_summary, score_at, score_series)
from .tilt import (JumpDistribution, MatchCountLaw, TiltSummary,
                   critical_threshold, gumbel_pvalue, gumbel_z,
                   jump_distribution, lattice_factor, match_count_law,
                   overshoot_factor, round_threshold, scan_pvalue,
                   tilt_summary)

__version__ = "0.1.0"
