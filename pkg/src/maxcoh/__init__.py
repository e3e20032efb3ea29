"""Quickest detection of changes in maximal kNN coherence of random matrices.

The pipeline: map each incoming n x p data matrix to its maximal kNN
coherence (``corrstats``), model that statistic with a one-parameter
exponential family (``vmaxfam``), and stop with a generalized-likelihood-
ratio sequential rule (``glr``). ``misspec`` quantifies how the rule
degrades when the assumed pre-change parameter is wrong, ``datagen`` builds
sparse dispersion matrices and change-point streams, ``harness`` runs the
delay / false-alarm Monte Carlo, and ``cli`` exposes it all as commands.
"""

from .corrstats import (CorrelationMatrix, DataMatrix, KnnProfile, ZScores,
                        hub_count, knn_coherence, max_knn_coherence,
                        sample_correlation, zscores)
from .glr import (DetectorState, ExpFamily, GaussianMeanFamily, GlrConfig,
                  VStatFamily, detector_step, glr_statistic, one_sided_glr_n,
                  run_detector, sprt_nu, threshold_for_mtfa)
from .vmaxfam import (FamilyParams, beta_a_n, cdf_v, kl_divergence, mle_j,
                      pdf_v, sample_v, t_integral, w_inverse, w_transform)

__version__ = "0.1.0"
