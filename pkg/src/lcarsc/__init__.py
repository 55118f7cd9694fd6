"""Latent class analysis of categorical responses by regularized spectral clustering."""
from .estimators import (EstimationError, EstimationResult, Method, default_tau, fit, lca_pca, lca_rlmk,
                         lca_rmk, lca_rsc, lca_rscn, lca_rscors, recover_theta)
from .metrics import (MetricsReport, ModularityProfile, adjacency, ari, clustering_error, estimate_k,
                      hamming_error, modularity, nmi, relative_errors, response_modularity, score)
from .model import (ItemParams, Labeling, ModelError, PopulationModel, ResponseMatrix, expected_responses,
                    sample_response, sample_synthetic, sparsity)
from .spectral import (SpectralEmbedding, degree_vector, kmeans, ratio_embedding, regularized_laplacian,
                       row_normalize, spectral_norm, top_k_svd)

__version__ = "0.1.0"
