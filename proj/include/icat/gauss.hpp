#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "icat/common.hpp"
#include "icat/embed.hpp"

namespace icat::gauss {

inline constexpr double kDefaultRidgeScale = 1e-6;

// The printed distance formula uses the unsquared mean norm; the classical
// Frechet/FID form squares it. Both are supported; `squared` is what the
// Wasserstein-2 oracle checks against.
enum class MeanNormMode { unsquared, squared };

const char* to_string(MeanNormMode mode);

/// Multivariate Gaussian fitted to a token-embedding set: mean, biased
/// (divide-by-n) covariance plus a ridge on the diagonal.
struct TokenGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t n_tokens = 0;
  double regularization = 0.0;  // ridge actually added to the diagonal

  Eigen::Index dim() const { return mean.size(); }

  // Checks symmetry (1e-10), positive semi-definiteness up to numerical
  // slack, and finiteness. Throws icat::Error on violation.
  void validate() const;
};

/// Fit (mean, covariance) to the token vectors. Covariance is the biased
/// sample covariance plus lambda*I with
/// lambda = ridge_scale * max(trace(S)/d, 1e-8); sample covariance of a
/// single token is zero, so single-token sets are legal.
TokenGaussian norm_est(const embed::TokenEmbeddingSet& embeddings,
                       double ridge_scale = kDefaultRidgeScale);

/// Symmetric PSD square root via eigendecomposition; eigenvalues below
/// 1e-10 * lambda_max (and negatives) are clipped to zero. Throws
/// NotSymmetricError when the input asymmetry exceeds tolerance.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& matrix);

struct FtdScore {
  double total = 0.0;
  double mean_term = 0.0;   // ||mu_t - mu_s|| (or squared, per mode)
  double trace_term = 0.0;  // Tr(S_s + S_t - 2 sqrt(S_s S_t))
  MeanNormMode mean_norm_mode = MeanNormMode::unsquared;
};

/// Frechet distance between the two fitted Gaussians. The cross term is
/// computed as Tr(sqrt(S^{1/2} T S^{1/2})), which equals Tr(sqrt(S T)) for
/// PSD inputs but stays inside symmetric eigensolvers.
FtdScore ftd(const TokenGaussian& source, const TokenGaussian& target,
             MeanNormMode mode = MeanNormMode::unsquared);

/// Isometry (plus optional uniform scaling) applied identically to every
/// vector of a token set: y = scale * V x + translation.
struct TransformSpec {
  std::optional<std::uint64_t> rotation_seed;   // orthogonal V, seeded
  std::optional<Eigen::VectorXd> translation;   // defaults to zero
  double scale = 1.0;
};

// Deterministic orthogonal matrix (QR of a seeded random matrix with sign
// correction).
Eigen::MatrixXd random_orthogonal(Eigen::Index dim, std::uint64_t seed);

embed::TokenEmbeddingSet transform_embeddings(
    const embed::TokenEmbeddingSet& set, const TransformSpec& spec);

struct InvarianceReport {
  FtdScore before;
  FtdScore after;
  double abs_delta = 0.0;
  double ridge_scale = kDefaultRidgeScale;
};

/// d_FTD between the two sets before and after applying `transform` to both.
/// For pure isometries the delta is numerical noise; for scalings the report
/// simply records how the terms moved.
InvarianceReport invariance_probe(const embed::TokenEmbeddingSet& q_a,
                                  const embed::TokenEmbeddingSet& q_b,
                                  const TransformSpec& transform,
                                  double ridge_scale = kDefaultRidgeScale,
                                  MeanNormMode mode = MeanNormMode::unsquared);

}  // namespace icat::gauss
