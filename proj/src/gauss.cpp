#include "icat/gauss.hpp"

#include <cmath>

namespace icat::gauss {

namespace {

constexpr double kRidgeFloor = 1e-8;
constexpr double kSymTolRel = 1e-8;

Eigen::VectorXd to_eigen(const embed::EmbeddingVector& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.values.data(),
                                           static_cast<Eigen::Index>(v.dim()));
}

double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace

const char* to_string(MeanNormMode mode) {
  return mode == MeanNormMode::unsquared ? "unsquared" : "squared";
}

void TokenGaussian::validate() const {
  if (mean.size() == 0 || covariance.rows() != dim() ||
      covariance.cols() != dim()) {
    throw DimensionMismatchError("TokenGaussian: mean/covariance shape mismatch");
  }
  if (!mean.allFinite() || !covariance.allFinite())
    throw Error("TokenGaussian: non-finite entries");

  const double asym = max_abs(covariance - covariance.transpose());
  if (asym > 1e-10 * std::max(1.0, max_abs(covariance)))
    throw NotSymmetricError("TokenGaussian: covariance asymmetry " +
                            std::to_string(asym));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance,
                                                    Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  const double trace = covariance.trace();
  if (!std::isfinite(trace)) throw Error("TokenGaussian: non-finite trace");
  if (min_eig < -1e-8 * std::max(trace, 1.0))
    throw Error("TokenGaussian: covariance not PSD (min eigenvalue " +
                std::to_string(min_eig) + ")");
}

TokenGaussian norm_est(const embed::TokenEmbeddingSet& embeddings,
                       double ridge_scale) {
  embeddings.validate();
  if (ridge_scale < 0.0) throw ConfigError("norm_est: negative ridge_scale");

  const auto n = static_cast<Eigen::Index>(embeddings.vectors.size());
  const auto d = static_cast<Eigen::Index>(embeddings.dim());

  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    x.row(i) = to_eigen(embeddings.vectors[static_cast<std::size_t>(i)]);

  TokenGaussian g;
  g.n_tokens = static_cast<std::size_t>(n);
  g.mean = x.colwise().mean();

  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  Eigen::MatrixXd sample =
      centered.transpose() * centered / static_cast<double>(n);
  sample = 0.5 * (sample + sample.transpose().eval());

  g.regularization =
      ridge_scale *
      std::max(sample.trace() / static_cast<double>(d), kRidgeFloor);
  g.covariance = sample;
  g.covariance.diagonal().array() += g.regularization;

  g.validate();
  return g;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols())
    throw DimensionMismatchError("sqrtm_psd: matrix not square");

  const double asym = max_abs(matrix - matrix.transpose());
  if (asym > kSymTolRel * std::max(1.0, max_abs(matrix)))
    throw NotSymmetricError("sqrtm_psd: asymmetry " + std::to_string(asym) +
                            " exceeds tolerance");

  const Eigen::MatrixXd sym = 0.5 * (matrix + matrix.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success)
    throw Error("sqrtm_psd: eigendecomposition failed");

  // Negative eigenvalues are finite-precision noise on a PSD input and are
  // clipped to zero. Small positive eigenvalues are kept: the inner matrix of
  // the ftd cross term carries ridge eigenvalues whose relative size is the
  // square of their size in the covariance itself, and zeroing them breaks
  // the d_FTD(G, G) = 0 identity at the 1e-9 level.
  Eigen::VectorXd eig = es.eigenvalues();
  for (Eigen::Index i = 0; i < eig.size(); ++i)
    eig(i) = eig(i) > 0.0 ? std::sqrt(eig(i)) : 0.0;

  Eigen::MatrixXd root =
      es.eigenvectors() * eig.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (root + root.transpose().eval());
}

FtdScore ftd(const TokenGaussian& source, const TokenGaussian& target,
             MeanNormMode mode) {
  if (source.dim() != target.dim())
    throw DimensionMismatchError("ftd: source dim " +
                                 std::to_string(source.dim()) +
                                 " vs target dim " +
                                 std::to_string(target.dim()));

  FtdScore score;
  score.mean_norm_mode = mode;

  const double mean_dist = (target.mean - source.mean).norm();
  score.mean_term =
      mode == MeanNormMode::unsquared ? mean_dist : mean_dist * mean_dist;

  // Tr(sqrt(S T)) computed through the symmetric product
  // S^{1/2} T S^{1/2}, which has the same eigenvalues.
  const Eigen::MatrixXd s_half = sqrtm_psd(source.covariance);
  Eigen::MatrixXd inner = s_half * target.covariance * s_half;
  inner = 0.5 * (inner + inner.transpose().eval());
  const double cross_trace = sqrtm_psd(inner).trace();

  score.trace_term =
      source.covariance.trace() + target.covariance.trace() - 2.0 * cross_trace;

  const double trace_slack =
      1e-6 * (source.covariance.trace() + target.covariance.trace());
  if (score.trace_term < -trace_slack)
    throw Error("ftd: trace term " + std::to_string(score.trace_term) +
                " below numerical slack");

  score.total = std::max(0.0, score.mean_term + score.trace_term);
  return score;
}

Eigen::MatrixXd random_orthogonal(Eigen::Index dim, std::uint64_t seed) {
  DetRng rng(mix64(seed, 0x6f727468ull));  // namespaced child seed
  Eigen::MatrixXd m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = rng.uniform_pm1();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

embed::TokenEmbeddingSet transform_embeddings(
    const embed::TokenEmbeddingSet& set, const TransformSpec& spec) {
  set.validate();
  const auto d = static_cast<Eigen::Index>(set.dim());

  Eigen::MatrixXd rotation = Eigen::MatrixXd::Identity(d, d);
  if (spec.rotation_seed) rotation = random_orthogonal(d, *spec.rotation_seed);

  Eigen::VectorXd translation = Eigen::VectorXd::Zero(d);
  if (spec.translation) {
    if (spec.translation->size() != d)
      throw DimensionMismatchError("transform_embeddings: translation dim");
    translation = *spec.translation;
  }

  embed::TokenEmbeddingSet out = set;
  for (auto& v : out.vectors) {
    const Eigen::VectorXd y = spec.scale * (rotation * to_eigen(v)) + translation;
    for (Eigen::Index i = 0; i < d; ++i)
      v.values[static_cast<std::size_t>(i)] = y(i);
  }
  return out;
}

InvarianceReport invariance_probe(const embed::TokenEmbeddingSet& q_a,
                                  const embed::TokenEmbeddingSet& q_b,
                                  const TransformSpec& transform,
                                  double ridge_scale, MeanNormMode mode) {
  InvarianceReport report;
  report.ridge_scale = ridge_scale;
  report.before =
      ftd(norm_est(q_a, ridge_scale), norm_est(q_b, ridge_scale), mode);

  const auto ta = transform_embeddings(q_a, transform);
  const auto tb = transform_embeddings(q_b, transform);
  report.after =
      ftd(norm_est(ta, ridge_scale), norm_est(tb, ridge_scale), mode);

  report.abs_delta = std::abs(report.after.total - report.before.total);
  return report;
}

}  // namespace icat::gauss
