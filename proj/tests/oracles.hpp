// Test-only oracles, implemented independently of the library code paths
// they check. The FTD/W2 oracles go through eigenvalues of the plain
// covariance product instead of the symmetrized sqrtm route; MMR and cosine
// ranking are re-derived with plain loops.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "icat/common.hpp"
#include "icat/embed.hpp"

namespace oracle {

// Tr(sqrt(A * B)) via eigenvalues of the (nonsymmetric) product.
inline double trace_sqrt_product(const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a * b);
  double total = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double real = es.eigenvalues()(i).real();
    if (real > 0.0) total += std::sqrt(real);
  }
  return total;
}

// d_FTD with unsquared/squared mean term, straight from the formula.
inline double ftd_naive(const Eigen::VectorXd& mu_s, const Eigen::MatrixXd& cov_s,
                        const Eigen::VectorXd& mu_t, const Eigen::MatrixXd& cov_t,
                        bool squared_mean) {
  const double mean_dist = (mu_t - mu_s).norm();
  const double mean_term = squared_mean ? mean_dist * mean_dist : mean_dist;
  const double trace_term =
      cov_s.trace() + cov_t.trace() - 2.0 * trace_sqrt_product(cov_s, cov_t);
  return mean_term + trace_term;
}

// Squared Wasserstein-2 between Gaussians.
inline double w2_squared(const Eigen::VectorXd& mu_s, const Eigen::MatrixXd& cov_s,
                         const Eigen::VectorXd& mu_t, const Eigen::MatrixXd& cov_t) {
  return ftd_naive(mu_s, cov_s, mu_t, cov_t, /*squared_mean=*/true);
}

// Diagonal-covariance closed form of the trace term.
inline double diagonal_trace_term(const Eigen::VectorXd& diag_s,
                                  const Eigen::VectorXd& diag_t) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < diag_s.size(); ++i) {
    const double d = std::sqrt(diag_s(i)) - std::sqrt(diag_t(i));
    total += d * d;
  }
  return total;
}

// Greedy MMR re-derived with plain loops; ties by index.
inline std::vector<std::size_t> mmr_naive(const std::vector<double>& sim_to_query,
                                          const std::vector<std::vector<double>>& sim_between,
                                          int k, double lambda) {
  const std::size_t n = sim_to_query.size();
  std::vector<std::size_t> chosen;
  std::vector<bool> used(n, false);
  while (chosen.size() < std::min<std::size_t>(n, static_cast<std::size_t>(k))) {
    double best = -1e300;
    std::size_t best_i = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      double obj;
      if (chosen.empty()) {
        obj = sim_to_query[i];
      } else {
        double worst = -1e300;
        for (std::size_t j : chosen) worst = std::max(worst, sim_between[i][j]);
        obj = lambda * sim_to_query[i] - (1.0 - lambda) * worst;
      }
      if (obj > best) {
        best = obj;
        best_i = i;
      }
    }
    used[best_i] = true;
    chosen.push_back(best_i);
  }
  return chosen;
}

inline double cosine_naive(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Base-2 JS divergence from raw token counts.
inline double js_naive(const std::map<std::string, double>& counts_p,
                       const std::map<std::string, double>& counts_q) {
  double tp = 0, tq = 0;
  for (auto& [w, c] : counts_p) tp += c;
  for (auto& [w, c] : counts_q) tq += c;

  std::map<std::string, double> p, q;
  for (auto& [w, c] : counts_p) p[w] = c / tp;
  for (auto& [w, c] : counts_q) q[w] = c / tq;

  auto term = [](double x, double m) {
    return x > 0.0 && m > 0.0 ? x * std::log2(x / m) : 0.0;
  };
  double js = 0.0;
  std::map<std::string, double> vocab = p;
  for (auto& [w, c] : q) vocab.try_emplace(w, 0.0);
  for (auto& [w, unused] : vocab) {
    const double pw = p.count(w) ? p[w] : 0.0;
    const double qw = q.count(w) ? q[w] : 0.0;
    const double m = 0.5 * (pw + qw);
    js += 0.5 * term(pw, m) + 0.5 * term(qw, m);
  }
  return js;
}

// ---------------------------------------------------------------------------
// Seeded generators for property tests
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd random_psd(Eigen::Index d, icat::DetRng& rng) {
  Eigen::MatrixXd b(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) b(i, j) = rng.uniform_pm1();
  return b.transpose() * b;
}

inline Eigen::VectorXd random_vector(Eigen::Index d, icat::DetRng& rng,
                                     double scale = 1.0) {
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = scale * rng.uniform_pm1();
  return v;
}

inline std::string random_words(icat::DetRng& rng, int min_tokens = 3,
                                int max_tokens = 14, int vocab = 4000) {
  const int n = min_tokens +
                static_cast<int>(rng.bounded(
                    static_cast<std::uint64_t>(max_tokens - min_tokens + 1)));
  std::string text;
  for (int i = 0; i < n; ++i) {
    if (i > 0) text += ' ';
    text += "w" + std::to_string(rng.bounded(static_cast<std::uint64_t>(vocab)));
  }
  return text;
}

inline icat::embed::TokenEmbeddingSet random_token_set(
    icat::DetRng& rng, std::uint64_t embedder_seed, std::size_t dim) {
  icat::embed::Embedder embedder(
      std::make_shared<icat::embed::LocalDeterministicEmbedder>(embedder_seed,
                                                                dim));
  return embedder.embed_tokens(random_words(rng));
}

}  // namespace oracle
