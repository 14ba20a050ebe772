#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "icat/embed.hpp"
#include "icat/gauss.hpp"

namespace icat::select {

enum class Category {
  compositional,
  comparison,
  inference,
  addition,
  multiplication,
  division,
  multi_step,
  table,
};

Category category_from_string(const std::string& name);
const char* to_string(Category category);

struct DecompositionStep {
  std::string sub_question;
  std::string sub_answer;
};

/// A transfer-dataset record. Exactly one of `decomposition` / `rationale`
/// is populated; that payload is the ability being transferred.
struct Exemplar {
  std::string id;
  std::string question;
  std::string answer;
  std::vector<DecompositionStep> decomposition;
  std::string rationale;
  std::set<Category> category;
  std::string source_dataset;

  bool has_decomposition() const { return !decomposition.empty(); }
  bool has_rationale() const { return !rationale.empty(); }
  void validate() const;  // throws SchemaError
};

enum class SelectionMethod {
  ftd,
  knn,
  mmr,
  random_static,
  random_dynamic,
  static_manifest,
};

const char* to_string(SelectionMethod method);
SelectionMethod selection_method_from_string(const std::string& name);

struct SelectionResult {
  SelectionMethod method = SelectionMethod::ftd;
  std::vector<std::string> chosen;  // exemplar ids, selection order
  std::vector<double> scores;       // aligned with chosen; empty for random/static
  int k = 0;
  std::optional<std::uint64_t> seed;
  std::map<std::string, int> per_source_quota;  // empty when unused
};

// Per-source caps for multi-source pools (the 4+2 recipe applied to dynamic
// selection): each source contributes at most its quota, picked by the
// method's own ranking, and the union is ordered by score.
using SourceQuota = std::map<std::string, int>;

struct FtdOptions {
  double ridge_scale = gauss::kDefaultRidgeScale;
  gauss::MeanNormMode mean_norm_mode = gauss::MeanNormMode::unsquared;
  SourceQuota per_source_quota;
};

/// Rank pool questions by d_FTD to the test question, ascending; ties by id.
SelectionResult select_ftd(const std::string& test_question,
                           const std::vector<Exemplar>& pool, int k,
                           const embed::Embedder& embedder,
                           const FtdOptions& options = {});

/// Rank by cosine similarity of sentence embeddings, descending; ties by id.
SelectionResult select_knn(const std::string& test_question,
                           const std::vector<Exemplar>& pool, int k,
                           const embed::Embedder& embedder,
                           const SourceQuota& per_source_quota = {});

inline constexpr double kDefaultMmrLambda = 0.7;

/// Greedy maximal-marginal-relevance: first pick is the most similar
/// candidate, every later pick maximizes
/// lambda*Sim(test, u) - (1-lambda)*max_{c in chosen} Sim(u, c).
SelectionResult select_mmr(const std::string& test_question,
                           const std::vector<Exemplar>& pool, int k,
                           double lambda, const embed::Embedder& embedder,
                           const SourceQuota& per_source_quota = {});

/// Uniform draw without replacement. Static mode depends only on the seed;
/// dynamic mode re-draws per test item from (seed, test_id).
SelectionResult select_random(const std::vector<Exemplar>& pool, int k,
                              std::uint64_t seed, bool dynamic,
                              const std::string& test_id = {},
                              const SourceQuota& per_source_quota = {});

/// Curated selection: exemplar ids in prompt order, optional per-source
/// quotas, and the category tags the chosen set must jointly cover.
struct StaticManifest {
  std::vector<std::string> ids;
  std::map<std::string, int> per_source_quota;
  std::set<Category> required_coverage;
};

StaticManifest load_static_manifest(const std::filesystem::path& path);

SelectionResult select_static(const StaticManifest& manifest,
                              const std::vector<Exemplar>& pool);

/// Base-2 Jensen-Shannon divergence between the unigram distributions of the
/// two corpora; ranges over [0, 1].
double js_divergence(const std::vector<std::string>& corpus_a,
                     const std::vector<std::string>& corpus_b,
                     const embed::TokenizationScheme& scheme = {});

// --- ranking cores (exposed so tests can drive them against oracles) -------

double cosine_similarity(const embed::EmbeddingVector& a,
                         const embed::EmbeddingVector& b);

/// d_FTD of each candidate set against the test set.
std::vector<double> ftd_scores(
    const embed::TokenEmbeddingSet& test,
    const std::vector<embed::TokenEmbeddingSet>& candidates,
    double ridge_scale = gauss::kDefaultRidgeScale,
    gauss::MeanNormMode mode = gauss::MeanNormMode::unsquared);

/// Greedy MMR over precomputed similarities. `sim_between(i, j)` is the
/// candidate-candidate similarity. Returns indices in pick order; ties fall
/// back to `ids` ascending (index order when ids is empty).
std::vector<std::size_t> mmr_greedy(const std::vector<double>& sim_to_query,
                                    const Eigen::MatrixXd& sim_between, int k,
                                    double lambda,
                                    const std::vector<std::string>& ids = {});

}  // namespace icat::select
