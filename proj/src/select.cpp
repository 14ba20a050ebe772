#include "icat/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "json.hpp"

namespace icat::select {

using nlohmann::json;

Category category_from_string(const std::string& name) {
  if (name == "compositional") return Category::compositional;
  if (name == "comparison") return Category::comparison;
  if (name == "inference") return Category::inference;
  if (name == "addition") return Category::addition;
  if (name == "multiplication") return Category::multiplication;
  if (name == "division") return Category::division;
  if (name == "multi-step" || name == "multi_step") return Category::multi_step;
  if (name == "table") return Category::table;
  throw SchemaError("unknown category tag: " + name);
}

const char* to_string(Category category) {
  switch (category) {
    case Category::compositional: return "compositional";
    case Category::comparison: return "comparison";
    case Category::inference: return "inference";
    case Category::addition: return "addition";
    case Category::multiplication: return "multiplication";
    case Category::division: return "division";
    case Category::multi_step: return "multi-step";
    case Category::table: return "table";
  }
  return "?";
}

const char* to_string(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::ftd: return "ftd";
    case SelectionMethod::knn: return "knn";
    case SelectionMethod::mmr: return "mmr";
    case SelectionMethod::random_static: return "random_static";
    case SelectionMethod::random_dynamic: return "random_dynamic";
    case SelectionMethod::static_manifest: return "static";
  }
  return "?";
}

SelectionMethod selection_method_from_string(const std::string& name) {
  if (name == "ftd") return SelectionMethod::ftd;
  if (name == "knn") return SelectionMethod::knn;
  if (name == "mmr") return SelectionMethod::mmr;
  if (name == "random_static") return SelectionMethod::random_static;
  if (name == "random_dynamic") return SelectionMethod::random_dynamic;
  if (name == "static") return SelectionMethod::static_manifest;
  throw ConfigError("unknown selection method: " + name);
}

void Exemplar::validate() const {
  if (id.empty()) throw SchemaError("exemplar: empty id");
  if (question.empty()) throw SchemaError("exemplar " + id + ": empty question");
  if (has_decomposition() == has_rationale()) {
    throw SchemaError("exemplar " + id +
                      ": ability payload must be exactly one of "
                      "decomposition or rationale");
  }
  for (const auto& step : decomposition) {
    if (step.sub_question.empty() || step.sub_answer.empty())
      throw SchemaError("exemplar " + id +
                        ": decomposition step with empty member");
  }
}

namespace {

void require_pool(const std::vector<Exemplar>& pool) {
  if (pool.empty()) throw EmptyPoolError("selection: empty exemplar pool");
}

// (score, id) ordering used everywhere; ascending==true for distances.
std::vector<std::size_t> order_by_score(const std::vector<Exemplar>& pool,
                                        const std::vector<double>& scores,
                                        bool ascending) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b])
      return ascending ? scores[a] < scores[b] : scores[a] > scores[b];
    return pool[a].id < pool[b].id;
  });
  return idx;
}

// Take the top `quota[source]` candidates per source (in `order`), then
// re-sort the union the same way. Sources with no quota entry contribute
// nothing when a quota map is given.
std::vector<std::size_t> apply_quota(const std::vector<Exemplar>& pool,
                                     const std::vector<std::size_t>& order,
                                     const SourceQuota& quota) {
  std::map<std::string, int> taken;
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    auto it = quota.find(pool[i].source_dataset);
    if (it == quota.end()) continue;
    if (taken[pool[i].source_dataset] >= it->second) continue;
    ++taken[pool[i].source_dataset];
    kept.push_back(i);
  }
  return kept;  // still in `order` order, i.e. already ranked
}

SelectionResult ranked_selection(SelectionMethod method,
                                 const std::vector<Exemplar>& pool,
                                 const std::vector<double>& scores,
                                 bool ascending, int k,
                                 const SourceQuota& quota) {
  auto order = order_by_score(pool, scores, ascending);
  if (!quota.empty()) {
    order = apply_quota(pool, order, quota);
    k = std::accumulate(quota.begin(), quota.end(), 0,
                        [](int acc, const auto& kv) { return acc + kv.second; });
  }

  SelectionResult result;
  result.method = method;
  result.k = k;
  result.per_source_quota = quota;
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k),
                                          order.size());
  for (std::size_t i = 0; i < take; ++i) {
    result.chosen.push_back(pool[order[i]].id);
    result.scores.push_back(scores[order[i]]);
  }
  return result;
}

}  // namespace

double cosine_similarity(const embed::EmbeddingVector& a,
                         const embed::EmbeddingVector& b) {
  if (a.dim() != b.dim())
    throw DimensionMismatchError("cosine_similarity: dim mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> ftd_scores(
    const embed::TokenEmbeddingSet& test,
    const std::vector<embed::TokenEmbeddingSet>& candidates,
    double ridge_scale, gauss::MeanNormMode mode) {
  const gauss::TokenGaussian target = gauss::norm_est(test, ridge_scale);
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& candidate : candidates) {
    const gauss::TokenGaussian source = gauss::norm_est(candidate, ridge_scale);
    scores.push_back(gauss::ftd(source, target, mode).total);
  }
  return scores;
}

SelectionResult select_ftd(const std::string& test_question,
                           const std::vector<Exemplar>& pool, int k,
                           const embed::Embedder& embedder,
                           const FtdOptions& options) {
  require_pool(pool);
  if (k < 1) throw ConfigError("select_ftd: k must be >= 1");

  const auto test_set = embedder.embed_tokens(test_question);
  std::vector<embed::TokenEmbeddingSet> candidate_sets;
  candidate_sets.reserve(pool.size());
  for (const auto& exemplar : pool)
    candidate_sets.push_back(embedder.embed_tokens(exemplar.question));

  const auto scores = ftd_scores(test_set, candidate_sets, options.ridge_scale,
                                 options.mean_norm_mode);
  return ranked_selection(SelectionMethod::ftd, pool, scores,
                          /*ascending=*/true, k, options.per_source_quota);
}

SelectionResult select_knn(const std::string& test_question,
                           const std::vector<Exemplar>& pool, int k,
                           const embed::Embedder& embedder,
                           const SourceQuota& per_source_quota) {
  require_pool(pool);
  if (k < 1) throw ConfigError("select_knn: k must be >= 1");

  const auto query = embedder.embed_sentence(test_question);
  std::vector<double> scores;
  scores.reserve(pool.size());
  for (const auto& exemplar : pool)
    scores.push_back(
        cosine_similarity(query, embedder.embed_sentence(exemplar.question)));

  return ranked_selection(SelectionMethod::knn, pool, scores,
                          /*ascending=*/false, k, per_source_quota);
}

std::vector<std::size_t> mmr_greedy(const std::vector<double>& sim_to_query,
                                    const Eigen::MatrixXd& sim_between, int k,
                                    double lambda,
                                    const std::vector<std::string>& ids) {
  const std::size_t n = sim_to_query.size();
  if (sim_between.rows() != static_cast<Eigen::Index>(n) ||
      sim_between.cols() != static_cast<Eigen::Index>(n))
    throw DimensionMismatchError("mmr_greedy: similarity matrix shape");

  auto id_less = [&](std::size_t a, std::size_t b) {
    if (!ids.empty()) return ids[a] < ids[b];
    return a < b;
  };

  std::vector<bool> used(n, false);
  std::vector<std::size_t> picked;
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), n);

  while (picked.size() < take) {
    bool have = false;
    std::size_t best = 0;
    double best_obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      double obj;
      if (picked.empty()) {
        obj = sim_to_query[i];  // first pick: plain similarity
      } else {
        double max_chosen = -std::numeric_limits<double>::infinity();
        for (std::size_t j : picked)
          max_chosen = std::max(
              max_chosen, sim_between(static_cast<Eigen::Index>(i),
                                      static_cast<Eigen::Index>(j)));
        obj = lambda * sim_to_query[i] - (1.0 - lambda) * max_chosen;
      }
      if (!have || obj > best_obj ||
          (obj == best_obj && id_less(i, best))) {
        have = true;
        best = i;
        best_obj = obj;
      }
    }
    used[best] = true;
    picked.push_back(best);
  }
  return picked;
}

SelectionResult select_mmr(const std::string& test_question,
                           const std::vector<Exemplar>& pool, int k,
                           double lambda, const embed::Embedder& embedder,
                           const SourceQuota& per_source_quota) {
  require_pool(pool);
  if (k < 1) throw ConfigError("select_mmr: k must be >= 1");
  if (lambda < 0.0 || lambda > 1.0)
    throw ConfigError("select_mmr: lambda must lie in [0, 1]");

  const auto query = embedder.embed_sentence(test_question);
  std::vector<embed::EmbeddingVector> vectors;
  vectors.reserve(pool.size());
  for (const auto& exemplar : pool)
    vectors.push_back(embedder.embed_sentence(exemplar.question));

  auto run_greedy = [&](const std::vector<std::size_t>& subset,
                        int want) -> std::vector<std::size_t> {
    std::vector<double> sim_to_query(subset.size());
    Eigen::MatrixXd sim_between(subset.size(), subset.size());
    std::vector<std::string> ids(subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) {
      sim_to_query[i] = cosine_similarity(query, vectors[subset[i]]);
      ids[i] = pool[subset[i]].id;
      for (std::size_t j = 0; j < subset.size(); ++j)
        sim_between(static_cast<Eigen::Index>(i),
                    static_cast<Eigen::Index>(j)) =
            cosine_similarity(vectors[subset[i]], vectors[subset[j]]);
    }
    auto local = mmr_greedy(sim_to_query, sim_between, want, lambda, ids);
    std::vector<std::size_t> global;
    global.reserve(local.size());
    for (std::size_t i : local) global.push_back(subset[i]);
    return global;
  };

  std::vector<std::size_t> picked;
  int k_effective = k;
  if (per_source_quota.empty()) {
    std::vector<std::size_t> all(pool.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    picked = run_greedy(all, k);
  } else {
    // Greedy within each source up to its quota, then merge by similarity.
    k_effective = 0;
    for (const auto& [source, quota] : per_source_quota) {
      k_effective += quota;
      std::vector<std::size_t> subset;
      for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].source_dataset == source) subset.push_back(i);
      auto part = run_greedy(subset, quota);
      picked.insert(picked.end(), part.begin(), part.end());
    }
    std::sort(picked.begin(), picked.end(), [&](std::size_t a, std::size_t b) {
      const double sa = cosine_similarity(query, vectors[a]);
      const double sb = cosine_similarity(query, vectors[b]);
      if (sa != sb) return sa > sb;
      return pool[a].id < pool[b].id;
    });
  }

  SelectionResult result;
  result.method = SelectionMethod::mmr;
  result.k = k_effective;
  result.per_source_quota = per_source_quota;
  for (std::size_t i : picked) {
    result.chosen.push_back(pool[i].id);
    result.scores.push_back(cosine_similarity(query, vectors[i]));
  }
  return result;
}

SelectionResult select_random(const std::vector<Exemplar>& pool, int k,
                              std::uint64_t seed, bool dynamic,
                              const std::string& test_id,
                              const SourceQuota& per_source_quota) {
  require_pool(pool);
  if (k < 1) throw ConfigError("select_random: k must be >= 1");
  if (dynamic && test_id.empty())
    throw ConfigError("select_random: dynamic mode requires a test_id");

  const std::uint64_t draw_seed =
      dynamic ? mix64(seed, fnv1a64(test_id)) : mix64(seed, 0x72616e64ull);
  DetRng rng(draw_seed);

  auto draw = [&](std::vector<std::size_t> indices,
                  int want) -> std::vector<std::size_t> {
    const auto take =
        std::min<std::size_t>(static_cast<std::size_t>(want), indices.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.bounded(indices.size() - i));
      std::swap(indices[i], indices[j]);
    }
    indices.resize(take);
    return indices;
  };

  std::vector<std::size_t> picked;
  int k_effective = k;
  if (per_source_quota.empty()) {
    std::vector<std::size_t> all(pool.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    picked = draw(std::move(all), k);
  } else {
    k_effective = 0;
    for (const auto& [source, quota] : per_source_quota) {
      k_effective += quota;
      std::vector<std::size_t> subset;
      for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].source_dataset == source) subset.push_back(i);
      auto part = draw(std::move(subset), quota);
      picked.insert(picked.end(), part.begin(), part.end());
    }
  }

  SelectionResult result;
  result.method =
      dynamic ? SelectionMethod::random_dynamic : SelectionMethod::random_static;
  result.k = k_effective;
  result.seed = seed;
  result.per_source_quota = per_source_quota;
  for (std::size_t i : picked) result.chosen.push_back(pool[i].id);
  return result;
}

StaticManifest load_static_manifest(const std::filesystem::path& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded())
    throw ParseError("static manifest: invalid JSON in " + path.string());

  StaticManifest manifest;
  if (!j.contains("ids")) throw SchemaError("static manifest: missing ids");
  manifest.ids = j["ids"].get<std::vector<std::string>>();
  if (j.contains("per_source_quota"))
    manifest.per_source_quota =
        j["per_source_quota"].get<std::map<std::string, int>>();
  if (j.contains("required_coverage"))
    for (const auto& tag : j["required_coverage"])
      manifest.required_coverage.insert(
          category_from_string(tag.get<std::string>()));
  return manifest;
}

SelectionResult select_static(const StaticManifest& manifest,
                              const std::vector<Exemplar>& pool) {
  require_pool(pool);

  std::unordered_map<std::string, const Exemplar*> by_id;
  for (const auto& exemplar : pool) by_id.emplace(exemplar.id, &exemplar);

  if (!manifest.per_source_quota.empty()) {
    const int quota_sum = std::accumulate(
        manifest.per_source_quota.begin(), manifest.per_source_quota.end(), 0,
        [](int acc, const auto& kv) { return acc + kv.second; });
    if (quota_sum != static_cast<int>(manifest.ids.size()))
      throw ConfigError("static manifest: quotas sum to " +
                        std::to_string(quota_sum) + " but manifest lists " +
                        std::to_string(manifest.ids.size()) + " ids");
  }

  std::set<Category> covered;
  std::map<std::string, int> per_source_count;
  SelectionResult result;
  result.method = SelectionMethod::static_manifest;
  result.k = static_cast<int>(manifest.ids.size());
  result.per_source_quota = manifest.per_source_quota;

  for (const auto& id : manifest.ids) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw UnknownExemplarIdError("static manifest: unknown exemplar id " + id);
    covered.insert(it->second->category.begin(), it->second->category.end());
    ++per_source_count[it->second->source_dataset];
    result.chosen.push_back(id);
  }

  if (!manifest.per_source_quota.empty()) {
    for (const auto& [source, quota] : manifest.per_source_quota) {
      if (per_source_count[source] != quota)
        throw ConfigError("static manifest: source " + source + " lists " +
                          std::to_string(per_source_count[source]) +
                          " ids but quota is " + std::to_string(quota));
    }
  }

  std::vector<std::string> missing;
  for (Category tag : manifest.required_coverage)
    if (covered.count(tag) == 0) missing.push_back(to_string(tag));
  if (!missing.empty()) {
    std::string joined;
    for (const auto& tag : missing)
      joined += (joined.empty() ? "" : ", ") + tag;
    throw CoverageUnsatisfiedError(
        "static manifest: required coverage missing tags: " + joined);
  }
  return result;
}

double js_divergence(const std::vector<std::string>& corpus_a,
                     const std::vector<std::string>& corpus_b,
                     const embed::TokenizationScheme& scheme) {
  auto distribution = [&](const std::vector<std::string>& corpus,
                          const char* which) {
    std::map<std::string, double> counts;
    double total = 0.0;
    for (const auto& text : corpus)
      for (auto& token : embed::tokenize_lenient(text, scheme)) {
        counts[std::move(token)] += 1.0;
        total += 1.0;
      }
    if (total == 0.0)
      throw EmptyCorpusError(std::string("js_divergence: corpus ") + which +
                             " has no tokens");
    for (auto& [token, count] : counts) count /= total;
    return counts;
  };

  const auto p = distribution(corpus_a, "A");
  const auto q = distribution(corpus_b, "B");

  // 0.5*KL(P||M) + 0.5*KL(Q||M) with M = (P+Q)/2, base-2 logs; zero-count
  // terms contribute 0.
  const double inv_log2 = 1.0 / std::log(2.0);
  auto kl_to_mixture = [&](const std::map<std::string, double>& dist,
                           const std::map<std::string, double>& other) {
    double kl = 0.0;
    for (const auto& [token, prob] : dist) {
      auto it = other.find(token);
      const double mix = 0.5 * (prob + (it == other.end() ? 0.0 : it->second));
      if (prob > 0.0 && mix != prob) kl += prob * std::log(prob / mix) * inv_log2;
    }
    return kl;
  };

  return 0.5 * kl_to_mixture(p, q) + 0.5 * kl_to_mixture(q, p);
}

}  // namespace icat::select
