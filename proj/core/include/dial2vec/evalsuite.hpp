#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dial2vec {

struct LabeledEmbeddings {
  Eigen::MatrixXd vectors;  // M x d
  std::vector<std::string> labels;
  std::vector<std::string> ids;

  int count() const { return static_cast<int>(vectors.rows()); }
  void validate() const;
  int distinct_labels() const;
};

// KMeans++ seeding followed by Lloyd iterations; empty clusters are reseeded
// to the point farthest from its centroid. Deterministic under seed.
std::vector<int> kmeans_pp(const Eigen::MatrixXd& points, int k,
                           std::uint64_t seed, int max_iters = 100);

// fraction of points falling in their cluster's majority class
double purity(const std::vector<int>& assignments,
              const std::vector<std::string>& labels);

// average-rank Spearman correlation; nullopt when either side has no
// variation (all ranks tie)
std::optional<double> spearman(const std::vector<double>& a,
                               const std::vector<double>& b);

// partner[i] = index of the dialogue paired with i, uniform over the others
std::vector<int> relatedness_partners(int count, std::uint64_t seed);

struct EvalDiagnostics {
  bool relatedness_degenerate = false;  // constant labels or constant scores
  int retrieval_skipped_queries = 0;    // queries with no relevant candidate
};

// Pairs each dialogue with a random partner, scores pairs by cosine, labels
// them by domain equality, and returns the Spearman correlation between the
// two. nullopt when the correlation is undefined.
std::optional<double> semantic_relatedness(const LabeledEmbeddings& data,
                                           std::uint64_t seed,
                                           EvalDiagnostics* diagnostics = nullptr);

// Mean average precision with every dialogue as a query against all others,
// ranked by descending cosine (ties by id). Relevance = shared domain.
double retrieval_map(const LabeledEmbeddings& data,
                     EvalDiagnostics* diagnostics = nullptr);

// Index pairs split by label equality.
struct EvalPairs {
  std::vector<std::pair<int, int>> positives;
  std::vector<std::pair<int, int>> negatives;
};

EvalPairs make_eval_pairs(const LabeledEmbeddings& data, std::uint64_t seed);

// Mean squared Euclidean distance over positive pairs, embeddings
// L2-normalized first.
double alignment(const LabeledEmbeddings& data,
                 const std::vector<std::pair<int, int>>& positive_pairs);

// alignment over positives minus the same expectation over negatives
std::optional<double> adjusted_alignment(const LabeledEmbeddings& data,
                                         const EvalPairs& pairs);

// log mean exp(-2 * squared distance) over all unordered distinct pairs of
// L2-normalized embeddings; always <= 0
double uniformity(const LabeledEmbeddings& data);

struct EvalConfig {
  std::uint64_t seed = 0;
  int kmeans_runs = 10;
  int kmeans_max_iters = 100;
};

struct MetricReport {
  std::optional<double> purity;
  std::optional<double> spearman;
  std::optional<double> map;
  std::optional<double> alignment;
  std::optional<double> adjusted_alignment;
  std::optional<double> uniformity;

  // protocol metadata
  int num_embeddings = 0;
  int num_domains = 0;
  int kmeans_runs = 0;
  std::uint64_t seed = 0;
  int pair_count = 0;
  bool relatedness_degenerate = false;
  int retrieval_skipped_queries = 0;

  std::string to_kv_text() const;
  static MetricReport from_kv_text(const std::string& text);
};

void save_report(const MetricReport& report, const std::filesystem::path& path);
MetricReport load_report(const std::filesystem::path& path);

// Full battery: purity averaged over kmeans_runs seeded restarts, semantic
// relatedness, retrieval MAP, and the distribution diagnostics. Metrics that
// are undefined for the input stay unset (partial reports allowed).
MetricReport evaluate(const LabeledEmbeddings& data, const EvalConfig& config);

}  // namespace dial2vec
