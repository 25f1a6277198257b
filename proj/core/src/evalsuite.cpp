#include "dial2vec/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "dial2vec/rng.hpp"

namespace dial2vec {

void LabeledEmbeddings::validate() const {
  const std::size_t m = static_cast<std::size_t>(vectors.rows());
  if (m < 2) throw std::invalid_argument("need at least 2 embeddings");
  if (labels.size() != m || ids.size() != m) {
    throw std::invalid_argument("labels/ids length mismatch");
  }
  for (const std::string& label : labels) {
    if (label.empty()) throw std::invalid_argument("empty label");
  }
}

int LabeledEmbeddings::distinct_labels() const {
  std::vector<std::string> sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  return static_cast<int>(sorted.size());
}

namespace {

double squared_distance(const Eigen::MatrixXd& points, int i,
                        const Eigen::RowVectorXd& center) {
  return (points.row(i) - center).squaredNorm();
}

double cosine_or_zero(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

Eigen::MatrixXd normalized_rows(const Eigen::MatrixXd& vectors) {
  Eigen::MatrixXd out = vectors;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double norm = out.row(r).norm();
    if (norm > 0.0) out.row(r) /= norm;
  }
  return out;
}

}  // namespace

std::vector<int> kmeans_pp(const Eigen::MatrixXd& points, int k,
                           std::uint64_t seed, int max_iters) {
  const int m = static_cast<int>(points.rows());
  if (k < 1 || k > m) {
    throw std::invalid_argument("kmeans: k must lie in [1, M]");
  }
  Rng rng(seed);

  // kmeans++ seeding: first center uniform, then proportional to squared
  // distance to the nearest chosen center
  Eigen::MatrixXd centers(k, points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng.next_below(m)));
  Eigen::VectorXd nearest_sq(m);
  for (int i = 0; i < m; ++i) {
    nearest_sq(i) = squared_distance(points, i, centers.row(0));
  }
  for (int c = 1; c < k; ++c) {
    const double total = nearest_sq.sum();
    int pick;
    if (total <= 0.0) {
      pick = static_cast<int>(rng.next_below(m));
    } else {
      const double target = rng.next_double() * total;
      double cumulative = 0.0;
      pick = m - 1;
      for (int i = 0; i < m; ++i) {
        cumulative += nearest_sq(i);
        if (cumulative >= target) {
          pick = i;
          break;
        }
      }
    }
    centers.row(c) = points.row(pick);
    for (int i = 0; i < m; ++i) {
      nearest_sq(i) = std::min(nearest_sq(i),
                               squared_distance(points, i, centers.row(c)));
    }
  }

  std::vector<int> assignments(m, 0);
  std::vector<int> counts(k, 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = iter == 0;
    for (int i = 0; i < m; ++i) {
      int best = 0;
      double best_dist = squared_distance(points, i, centers.row(0));
      for (int c = 1; c < k; ++c) {
        const double dist = squared_distance(points, i, centers.row(c));
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      if (assignments[i] != best) {
        assignments[i] = best;
        changed = true;
      }
    }
    if (!changed) break;

    centers.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < m; ++i) {
      centers.row(assignments[i]) += points.row(i);
      ++counts[assignments[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) centers.row(c) /= static_cast<double>(counts[c]);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      // reseed an empty cluster to the point farthest from its own centroid
      int farthest = 0;
      double farthest_dist = -1.0;
      for (int i = 0; i < m; ++i) {
        const double dist =
            squared_distance(points, i, centers.row(assignments[i]));
        if (dist > farthest_dist) {
          farthest_dist = dist;
          farthest = i;
        }
      }
      centers.row(c) = points.row(farthest);
    }
  }
  return assignments;
}

double purity(const std::vector<int>& assignments,
              const std::vector<std::string>& labels) {
  if (assignments.size() != labels.size()) {
    throw std::invalid_argument("purity: length mismatch");
  }
  if (assignments.empty()) throw std::invalid_argument("purity: empty input");
  std::map<int, std::map<std::string, int>> cluster_counts;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    ++cluster_counts[assignments[i]][labels[i]];
  }
  long majority_total = 0;
  for (const auto& [cluster, class_counts] : cluster_counts) {
    int best = 0;
    for (const auto& [label, count] : class_counts) best = std::max(best, count);
    majority_total += best;
  }
  return static_cast<double>(majority_total) /
         static_cast<double>(assignments.size());
}

namespace {

// 1-based ranks with ties averaged
std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t m = values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(m, 0.0);
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j + 1 < m && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& a,
                               const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length series");
  }
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean_a = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mean_b = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean_a;
    const double db = rb[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0) return std::nullopt;
  return cov / std::sqrt(var_a * var_b);
}

std::vector<int> relatedness_partners(int count, std::uint64_t seed) {
  if (count < 2) throw std::invalid_argument("need at least 2 items to pair");
  Rng rng(seed);
  std::vector<int> partners(count);
  for (int i = 0; i < count; ++i) {
    int j = static_cast<int>(rng.next_below(count - 1));
    if (j >= i) ++j;
    partners[i] = j;
  }
  return partners;
}

std::optional<double> semantic_relatedness(const LabeledEmbeddings& data,
                                           std::uint64_t seed,
                                           EvalDiagnostics* diagnostics) {
  data.validate();
  const int m = data.count();
  const std::vector<int> partners = relatedness_partners(m, seed);
  std::vector<double> scores(m), labels01(m);
  for (int i = 0; i < m; ++i) {
    scores[i] = cosine_or_zero(data.vectors.row(i), data.vectors.row(partners[i]));
    labels01[i] = data.labels[i] == data.labels[partners[i]] ? 1.0 : 0.0;
  }
  const std::optional<double> rho = spearman(scores, labels01);
  if (!rho && diagnostics) diagnostics->relatedness_degenerate = true;
  return rho;
}

double retrieval_map(const LabeledEmbeddings& data,
                     EvalDiagnostics* diagnostics) {
  data.validate();
  const int m = data.count();

  double ap_sum = 0.0;
  int scored_queries = 0;
  std::vector<int> candidates;
  candidates.reserve(m - 1);
  for (int query = 0; query < m; ++query) {
    bool any_relevant = false;
    for (int j = 0; j < m; ++j) {
      if (j != query && data.labels[j] == data.labels[query]) {
        any_relevant = true;
        break;
      }
    }
    if (!any_relevant) {
      if (diagnostics) ++diagnostics->retrieval_skipped_queries;
      continue;
    }
    candidates.clear();
    std::vector<double> scores(m, 0.0);
    for (int j = 0; j < m; ++j) {
      if (j == query) continue;
      candidates.push_back(j);
      scores[j] = cosine_or_zero(data.vectors.row(query), data.vectors.row(j));
    }
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return data.ids[a] < data.ids[b];
    });
    double precision_sum = 0.0;
    int relevant_seen = 0;
    for (std::size_t rank = 0; rank < candidates.size(); ++rank) {
      if (data.labels[candidates[rank]] == data.labels[query]) {
        ++relevant_seen;
        precision_sum += static_cast<double>(relevant_seen) /
                         static_cast<double>(rank + 1);
      }
    }
    ap_sum += precision_sum / static_cast<double>(relevant_seen);
    ++scored_queries;
  }
  if (scored_queries == 0) {
    throw std::runtime_error("retrieval MAP undefined: no query has a relevant candidate");
  }
  return ap_sum / static_cast<double>(scored_queries);
}

EvalPairs make_eval_pairs(const LabeledEmbeddings& data, std::uint64_t seed) {
  data.validate();
  const std::vector<int> partners = relatedness_partners(data.count(), seed);
  EvalPairs pairs;
  for (int i = 0; i < data.count(); ++i) {
    if (data.labels[i] == data.labels[partners[i]]) {
      pairs.positives.emplace_back(i, partners[i]);
    } else {
      pairs.negatives.emplace_back(i, partners[i]);
    }
  }
  return pairs;
}

double alignment(const LabeledEmbeddings& data,
                 const std::vector<std::pair<int, int>>& positive_pairs) {
  if (positive_pairs.empty()) {
    throw std::invalid_argument("alignment: need at least one positive pair");
  }
  const Eigen::MatrixXd normalized = normalized_rows(data.vectors);
  double sum = 0.0;
  for (const auto& [i, j] : positive_pairs) {
    sum += (normalized.row(i) - normalized.row(j)).squaredNorm();
  }
  return sum / static_cast<double>(positive_pairs.size());
}

std::optional<double> adjusted_alignment(const LabeledEmbeddings& data,
                                         const EvalPairs& pairs) {
  if (pairs.positives.empty() || pairs.negatives.empty()) return std::nullopt;
  return alignment(data, pairs.positives) - alignment(data, pairs.negatives);
}

double uniformity(const LabeledEmbeddings& data) {
  data.validate();
  const Eigen::MatrixXd normalized = normalized_rows(data.vectors);
  const int m = data.count();
  double sum = 0.0;
  long pairs = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      sum += std::exp(-2.0 * (normalized.row(i) - normalized.row(j)).squaredNorm());
      ++pairs;
    }
  }
  return std::log(sum / static_cast<double>(pairs));
}

namespace {

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.10g", v);
  return buffer;
}

void append_metric(std::ostringstream& out, const char* key,
                   const std::optional<double>& value) {
  out << key << "=" << (value ? format_double(*value) : "undefined") << "\n";
}

}  // namespace

std::string MetricReport::to_kv_text() const {
  std::ostringstream out;
  append_metric(out, "purity", purity);
  append_metric(out, "spearman", spearman);
  append_metric(out, "map", map);
  append_metric(out, "alignment", alignment);
  append_metric(out, "adjusted_alignment", adjusted_alignment);
  append_metric(out, "uniformity", uniformity);
  out << "num_embeddings=" << num_embeddings << "\n";
  out << "num_domains=" << num_domains << "\n";
  out << "kmeans_runs=" << kmeans_runs << "\n";
  out << "seed=" << seed << "\n";
  out << "pair_count=" << pair_count << "\n";
  out << "relatedness_degenerate=" << (relatedness_degenerate ? 1 : 0) << "\n";
  out << "retrieval_skipped_queries=" << retrieval_skipped_queries << "\n";
  return out.str();
}

MetricReport MetricReport::from_kv_text(const std::string& text) {
  MetricReport report;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const auto metric = [&]() -> std::optional<double> {
      if (value == "undefined") return std::nullopt;
      return std::stod(value);
    };
    if (key == "purity") report.purity = metric();
    else if (key == "spearman") report.spearman = metric();
    else if (key == "map") report.map = metric();
    else if (key == "alignment") report.alignment = metric();
    else if (key == "adjusted_alignment") report.adjusted_alignment = metric();
    else if (key == "uniformity") report.uniformity = metric();
    else if (key == "num_embeddings") report.num_embeddings = std::stoi(value);
    else if (key == "num_domains") report.num_domains = std::stoi(value);
    else if (key == "kmeans_runs") report.kmeans_runs = std::stoi(value);
    else if (key == "seed") report.seed = std::stoull(value);
    else if (key == "pair_count") report.pair_count = std::stoi(value);
    else if (key == "relatedness_degenerate") report.relatedness_degenerate = value == "1";
    else if (key == "retrieval_skipped_queries") report.retrieval_skipped_queries = std::stoi(value);
  }
  return report;
}

void save_report(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << report.to_kv_text();
  if (!out) throw std::runtime_error("report write failed: " + path.string());
}

MetricReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return MetricReport::from_kv_text(buffer.str());
}

MetricReport evaluate(const LabeledEmbeddings& data, const EvalConfig& config) {
  data.validate();
  MetricReport report;
  report.num_embeddings = data.count();
  report.num_domains = data.distinct_labels();
  report.kmeans_runs = config.kmeans_runs;
  report.seed = config.seed;
  report.pair_count = data.count();

  const int k = report.num_domains;
  if (k >= 1 && k <= data.count()) {
    double purity_sum = 0.0;
    for (int run = 0; run < config.kmeans_runs; ++run) {
      const std::vector<int> assignments =
          kmeans_pp(data.vectors, k, derive_seed(config.seed, "eval.kmeans", run),
                    config.kmeans_max_iters);
      purity_sum += purity(assignments, data.labels);
    }
    report.purity = purity_sum / static_cast<double>(config.kmeans_runs);
  }

  EvalDiagnostics diagnostics;
  const std::uint64_t pair_seed = derive_seed(config.seed, "eval.pairs");
  report.spearman = semantic_relatedness(data, pair_seed, &diagnostics);

  try {
    report.map = retrieval_map(data, &diagnostics);
  } catch (const std::runtime_error&) {
    // MAP undefined when no query has a relevant candidate
  }

  const EvalPairs pairs = make_eval_pairs(data, pair_seed);
  if (!pairs.positives.empty()) {
    report.alignment = alignment(data, pairs.positives);
  }
  report.adjusted_alignment = adjusted_alignment(data, pairs);
  report.uniformity = uniformity(data);

  report.relatedness_degenerate = diagnostics.relatedness_degenerate;
  report.retrieval_skipped_queries = diagnostics.retrieval_skipped_queries;
  return report;
}

}  // namespace dial2vec
