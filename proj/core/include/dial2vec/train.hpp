#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dial2vec/aggregate.hpp"
#include "dial2vec/corpus.hpp"
#include "dial2vec/encoder.hpp"
#include "dial2vec/evalsuite.hpp"
#include "dial2vec/selfguided.hpp"

namespace dial2vec {

struct TrainConfig {
  double tau = 0.2;
  int window_w = 10;
  int num_negatives = 5;
  int batch_size = 5;
  double learning_rate = 1e-3;  // desk-scale default; paper-scale 1e-5
  int epochs = 8;
  int eval_every = 8;  // optimizer steps between dev diagnostics; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

// Adam with bias correction. Frozen tensors are skipped entirely, so they
// stay bitwise unchanged across steps.
class AdamOptimizer {
 public:
  AdamOptimizer(const EncoderConfig& config, double learning_rate,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(EncoderParams& params, const GradientBuffer& grads);
  long steps_taken() const { return steps_; }

 private:
  EncoderConfig config_;
  double learning_rate_, beta1_, beta2_, eps_;
  long steps_ = 0;
  EncoderParams first_moment_;
  EncoderParams second_moment_;
};

struct EvalPoint {
  int step = 0;
  MetricReport metrics;
};

struct TrajectoryPoint {
  int step = 0;
  double loss = 0.0;
  std::optional<double> adjusted_alignment;
  std::optional<double> uniformity;
};

struct TrainReport {
  std::vector<double> loss_trace;          // one entry per optimizer step
  std::vector<EvalPoint> evals;            // dev metrics at each eval point
  std::vector<TrajectoryPoint> trajectory; // step 0 row records the start point
  long zero_pool_events = 0;
  double wall_clock_seconds = 0.0;  // never serialized; reports stay
                                    // byte-identical across reruns

  // key=value summary (config echo, loss endpoints, counters, per-eval metrics)
  std::string to_kv_text(const TrainConfig& config) const;
};

void save_train_report(const TrainReport& report, const TrainConfig& config,
                       const std::filesystem::path& path);
// CSV: step,loss,adjusted_alignment,uniformity
void save_trajectory_csv(const TrainReport& report, const std::filesystem::path& path);

struct TrainResult {
  EncoderParams params;
  TrainReport report;
};

// Shuffles the training dialogues each epoch, resamples negatives, and takes
// one Adam step per batch on the mean session loss. dev_corpus, when
// non-empty and labeled, is evaluated every eval_every steps (and once
// before training as the start point). Deterministic under seed.
TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus,
                  const Vocab& vocab, const EncoderConfig& encoder_config,
                  const TrainConfig& train_config,
                  EncoderParams initial_params);

TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus,
                  const Vocab& vocab, const EncoderConfig& encoder_config,
                  const TrainConfig& train_config);

// Adjusted alignment and uniformity of the model's embeddings on a labeled
// corpus (default pooling strategy).
struct DistributionDiagnostics {
  std::optional<double> adjusted_alignment;
  std::optional<double> uniformity;
};

DistributionDiagnostics diagnose(const EmbeddingModel& model, const Corpus& corpus,
                                 std::uint64_t seed);

// Builds labeled embeddings for evaluation; throws if any dialogue lacks a
// domain label.
LabeledEmbeddings labeled_embeddings(const EmbeddingModel& model,
                                     const Corpus& corpus, PoolStrategy strategy);
LabeledEmbeddings labeled_embeddings(const std::vector<DialogueEmbedding>& embeddings,
                                     const Corpus& corpus);

}  // namespace dial2vec
