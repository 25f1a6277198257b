#include "dial2vec/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace dial2vec {

void TrainConfig::validate() const {
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  if (window_w < 0) throw std::invalid_argument("window_w must be >= 0");
  if (num_negatives < 1) throw std::invalid_argument("num_negatives must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
}

AdamOptimizer::AdamOptimizer(const EncoderConfig& config, double learning_rate,
                             double beta1, double beta2, double eps)
    : config_(config),
      learning_rate_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      first_moment_(zeros_like(config)),
      second_moment_(zeros_like(config)) {}

void AdamOptimizer::step(EncoderParams& params, const GradientBuffer& grads) {
  ++steps_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));

  // Walk the three buffers in lockstep via the canonical tensor order.
  std::vector<ag::Matrix*> param_tensors, m_tensors, v_tensors;
  std::vector<const ag::Matrix*> grad_tensors;
  std::vector<int> layer_indices;
  params.for_each_tensor([&](const std::string&, ag::Matrix& m, int layer) {
    param_tensors.push_back(&m);
    layer_indices.push_back(layer);
  });
  grads.for_each_tensor([&](const std::string&, const ag::Matrix& m, int) {
    grad_tensors.push_back(&m);
  });
  first_moment_.for_each_tensor(
      [&](const std::string&, ag::Matrix& m, int) { m_tensors.push_back(&m); });
  second_moment_.for_each_tensor(
      [&](const std::string&, ag::Matrix& m, int) { v_tensors.push_back(&m); });

  for (std::size_t t = 0; t < param_tensors.size(); ++t) {
    if (tensor_frozen(config_, layer_indices[t])) continue;
    ag::Matrix& theta = *param_tensors[t];
    const ag::Matrix& g = *grad_tensors[t];
    ag::Matrix& m = *m_tensors[t];
    ag::Matrix& v = *v_tensors[t];
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    const ag::Matrix m_hat = m / bias1;
    const ag::Matrix v_hat = v / bias2;
    theta.array() -=
        learning_rate_ * m_hat.array() / (v_hat.array().sqrt() + eps_);
  }
}

LabeledEmbeddings labeled_embeddings(const std::vector<DialogueEmbedding>& embeddings,
                                     const Corpus& corpus) {
  std::unordered_map<std::string, const Dialogue*> by_id;
  for (const Dialogue& dialogue : corpus.dialogues) {
    by_id[dialogue.id] = &dialogue;
  }
  if (embeddings.empty()) throw std::invalid_argument("no embeddings");
  LabeledEmbeddings data;
  data.vectors.resize(static_cast<Eigen::Index>(embeddings.size()),
                      embeddings.front().vector.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto it = by_id.find(embeddings[i].id);
    if (it == by_id.end()) {
      throw std::runtime_error("embedding id not in corpus: " + embeddings[i].id);
    }
    if (!it->second->domain) {
      throw std::runtime_error("dialogue lacks a domain label: " + embeddings[i].id);
    }
    data.vectors.row(static_cast<Eigen::Index>(i)) = embeddings[i].vector;
    data.labels.push_back(*it->second->domain);
    data.ids.push_back(embeddings[i].id);
  }
  return data;
}

LabeledEmbeddings labeled_embeddings(const EmbeddingModel& model,
                                     const Corpus& corpus, PoolStrategy strategy) {
  return labeled_embeddings(embed_corpus(model, corpus, strategy), corpus);
}

DistributionDiagnostics diagnose(const EmbeddingModel& model, const Corpus& corpus,
                                 std::uint64_t seed) {
  const LabeledEmbeddings data =
      labeled_embeddings(model, corpus, PoolStrategy::Interlocutor);
  const EvalPairs pairs = make_eval_pairs(data, derive_seed(seed, "eval.pairs"));
  DistributionDiagnostics result;
  result.adjusted_alignment = adjusted_alignment(data, pairs);
  result.uniformity = uniformity(data);
  return result;
}

namespace {

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.10g", v);
  return buffer;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : "undefined";
}

}  // namespace

std::string TrainReport::to_kv_text(const TrainConfig& config) const {
  std::ostringstream out;
  out << "tau=" << format_double(config.tau) << "\n";
  out << "window_w=" << config.window_w << "\n";
  out << "num_negatives=" << config.num_negatives << "\n";
  out << "batch_size=" << config.batch_size << "\n";
  out << "learning_rate=" << format_double(config.learning_rate) << "\n";
  out << "epochs=" << config.epochs << "\n";
  out << "eval_every=" << config.eval_every << "\n";
  out << "seed=" << config.seed << "\n";
  out << "steps=" << loss_trace.size() << "\n";
  if (!loss_trace.empty()) {
    out << "first_loss=" << format_double(loss_trace.front()) << "\n";
    out << "final_loss=" << format_double(loss_trace.back()) << "\n";
  }
  out << "zero_pool_events=" << zero_pool_events << "\n";
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const std::string prefix = "eval" + std::to_string(i) + ".";
    out << prefix << "step=" << evals[i].step << "\n";
    out << prefix << "purity=" << format_optional(evals[i].metrics.purity) << "\n";
    out << prefix << "spearman=" << format_optional(evals[i].metrics.spearman) << "\n";
    out << prefix << "map=" << format_optional(evals[i].metrics.map) << "\n";
    out << prefix << "adjusted_alignment="
        << format_optional(evals[i].metrics.adjusted_alignment) << "\n";
    out << prefix << "uniformity=" << format_optional(evals[i].metrics.uniformity)
        << "\n";
  }
  return out.str();
}

void save_train_report(const TrainReport& report, const TrainConfig& config,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write train report: " + path.string());
  out << report.to_kv_text(config);
  if (!out) throw std::runtime_error("train report write failed: " + path.string());
}

void save_trajectory_csv(const TrainReport& report,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trajectory: " + path.string());
  out << "step,loss,adjusted_alignment,uniformity\n";
  for (const TrajectoryPoint& point : report.trajectory) {
    out << point.step << "," << format_double(point.loss) << ","
        << format_optional(point.adjusted_alignment) << ","
        << format_optional(point.uniformity) << "\n";
  }
  if (!out) throw std::runtime_error("trajectory write failed: " + path.string());
}

TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus,
                  const Vocab& vocab, const EncoderConfig& encoder_config,
                  const TrainConfig& train_config, EncoderParams initial_params) {
  encoder_config.validate();
  train_config.validate();
  if (train_corpus.size() < static_cast<std::size_t>(train_config.batch_size)) {
    throw std::invalid_argument("corpus smaller than one batch");
  }
  const auto start_time = std::chrono::steady_clock::now();

  TrainResult result;
  result.params = std::move(initial_params);
  TrainReport& report = result.report;

  const UtterancePool pool = build_utterance_pool(train_corpus);
  AdamOptimizer optimizer(encoder_config, train_config.learning_rate);
  Rng sampling_rng(derive_seed(train_config.seed, "train.sampling"));
  Rng dropout_rng(derive_seed(train_config.seed, "train.dropout"));
  Rng* dropout = encoder_config.dropout > 0.0 ? &dropout_rng : nullptr;
  ZeroPoolStats zero_pool;

  const SessionLossConfig loss_config{train_config.window_w, train_config.tau};

  const bool dev_available = !dev_corpus.dialogues.empty();
  const auto run_eval = [&](int step, double loss) {
    if (!dev_available) return;
    EmbeddingModel model{encoder_config, result.params, vocab};
    const LabeledEmbeddings data =
        labeled_embeddings(model, dev_corpus, PoolStrategy::Interlocutor);
    EvalConfig eval_config;
    eval_config.seed = derive_seed(train_config.seed, "train.eval");
    const MetricReport metrics = evaluate(data, eval_config);
    report.evals.push_back(EvalPoint{step, metrics});
    report.trajectory.push_back(TrajectoryPoint{
        step, loss, metrics.adjusted_alignment, metrics.uniformity});
  };

  // start point: the untrained model's distribution
  run_eval(0, 0.0);

  std::vector<std::size_t> order(train_corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  int step = 0;
  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    sampling_rng.shuffle(order);
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end = std::min(
          cursor + static_cast<std::size_t>(train_config.batch_size), order.size());
      const double batch_weight = 1.0 / static_cast<double>(batch_end - cursor);

      GradientBuffer grads = zeros_like(encoder_config);
      double batch_loss = 0.0;
      for (; cursor < batch_end; ++cursor) {
        const Dialogue& dialogue = train_corpus.dialogues[order[cursor]];
        const SampleSet samples = build_sample_set(
            dialogue, pool, train_config.num_negatives, sampling_rng);
        ag::Tape tape;
        const ParamVars vars = bind_params(tape, result.params);
        double loss_value = std::numeric_limits<double>::quiet_NaN();
        ag::Var loss;
        try {
          loss = session_loss(tape, vars, encoder_config, vocab, samples,
                              loss_config, &zero_pool, dropout);
          loss_value = loss.scalar();
        } catch (const std::runtime_error& e) {
          throw std::runtime_error("dialogue '" + dialogue.id + "': " + e.what());
        }
        if (!std::isfinite(loss_value)) {
          throw std::runtime_error("non-finite loss at dialogue '" + dialogue.id +
                                   "'");
        }
        batch_loss += batch_weight * loss_value;
        tape.backward(loss);
        accumulate_gradients(vars, encoder_config, grads, batch_weight);
      }

      optimizer.step(result.params, grads);
      ++step;
      report.loss_trace.push_back(batch_loss);
      if (train_config.eval_every > 0 && step % train_config.eval_every == 0) {
        run_eval(step, batch_loss);
      }
    }
  }

  // closing eval unless the last step already produced one
  if (step > 0 &&
      (train_config.eval_every == 0 || step % train_config.eval_every != 0)) {
    run_eval(step, report.loss_trace.back());
  }

  report.zero_pool_events = zero_pool.events;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time)
          .count();
  return result;
}

TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus,
                  const Vocab& vocab, const EncoderConfig& encoder_config,
                  const TrainConfig& train_config) {
  return train(train_corpus, dev_corpus, vocab, encoder_config, train_config,
               init_params(encoder_config, derive_seed(train_config.seed, "init")));
}

}  // namespace dial2vec
