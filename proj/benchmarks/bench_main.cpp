#include <benchmark/benchmark.h>

#include "dial2vec/corpus.hpp"
#include "dial2vec/encoder.hpp"
#include "dial2vec/evalsuite.hpp"
#include "dial2vec/selfguided.hpp"
#include "dial2vec/tokenizer.hpp"

namespace {

using namespace dial2vec;

struct BenchSetup {
  Corpus corpus;
  Vocab vocab;
  EncoderConfig config;
  EncoderParams params;
  UtterancePool pool;

  BenchSetup() {
    SyntheticSpec spec;  // desk-scale defaults: 3 domains x 40 dialogues
    corpus = generate_synthetic(spec, 1);
    vocab = build_vocab(corpus, 1);
    config.vocab_size = vocab.size();
    params = init_params(config, 1);
    pool = build_utterance_pool(corpus);
  }
};

BenchSetup& setup() {
  static BenchSetup instance;
  return instance;
}

void bench_encode_forward(benchmark::State& state) {
  BenchSetup& s = setup();
  const TokenizedDialogue tok =
      tokenize_dialogue(s.corpus.dialogues[0], s.vocab, s.config.max_len);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_dialogue(tok, s.params, s.config));
  }
}
BENCHMARK(bench_encode_forward);

void bench_session_loss_forward(benchmark::State& state) {
  BenchSetup& s = setup();
  Rng rng(3);
  const SampleSet samples = build_sample_set(s.corpus.dialogues[0], s.pool, 5, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(session_loss_value(
        s.params, s.config, s.vocab, samples, SessionLossConfig{10, 0.2}));
  }
}
BENCHMARK(bench_session_loss_forward);

void bench_session_loss_backward(benchmark::State& state) {
  BenchSetup& s = setup();
  Rng rng(3);
  const SampleSet samples = build_sample_set(s.corpus.dialogues[0], s.pool, 5, rng);
  for (auto _ : state) {
    ag::Tape tape;
    const ParamVars vars = bind_params(tape, s.params);
    const ag::Var loss = session_loss(tape, vars, s.config, s.vocab, samples,
                                      SessionLossConfig{10, 0.2});
    tape.backward(loss);
    GradientBuffer grads = zeros_like(s.config);
    accumulate_gradients(vars, s.config, grads, 1.0);
    benchmark::DoNotOptimize(grads.token_table.sum());
  }
}
BENCHMARK(bench_session_loss_backward);

void bench_kmeans(benchmark::State& state) {
  Rng rng(7);
  Eigen::MatrixXd points(120, 64);
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
      points(r, c) = rng.next_normal();
    }
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(kmeans_pp(points, 3, 1));
  }
}
BENCHMARK(bench_kmeans);

void bench_retrieval_map(benchmark::State& state) {
  Rng rng(9);
  LabeledEmbeddings data;
  data.vectors.resize(120, 64);
  for (Eigen::Index r = 0; r < data.vectors.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.vectors.cols(); ++c) {
      data.vectors(r, c) = rng.next_normal();
    }
    data.labels.push_back(r % 3 == 0 ? "A" : (r % 3 == 1 ? "B" : "C"));
    data.ids.push_back("d" + std::to_string(r));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(retrieval_map(data));
  }
}
BENCHMARK(bench_retrieval_map);

}  // namespace

BENCHMARK_MAIN();
