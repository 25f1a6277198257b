// dial2vec command-line driver: gen-corpus | train | embed | eval | diagnose
//
// Every run prints its resolved configuration to stdout. Every artifact file
// gains a sibling <file>.meta recording the inputs and seeds that produced
// it. All randomness derives from the single --seed flag.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dial2vec/aggregate.hpp"
#include "dial2vec/corpus.hpp"
#include "dial2vec/encoder.hpp"
#include "dial2vec/evalsuite.hpp"
#include "dial2vec/tokenizer.hpp"
#include "dial2vec/train.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dial2vec;

struct MetaWriter {
  std::string subcommand;
  std::string resolved_config;

  void write(const fs::path& artifact) const {
    std::ofstream out(artifact.string() + ".meta", std::ios::binary);
    out << "artifact=" << artifact.filename().string() << "\n";
    out << "subcommand=" << subcommand << "\n";
    out << resolved_config;
  }
};

std::string resolved_config_text(const CLI::App& app) {
  return app.config_to_str(true, false);
}

// Applies a flat key=value file to a subcommand's options. Keys name long
// flags without the leading dashes; flags given on the command line win.
void apply_config_file(CLI::App* cmd, const std::string& config_path) {
  if (config_path.empty()) return;
  std::ifstream in(config_path);
  if (!in) {
    throw std::runtime_error("cannot open config file: " + config_path);
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos || line[begin] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(config_path + ":" + std::to_string(line_no) +
                               ": expected key=value");
    }
    const auto strip = [](std::string text) {
      const auto first = text.find_first_not_of(" \t\r");
      const auto last = text.find_last_not_of(" \t\r");
      return first == std::string::npos ? std::string{}
                                        : text.substr(first, last - first + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    CLI::Option* option = cmd->get_option_no_throw("--" + key);
    if (option == nullptr) {
      throw std::runtime_error(config_path + ":" + std::to_string(line_no) +
                               ": unknown config key '" + key + "'");
    }
    if (option->count() > 0) continue;  // command line wins
    option->add_result(value);
    option->run_callback();
  }
}

void print_resolved_config(const CLI::App& app) {
  std::cout << "# resolved config (" << app.get_name() << ")\n"
            << resolved_config_text(app) << std::flush;
}

struct SplitChoice {
  std::string name = "test";

  const Corpus& pick(const CorpusSplits& splits, const Corpus& full) const {
    if (name == "train") return splits.train;
    if (name == "dev") return splits.dev;
    if (name == "test") return splits.test;
    if (name == "all") return full;
    throw CLI::ValidationError("--split", "unknown split: " + name);
  }
};

struct CommonOptions {
  std::uint64_t seed = 0;
  double ratio_train = 0.8;
  double ratio_dev = 0.1;
  double ratio_test = 0.1;
};

void add_split_flags(CLI::App* cmd, CommonOptions& options) {
  cmd->add_option("--ratio-train", options.ratio_train, "train split fraction")
      ->capture_default_str();
  cmd->add_option("--ratio-dev", options.ratio_dev, "dev split fraction")
      ->capture_default_str();
  cmd->add_option("--ratio-test", options.ratio_test, "test split fraction")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-guided contrastive dialogue embeddings"};
  app.require_subcommand(1);
  app.fallthrough();

  std::map<CLI::App*, std::string> config_paths;
  const auto add_config_flag = [&config_paths](CLI::App* cmd) {
    cmd->add_option("--config", config_paths[cmd],
                    "key=value configuration file");
  };

  // ---------------------------------------------------------------- gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "write a synthetic JSONL corpus");
  add_config_flag(gen);
  SyntheticSpec synth;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "corpus.jsonl";
  gen->add_option("--domains", synth.domains, "number of domains")
      ->capture_default_str();
  gen->add_option("--per-domain", synth.dialogues_per_domain,
                  "dialogues per domain")
      ->capture_default_str();
  gen->add_option("--turns", synth.turns_per_dialogue, "turns per dialogue")
      ->capture_default_str();
  gen->add_option("--tokens-per-turn", synth.tokens_per_turn, "tokens per turn")
      ->capture_default_str();
  gen->add_option("--shared-frac", synth.shared_vocab_fraction,
                  "fraction of tokens drawn from the shared vocabulary")
      ->capture_default_str();
  gen->add_option("--domain-keywords", synth.keywords_per_domain,
                  "keyword vocabulary size per domain")
      ->capture_default_str();
  gen->add_option("--shared-vocab", synth.shared_vocab_size,
                  "shared chit-chat vocabulary size")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "generation seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output JSONL path")->capture_default_str();

  // --------------------------------------------------------------------- train
  auto* train_cmd = app.add_subcommand("train", "train an encoder on a corpus");
  add_config_flag(train_cmd);
  std::string train_corpus_path;
  std::string train_out_dir = "run";
  CommonOptions train_common;
  EncoderConfig encoder_config;  // desk-scale defaults
  TrainConfig train_config;
  int min_freq = 1;
  train_cmd->add_option("--corpus", train_corpus_path, "JSONL corpus")
      ->required();
  train_cmd->add_option("--out-dir", train_out_dir,
                        "output directory for checkpoint and reports")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_common.seed, "master seed")
      ->capture_default_str();
  train_cmd->add_option("--tau", train_config.tau, "NT-Xent temperature")
      ->capture_default_str();
  train_cmd->add_option("--window", train_config.window_w,
                        "turn-distance window for correlations")
      ->capture_default_str();
  train_cmd->add_option("--negatives", train_config.num_negatives,
                        "negatives per positive")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", train_config.batch_size, "batch size")
      ->capture_default_str();
  train_cmd->add_option("--lr", train_config.learning_rate, "Adam learning rate")
      ->capture_default_str();
  train_cmd->add_option("--epochs", train_config.epochs, "training epochs")
      ->capture_default_str();
  train_cmd->add_option("--eval-every", train_config.eval_every,
                        "steps between dev evaluations (0 disables)")
      ->capture_default_str();
  train_cmd->add_option("--min-freq", min_freq, "vocabulary frequency floor")
      ->capture_default_str();
  train_cmd->add_option("--d-model", encoder_config.d_model, "embedding width")
      ->capture_default_str();
  train_cmd->add_option("--layers", encoder_config.layers, "encoder layers")
      ->capture_default_str();
  train_cmd->add_option("--heads", encoder_config.heads, "attention heads")
      ->capture_default_str();
  train_cmd->add_option("--ffn", encoder_config.ffn_width, "feed-forward width")
      ->capture_default_str();
  train_cmd->add_option("--max-len", encoder_config.max_len,
                        "maximum sequence length")
      ->capture_default_str();
  train_cmd->add_option("--turn-vocab", encoder_config.turn_vocab,
                        "turn embedding table size")
      ->capture_default_str();
  train_cmd->add_option("--frozen-layers", encoder_config.frozen_layers,
                        "bottom layers (and tables) to freeze")
      ->capture_default_str();
  train_cmd->add_option("--dropout", encoder_config.dropout, "dropout fraction")
      ->capture_default_str();
  add_split_flags(train_cmd, train_common);

  // --------------------------------------------------------------------- embed
  auto* embed_cmd = app.add_subcommand("embed", "write dialogue embeddings");
  add_config_flag(embed_cmd);
  std::string embed_corpus_path, embed_checkpoint, embed_vocab;
  std::string embed_out = "embeddings.txt";
  std::string embed_strategy = "interlocutor";
  SplitChoice embed_split;
  CommonOptions embed_common;
  embed_cmd->add_option("--corpus", embed_corpus_path, "JSONL corpus")->required();
  embed_cmd->add_option("--checkpoint", embed_checkpoint, "encoder checkpoint")
      ->required();
  embed_cmd->add_option("--vocab", embed_vocab, "vocabulary file")->required();
  embed_cmd->add_option("--split", embed_split.name, "train|dev|test|all")
      ->capture_default_str();
  embed_cmd
      ->add_option("--strategy", embed_strategy,
                   "average|interlocutor|p1|p2 pooling")
      ->capture_default_str();
  embed_cmd->add_option("--seed", embed_common.seed,
                        "master seed (must match training for identical splits)")
      ->capture_default_str();
  embed_cmd->add_option("--out", embed_out, "output embedding file")
      ->capture_default_str();
  add_split_flags(embed_cmd, embed_common);

  // ---------------------------------------------------------------------- eval
  auto* eval_cmd = app.add_subcommand("eval", "score an embedding file");
  add_config_flag(eval_cmd);
  std::string eval_embeddings, eval_corpus_path;
  std::string eval_out = "report.txt";
  std::uint64_t eval_seed = 0;
  int eval_kmeans_runs = 10;
  eval_cmd->add_option("--embeddings", eval_embeddings, "embedding file")
      ->required();
  eval_cmd->add_option("--corpus", eval_corpus_path,
                       "JSONL corpus supplying domain labels")
      ->required();
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed")
      ->capture_default_str();
  eval_cmd->add_option("--kmeans-runs", eval_kmeans_runs,
                       "independent clustering restarts to average")
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "metric report path")
      ->capture_default_str();

  // ------------------------------------------------------------------ diagnose
  auto* diag_cmd =
      app.add_subcommand("diagnose", "distribution diagnostics of a checkpoint");
  add_config_flag(diag_cmd);
  std::string diag_corpus_path, diag_checkpoint, diag_vocab;
  std::string diag_out = "diagnostics.txt";
  SplitChoice diag_split{"dev"};
  CommonOptions diag_common;
  diag_cmd->add_option("--corpus", diag_corpus_path, "JSONL corpus")->required();
  diag_cmd->add_option("--checkpoint", diag_checkpoint, "encoder checkpoint")
      ->required();
  diag_cmd->add_option("--vocab", diag_vocab, "vocabulary file")->required();
  diag_cmd->add_option("--split", diag_split.name, "train|dev|test|all")
      ->capture_default_str();
  diag_cmd->add_option("--seed", diag_common.seed, "master seed")
      ->capture_default_str();
  diag_cmd->add_option("--out", diag_out, "diagnostics output path")
      ->capture_default_str();
  add_split_flags(diag_cmd, diag_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help
    }
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    for (CLI::App* cmd : app.get_subcommands()) {
      apply_config_file(cmd, config_paths[cmd]);
    }
    if (gen->parsed()) {
      print_resolved_config(*gen);
      const Corpus corpus = generate_synthetic(synth, gen_seed);
      save_corpus(corpus, gen_out);
      MetaWriter{"gen-corpus", resolved_config_text(*gen)}.write(gen_out);
      std::cout << "wrote " << gen_out << " (" << corpus.size() << " dialogues)\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      print_resolved_config(*train_cmd);
      const auto started = std::chrono::steady_clock::now();
      const Corpus corpus = load_corpus(train_corpus_path);
      const CorpusSplits splits = split_corpus(
          corpus,
          {train_common.ratio_train, train_common.ratio_dev, train_common.ratio_test},
          train_common.seed);
      const Vocab vocab = build_vocab(splits.train, min_freq);
      encoder_config.vocab_size = vocab.size();
      train_config.seed = train_common.seed;
      encoder_config.validate();
      train_config.validate();

      const TrainResult result =
          train(splits.train, splits.dev, vocab, encoder_config, train_config);

      fs::create_directories(train_out_dir);
      const fs::path dir(train_out_dir);
      const MetaWriter meta{"train", resolved_config_text(*train_cmd)};
      save_checkpoint({encoder_config, result.params}, dir / "checkpoint.bin");
      meta.write(dir / "checkpoint.bin");
      vocab.save(dir / "vocab.txt");
      meta.write(dir / "vocab.txt");
      save_train_report(result.report, train_config, dir / "train_report.txt");
      meta.write(dir / "train_report.txt");
      save_trajectory_csv(result.report, dir / "trajectory.csv");
      meta.write(dir / "trajectory.csv");

      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
              .count();
      std::cerr << "train wall clock: " << elapsed << " s\n";
      std::cout << result.report.to_kv_text(train_config);
      std::cout << "wrote " << (dir / "checkpoint.bin").string() << "\n";
      return 0;
    }

    if (embed_cmd->parsed()) {
      print_resolved_config(*embed_cmd);
      const Corpus corpus = load_corpus(embed_corpus_path);
      const CorpusSplits splits = split_corpus(
          corpus,
          {embed_common.ratio_train, embed_common.ratio_dev, embed_common.ratio_test},
          embed_common.seed);
      const Corpus& subset = embed_split.pick(splits, corpus);
      const Checkpoint checkpoint = load_checkpoint(embed_checkpoint);
      EmbeddingModel model{checkpoint.config, checkpoint.params,
                           Vocab::load(embed_vocab)};
      if (model.vocab.size() != model.config.vocab_size) {
        throw std::runtime_error("vocab file does not match checkpoint");
      }
      const std::vector<DialogueEmbedding> embeddings =
          embed_corpus(model, subset, pool_strategy_from_string(embed_strategy));
      export_embeddings(embeddings, embed_out);
      MetaWriter{"embed", resolved_config_text(*embed_cmd)}.write(embed_out);
      std::cout << "wrote " << embed_out << " (" << embeddings.size()
                << " embeddings)\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      print_resolved_config(*eval_cmd);
      const std::vector<DialogueEmbedding> embeddings =
          import_embeddings(eval_embeddings);
      const Corpus corpus = load_corpus(eval_corpus_path);
      const LabeledEmbeddings data = labeled_embeddings(embeddings, corpus);
      EvalConfig config;
      config.seed = eval_seed;
      config.kmeans_runs = eval_kmeans_runs;
      const MetricReport report = evaluate(data, config);
      save_report(report, eval_out);
      MetaWriter{"eval", resolved_config_text(*eval_cmd)}.write(eval_out);
      std::cout << report.to_kv_text();
      return 0;
    }

    if (diag_cmd->parsed()) {
      print_resolved_config(*diag_cmd);
      const Corpus corpus = load_corpus(diag_corpus_path);
      const CorpusSplits splits = split_corpus(
          corpus,
          {diag_common.ratio_train, diag_common.ratio_dev, diag_common.ratio_test},
          diag_common.seed);
      const Corpus& subset = diag_split.pick(splits, corpus);
      const Checkpoint checkpoint = load_checkpoint(diag_checkpoint);
      EmbeddingModel model{checkpoint.config, checkpoint.params,
                           Vocab::load(diag_vocab)};
      const DistributionDiagnostics diagnostics =
          diagnose(model, subset, diag_common.seed);

      const auto format = [](const std::optional<double>& v) -> std::string {
        if (!v) return "undefined";
        char buffer[64];
        std::snprintf(buffer, sizeof(buffer), "%.10g", *v);
        return buffer;
      };
      std::ostringstream text;
      text << "adjusted_alignment=" << format(diagnostics.adjusted_alignment)
           << "\n";
      text << "uniformity=" << format(diagnostics.uniformity) << "\n";
      std::ofstream out(diag_out, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + diag_out);
      out << text.str();
      MetaWriter{"diagnose", resolved_config_text(*diag_cmd)}.write(diag_out);
      std::cout << text.str();
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid-input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
