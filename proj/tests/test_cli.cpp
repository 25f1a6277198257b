#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "dial2vec/aggregate.hpp"
#include "dial2vec/corpus.hpp"
#include "dial2vec/evalsuite.hpp"
#include "testutil.hpp"

using namespace dial2vec;

namespace {

const char* kCli = DIAL2VEC_CLI_PATH;

int run(const std::string& args, const std::filesystem::path& log) {
  const std::string command =
      std::string(kCli) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(command.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("cli pipeline: gen-corpus, train, embed, eval, diagnose") {
  testutil::TempDir dir("cli");
  const auto corpus_path = dir.path() / "corpus.jsonl";
  const auto log = dir.path() / "log.txt";

  // small corpus and model keep this test fast
  REQUIRE(run("gen-corpus --domains 2 --per-domain 10 --turns 4"
              " --tokens-per-turn 4 --shared-frac 0.2 --seed 1 --out " +
                  corpus_path.string(),
              log) == 0);
  CHECK(slurp(log).find("resolved config") != std::string::npos);
  CHECK(std::filesystem::exists(corpus_path));
  CHECK(std::filesystem::exists(corpus_path.string() + ".meta"));
  const Corpus corpus = load_corpus(corpus_path);
  CHECK(corpus.size() == 20);

  const auto run_dir = dir.path() / "run";
  REQUIRE(run("train --corpus " + corpus_path.string() + " --out-dir " +
                  run_dir.string() +
                  " --seed 3 --epochs 1 --negatives 2 --batch-size 4"
                  " --d-model 16 --layers 1 --heads 2 --ffn 32 --eval-every 0"
                  " --turn-vocab 8",
              log) == 0);
  CHECK(std::filesystem::exists(run_dir / "checkpoint.bin"));
  CHECK(std::filesystem::exists(run_dir / "vocab.txt"));
  CHECK(std::filesystem::exists(run_dir / "train_report.txt"));
  CHECK(std::filesystem::exists(run_dir / "trajectory.csv"));
  CHECK(std::filesystem::exists(run_dir / "checkpoint.bin.meta"));
  CHECK(slurp(run_dir / "train_report.txt").find("final_loss=") !=
        std::string::npos);

  const auto embeddings_path = dir.path() / "test.emb";
  REQUIRE(run("embed --corpus " + corpus_path.string() + " --checkpoint " +
                  (run_dir / "checkpoint.bin").string() + " --vocab " +
                  (run_dir / "vocab.txt").string() +
                  " --split test --strategy interlocutor --seed 3 --out " +
                  embeddings_path.string(),
              log) == 0);
  const std::vector<DialogueEmbedding> embeddings =
      import_embeddings(embeddings_path);
  CHECK(embeddings.size() == 2);  // 10% of 20
  CHECK(embeddings.front().vector.size() == 16);

  const auto report_path = dir.path() / "report.txt";
  REQUIRE(run("eval --embeddings " + embeddings_path.string() + " --corpus " +
                  corpus_path.string() + " --seed 5 --out " + report_path.string(),
              log) == 0);
  const MetricReport report = load_report(report_path);
  CHECK(report.num_embeddings == 2);
  REQUIRE(report.purity.has_value());
  CHECK(*report.purity >= 0.0);
  CHECK(*report.purity <= 1.0);

  const auto diag_path = dir.path() / "diag.txt";
  REQUIRE(run("diagnose --corpus " + corpus_path.string() + " --checkpoint " +
                  (run_dir / "checkpoint.bin").string() + " --vocab " +
                  (run_dir / "vocab.txt").string() + " --split train --seed 3 --out " +
                  diag_path.string(),
              log) == 0);
  CHECK(slurp(diag_path).find("uniformity=") != std::string::npos);
}

TEST_CASE("cli rejects unknown flags with a usage error") {
  testutil::TempDir dir("cli");
  const auto log = dir.path() / "log.txt";
  CHECK(run("gen-corpus --does-not-exist 1", log) == 2);
  CHECK(slurp(log).find("error: usage:") != std::string::npos);
}

TEST_CASE("cli reports missing files as runtime errors") {
  testutil::TempDir dir("cli");
  const auto log = dir.path() / "log.txt";
  CHECK(run("train --corpus /nonexistent.jsonl --out-dir " +
                (dir.path() / "x").string(),
            log) == 1);
  const std::string text = slurp(log);
  CHECK(text.find("error:") != std::string::npos);
}

TEST_CASE("cli eval reports undefined relatedness with exit code zero") {
  testutil::TempDir dir("cli");
  const auto log = dir.path() / "log.txt";

  // single-domain corpus
  Corpus corpus;
  corpus.name = "single";
  for (int i = 0; i < 6; ++i) {
    corpus.dialogues.push_back(testutil::make_dialogue(
        "d" + std::to_string(i), {"alpha beta", "gamma", "delta", "eps"}, "only"));
  }
  const auto corpus_path = dir.path() / "single.jsonl";
  save_corpus(corpus, corpus_path);

  std::vector<DialogueEmbedding> embeddings;
  Rng rng(1);
  for (int i = 0; i < 6; ++i) {
    DialogueEmbedding e;
    e.id = "d" + std::to_string(i);
    e.strategy = PoolStrategy::Interlocutor;
    e.vector = testutil::random_matrix(4, 1, rng).col(0);
    embeddings.push_back(e);
  }
  const auto emb_path = dir.path() / "single.emb";
  export_embeddings(embeddings, emb_path);

  const auto report_path = dir.path() / "single_report.txt";
  REQUIRE(run("eval --embeddings " + emb_path.string() + " --corpus " +
                  corpus_path.string() + " --out " + report_path.string(),
              log) == 0);
  const std::string text = slurp(report_path);
  CHECK(text.find("spearman=undefined") != std::string::npos);
}

TEST_CASE("cli config file supplies defaults that flags override") {
  testutil::TempDir dir("cli");
  const auto log = dir.path() / "log.txt";
  const auto config_path = dir.path() / "config.ini";
  {
    std::ofstream config(config_path);
    config << "domains=3\nper-domain=4\nturns=4\ntokens-per-turn=3\nseed=9\n";
  }
  const auto corpus_path = dir.path() / "from_config.jsonl";
  REQUIRE(run("gen-corpus --config " + config_path.string() + " --domains 2 --out " +
                  corpus_path.string(),
              log) == 0);
  const Corpus corpus = load_corpus(corpus_path);
  // flag overrides config: 2 domains, config supplies per-domain=4
  CHECK(corpus.size() == 8);
  std::set<std::string> domains;
  for (const Dialogue& d : corpus.dialogues) domains.insert(*d.domain);
  CHECK(domains.size() == 2);
}

TEST_CASE("embed strategies average and interlocutor both evaluate") {
  testutil::TempDir dir("cli");
  const auto log = dir.path() / "log.txt";
  const auto corpus_path = dir.path() / "corpus.jsonl";
  REQUIRE(run("gen-corpus --domains 2 --per-domain 8 --turns 4"
              " --tokens-per-turn 4 --seed 2 --out " +
                  corpus_path.string(),
              log) == 0);
  const auto run_dir = dir.path() / "run";
  REQUIRE(run("train --corpus " + corpus_path.string() + " --out-dir " +
                  run_dir.string() +
                  " --seed 2 --epochs 1 --negatives 2 --batch-size 4"
                  " --d-model 16 --layers 1 --heads 2 --ffn 32 --eval-every 0"
                  " --turn-vocab 8",
              log) == 0);

  for (const std::string strategy : {"average", "interlocutor"}) {
    const auto emb = dir.path() / (strategy + ".emb");
    REQUIRE(run("embed --corpus " + corpus_path.string() + " --checkpoint " +
                    (run_dir / "checkpoint.bin").string() + " --vocab " +
                    (run_dir / "vocab.txt").string() + " --split train --seed 2" +
                    " --strategy " + strategy + " --out " + emb.string(),
                log) == 0);
    const auto report = dir.path() / (strategy + ".report");
    REQUIRE(run("eval --embeddings " + emb.string() + " --corpus " +
                    corpus_path.string() + " --out " + report.string(),
                log) == 0);
    const MetricReport metrics = load_report(report);
    CHECK(metrics.purity.has_value());
    CHECK(metrics.map.has_value());
  }
}
