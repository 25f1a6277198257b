#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dial2vec/rng.hpp"

namespace dial2vec {

enum class Role : int { P1 = 1, P2 = 2 };

inline Role other_role(Role r) { return r == Role::P1 ? Role::P2 : Role::P1; }

struct Turn {
  Role role;
  std::string text;
};

// A two-party session. Roles strictly alternate starting with P1; both roles
// appear at least once (turns.size() >= 2).
struct Dialogue {
  std::string id;
  std::optional<std::string> domain;
  std::vector<Turn> turns;
};

struct Corpus {
  std::string name;
  std::vector<Dialogue> dialogues;

  std::size_t size() const { return dialogues.size(); }
};

// One positive session plus its negatives. Every negative shares the
// positive's turn count and role sequence, keeps the kept_role turns
// verbatim, and differs from the positive in at least one turn.
struct SampleSet {
  Dialogue positive;
  std::vector<Dialogue> negatives;
  Role kept_role;

  std::size_t total_sessions() const { return negatives.size() + 1; }
};

// Throws std::invalid_argument on alternation violations, empty utterances,
// or fewer than two turns.
void validate_dialogue(const Dialogue& dialogue);

// JSONL: one record per line, fields `id`, `domain` (string or null), and
// `turns` (array of {"role": 1|2, "text": "..."}). Corpus name is the file
// stem. Parse or validation failures report the offending line number.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

struct CorpusSplits {
  Corpus train;
  Corpus dev;
  Corpus test;
};

// Deterministic disjoint partition; every split receives at least one
// dialogue or the call throws. Domain labels are not consulted.
CorpusSplits split_corpus(const Corpus& corpus, const SplitRatios& ratios,
                          std::uint64_t seed);

struct SyntheticSpec {
  int domains = 3;
  int dialogues_per_domain = 40;
  int turns_per_dialogue = 10;
  int tokens_per_turn = 8;
  double shared_vocab_fraction = 0.3;
  // internal vocabulary sizes; each domain owns a disjoint keyword set
  int keywords_per_domain = 120;
  int shared_vocab_size = 100;
};

// Deterministic synthetic corpus: each utterance mixes its domain's keywords
// with a shared chit-chat vocabulary at the given fraction.
Corpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Role-tagged utterance texts negatives are filled from.
struct UtterancePool {
  std::vector<std::string> p1;
  std::vector<std::string> p2;

  const std::vector<std::string>& for_role(Role r) const {
    return r == Role::P1 ? p1 : p2;
  }
};

UtterancePool build_utterance_pool(const Corpus& corpus);

// Replaces every non-kept turn with a pool utterance sampled without
// replacement within this one negative. The pool must not contain the
// positive's own utterances (build_sample_set filters them out).
Dialogue make_negative(const Dialogue& positive, const UtterancePool& pool,
                       Role kept_role, Rng& rng);

// Picks kept_role uniformly at random, then draws num_negatives negatives.
SampleSet build_sample_set(const Dialogue& positive, const UtterancePool& pool,
                           int num_negatives, Rng& rng);

}  // namespace dial2vec
