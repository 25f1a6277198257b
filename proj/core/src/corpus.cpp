#include "dial2vec/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace dial2vec {

namespace {

bool is_blank(const std::string& text) {
  return text.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

void validate_dialogue(const Dialogue& dialogue) {
  if (dialogue.id.empty()) {
    throw std::invalid_argument("dialogue has empty id");
  }
  if (dialogue.turns.size() < 2) {
    throw std::invalid_argument("dialogue '" + dialogue.id +
                                "' has fewer than 2 turns");
  }
  for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
    const Role expected = (i % 2 == 0) ? Role::P1 : Role::P2;
    if (dialogue.turns[i].role != expected) {
      std::ostringstream msg;
      msg << "dialogue '" << dialogue.id << "' violates role alternation at turn "
          << i << " (roles must alternate starting with role 1)";
      throw std::invalid_argument(msg.str());
    }
    if (is_blank(dialogue.turns[i].text)) {
      std::ostringstream msg;
      msg << "dialogue '" << dialogue.id << "' has an empty utterance at turn " << i;
      throw std::invalid_argument(msg.str());
    }
  }
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open corpus file: " + path.string());
  }
  Corpus corpus;
  corpus.name = path.stem().string();
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": malformed JSON record: " << e.what();
      throw std::runtime_error(msg.str());
    }
    Dialogue dialogue;
    try {
      dialogue.id = record.at("id").get<std::string>();
      if (record.contains("domain") && !record.at("domain").is_null()) {
        dialogue.domain = record.at("domain").get<std::string>();
      }
      for (const auto& turn_json : record.at("turns")) {
        const int role_index = turn_json.at("role").get<int>();
        if (role_index != 1 && role_index != 2) {
          throw std::runtime_error("role must be 1 or 2");
        }
        dialogue.turns.push_back(
            Turn{static_cast<Role>(role_index), turn_json.at("text").get<std::string>()});
      }
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": bad record: " << e.what();
      throw std::runtime_error(msg.str());
    }
    try {
      validate_dialogue(dialogue);
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": " << e.what();
      throw std::runtime_error(msg.str());
    }
    if (!seen_ids.insert(dialogue.id).second) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": duplicate dialogue id '"
          << dialogue.id << "'";
      throw std::runtime_error(msg.str());
    }
    corpus.dialogues.push_back(std::move(dialogue));
  }
  if (corpus.dialogues.empty()) {
    throw std::runtime_error("corpus file has no dialogues: " + path.string());
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write corpus file: " + path.string());
  }
  for (const Dialogue& dialogue : corpus.dialogues) {
    nlohmann::json record;
    record["id"] = dialogue.id;
    record["domain"] = dialogue.domain ? nlohmann::json(*dialogue.domain)
                                       : nlohmann::json(nullptr);
    nlohmann::json turns = nlohmann::json::array();
    for (const Turn& turn : dialogue.turns) {
      turns.push_back({{"role", static_cast<int>(turn.role)}, {"text", turn.text}});
    }
    record["turns"] = std::move(turns);
    out << record.dump() << "\n";
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

CorpusSplits split_corpus(const Corpus& corpus, const SplitRatios& ratios,
                          std::uint64_t seed) {
  if (ratios.train <= 0.0 || ratios.dev <= 0.0 || ratios.test <= 0.0) {
    throw std::invalid_argument("split ratios must be positive");
  }
  const double sum = ratios.train + ratios.dev + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }
  const std::size_t total = corpus.size();
  if (total < 3) {
    throw std::invalid_argument("corpus too small to split: K=" +
                                std::to_string(total));
  }

  // floor allocation, remainder to the largest fractional parts
  const std::array<double, 3> fractions = {ratios.train, ratios.dev, ratios.test};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = fractions[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainders[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
    return a < b;
  });
  for (std::size_t extra = 0; assigned < total; ++extra, ++assigned) {
    counts[order[extra % 3]] += 1;
  }
  if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0) {
    throw std::invalid_argument(
        "corpus too small to give each split at least one dialogue");
  }

  std::vector<std::size_t> indices(total);
  for (std::size_t i = 0; i < total; ++i) indices[i] = i;
  Rng rng(derive_seed(seed, "corpus.split"));
  rng.shuffle(indices);

  CorpusSplits splits;
  splits.train.name = corpus.name + ".train";
  splits.dev.name = corpus.name + ".dev";
  splits.test.name = corpus.name + ".test";
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < counts[0]; ++i)
    splits.train.dialogues.push_back(corpus.dialogues[indices[cursor++]]);
  for (std::size_t i = 0; i < counts[1]; ++i)
    splits.dev.dialogues.push_back(corpus.dialogues[indices[cursor++]]);
  for (std::size_t i = 0; i < counts[2]; ++i)
    splits.test.dialogues.push_back(corpus.dialogues[indices[cursor++]]);
  return splits;
}

Corpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.domains < 1 || spec.dialogues_per_domain < 1 ||
      spec.turns_per_dialogue < 1 || spec.tokens_per_turn < 1 ||
      spec.keywords_per_domain < 1 || spec.shared_vocab_size < 1) {
    throw std::invalid_argument("synthetic corpus counts must be >= 1");
  }
  if (spec.shared_vocab_fraction < 0.0 || spec.shared_vocab_fraction > 1.0) {
    throw std::invalid_argument("shared_vocab_fraction must lie in [0,1]");
  }
  // alternating roles require at least two turns
  if (spec.turns_per_dialogue < 2) {
    throw std::invalid_argument("turns_per_dialogue must be >= 2");
  }
  const int turns = spec.turns_per_dialogue;

  Rng rng(derive_seed(seed, "corpus.synthetic"));
  Corpus corpus;
  corpus.name = "synthetic";

  for (int domain = 0; domain < spec.domains; ++domain) {
    const std::string domain_label(1, static_cast<char>('A' + (domain % 26)));
    const std::string domain_tag =
        spec.domains > 26 ? "dom" + std::to_string(domain) : domain_label;
    for (int d = 0; d < spec.dialogues_per_domain; ++d) {
      Dialogue dialogue;
      dialogue.id = "syn-" + std::to_string(domain) + "-" + std::to_string(d);
      dialogue.domain = domain_tag;
      for (int t = 0; t < turns; ++t) {
        // utterance lengths vary around tokens_per_turn so the two roles end
        // up with unequal token counts, as in real dialogue data
        const int spread = std::min(2, spec.tokens_per_turn - 1);
        const int tokens_this_turn =
            spec.tokens_per_turn - spread +
            static_cast<int>(rng.next_below(2 * spread + 1));
        std::ostringstream text;
        for (int tok = 0; tok < tokens_this_turn; ++tok) {
          if (tok > 0) text << ' ';
          if (rng.next_double() < spec.shared_vocab_fraction) {
            text << "chat" << rng.next_below(spec.shared_vocab_size);
          } else {
            text << "dom" << domain << "w"
                 << rng.next_below(spec.keywords_per_domain);
          }
        }
        dialogue.turns.push_back(
            Turn{(t % 2 == 0) ? Role::P1 : Role::P2, text.str()});
      }
      corpus.dialogues.push_back(std::move(dialogue));
    }
  }
  return corpus;
}

UtterancePool build_utterance_pool(const Corpus& corpus) {
  UtterancePool pool;
  for (const Dialogue& dialogue : corpus.dialogues) {
    for (const Turn& turn : dialogue.turns) {
      (turn.role == Role::P1 ? pool.p1 : pool.p2).push_back(turn.text);
    }
  }
  return pool;
}

Dialogue make_negative(const Dialogue& positive, const UtterancePool& pool,
                       Role kept_role, Rng& rng) {
  const Role replaced_role = other_role(kept_role);
  const std::vector<std::string>& candidates = pool.for_role(replaced_role);

  std::size_t replaced_count = 0;
  for (const Turn& turn : positive.turns) {
    if (turn.role == replaced_role) ++replaced_count;
  }
  if (candidates.size() < replaced_count) {
    throw std::runtime_error("utterance pool exhausted: need " +
                             std::to_string(replaced_count) + " utterances of role " +
                             std::to_string(static_cast<int>(replaced_role)) +
                             ", pool has " + std::to_string(candidates.size()));
  }

  const std::vector<std::size_t> picks =
      rng.sample_without_replacement(candidates.size(), replaced_count);

  Dialogue negative = positive;
  std::size_t pick_cursor = 0;
  for (Turn& turn : negative.turns) {
    if (turn.role == replaced_role) {
      turn.text = candidates[picks[pick_cursor++]];
    }
  }
  return negative;
}

SampleSet build_sample_set(const Dialogue& positive, const UtterancePool& pool,
                           int num_negatives, Rng& rng) {
  if (num_negatives < 1) {
    throw std::invalid_argument("num_negatives must be >= 1");
  }
  SampleSet set;
  set.positive = positive;
  set.kept_role = (rng.next_below(2) == 0) ? Role::P1 : Role::P2;

  // exclude the positive's own utterances of the replaced role
  const Role replaced_role = other_role(set.kept_role);
  std::unordered_set<std::string> own;
  for (const Turn& turn : positive.turns) {
    if (turn.role == replaced_role) own.insert(turn.text);
  }
  UtterancePool filtered;
  std::vector<std::string>& target =
      replaced_role == Role::P1 ? filtered.p1 : filtered.p2;
  for (const std::string& text : pool.for_role(replaced_role)) {
    if (!own.count(text)) target.push_back(text);
  }

  set.negatives.reserve(static_cast<std::size_t>(num_negatives));
  for (int i = 0; i < num_negatives; ++i) {
    set.negatives.push_back(make_negative(positive, filtered, set.kept_role, rng));
  }
  return set;
}

}  // namespace dial2vec
