#include "dial2vec/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dial2vec {

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> tokens) {
  tokens_.push_back(kPadToken);
  tokens_.push_back(kUnkToken);
  for (std::string& token : tokens) {
    tokens_.push_back(std::move(token));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocab token: " + tokens_[i]);
    }
  }
}

int Vocab::lookup(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnkIndex : it->second;
}

const std::string& Vocab::token(int index) const {
  if (index < 0 || index >= size()) {
    throw std::out_of_range("vocab index out of range: " + std::to_string(index));
  }
  return tokens_[static_cast<std::size_t>(index)];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write vocab file: " + path.string());
  }
  for (const std::string& token : tokens_) {
    out << token << "\n";
  }
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open vocab file: " + path.string());
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    lines.push_back(line);
  }
  if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kUnkToken) {
    throw std::runtime_error("vocab file missing reserved tokens: " + path.string());
  }
  return Vocab(std::vector<std::string>(lines.begin() + 2, lines.end()));
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocab build_vocab(const Corpus& corpus, int min_freq) {
  if (corpus.dialogues.empty()) {
    throw std::invalid_argument("cannot build vocab from empty corpus");
  }
  std::map<std::string, std::size_t> frequency;
  for (const Dialogue& dialogue : corpus.dialogues) {
    for (const Turn& turn : dialogue.turns) {
      for (std::string& token : split_tokens(turn.text)) {
        ++frequency[std::move(token)];
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, count] : frequency) {
    if (count >= static_cast<std::size_t>(std::max(min_freq, 1))) {
      kept.emplace_back(token, count);
    }
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [token, count] : kept) {
    tokens.push_back(std::move(token));
  }
  return Vocab(std::move(tokens));
}

TokenizedDialogue tokenize_dialogue(const Dialogue& dialogue, const Vocab& vocab,
                                    int max_len) {
  if (max_len < 2) {
    throw std::invalid_argument("max_len must be >= 2");
  }
  validate_dialogue(dialogue);

  std::vector<std::vector<std::string>> turn_tokens;
  turn_tokens.reserve(dialogue.turns.size());
  for (const Turn& turn : dialogue.turns) {
    turn_tokens.push_back(split_tokens(turn.text));
    if (turn_tokens.back().empty()) {
      throw std::invalid_argument("dialogue '" + dialogue.id +
                                  "' has a turn with no tokens");
    }
  }

  // drop whole trailing turns: keep the largest prefix that fits in full
  const std::size_t budget = static_cast<std::size_t>(max_len);
  std::size_t retained = 0;
  std::size_t total = 0;
  while (retained < turn_tokens.size() &&
         total + turn_tokens[retained].size() <= budget) {
    total += turn_tokens[retained].size();
    ++retained;
  }
  // both roles must survive: keep at least the first two turns and trim
  // trailing tokens instead, one-token floor per retained turn
  if (retained < 2) {
    retained = std::min<std::size_t>(2, turn_tokens.size());
    total = 0;
    for (std::size_t i = 0; i < retained; ++i) total += turn_tokens[i].size();
  }
  std::vector<std::size_t> keep_counts(retained);
  for (std::size_t i = 0; i < retained; ++i) {
    keep_counts[i] = turn_tokens[i].size();
  }
  for (std::size_t i = retained; i-- > 0 && total > budget;) {
    const std::size_t removed = std::min(total - budget, keep_counts[i] - 1);
    keep_counts[i] -= removed;
    total -= removed;
  }

  bool has_p1 = false;
  bool has_p2 = false;
  for (std::size_t i = 0; i < retained; ++i) {
    (i % 2 == 0 ? has_p1 : has_p2) = true;
  }
  if (!has_p1 || !has_p2) {
    throw std::invalid_argument("dialogue '" + dialogue.id +
                                "' reduces to a single role after truncation");
  }

  TokenizedDialogue tok;
  tok.dialogue_id = dialogue.id;
  tok.token_ids.reserve(total);
  for (std::size_t turn = 0; turn < retained; ++turn) {
    for (std::size_t i = 0; i < keep_counts[turn]; ++i) {
      tok.token_ids.push_back(vocab.lookup(turn_tokens[turn][i]));
      tok.turn_ids.push_back(static_cast<int>(turn));
      tok.role_ids.push_back(turn % 2 == 0 ? 1 : 2);
    }
  }
  tok.position_ids.resize(tok.token_ids.size());
  for (std::size_t i = 0; i < tok.position_ids.size(); ++i) {
    tok.position_ids[i] = static_cast<int>(i);
  }
  return tok;
}

std::string detokenize(const TokenizedDialogue& tok, const Vocab& vocab) {
  std::ostringstream out;
  for (std::size_t i = 0; i < tok.token_ids.size(); ++i) {
    if (i > 0) out << ' ';
    out << vocab.token(tok.token_ids[i]);
  }
  return out.str();
}

}  // namespace dial2vec
