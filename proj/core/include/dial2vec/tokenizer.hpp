#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "dial2vec/corpus.hpp"

namespace dial2vec {

// Deterministic whitespace + lowercase vocabulary. Index 0 is padding,
// index 1 is the unknown token; real tokens follow in descending corpus
// frequency (ties lexicographic).
class Vocab {
 public:
  static constexpr int kPadIndex = 0;
  static constexpr int kUnkIndex = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocab();
  explicit Vocab(std::vector<std::string> tokens);

  int lookup(const std::string& token) const;
  const std::string& token(int index) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  // plain text, one token per line, line number = index
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::vector<std::string> split_tokens(const std::string& text);

Vocab build_vocab(const Corpus& corpus, int min_freq);

// Aligned index sequences of common length n. Position ids are 0..n-1, turn
// ids are the original turn indices (non-decreasing), role ids are 1 or 2
// and follow turn parity.
struct TokenizedDialogue {
  std::string dialogue_id;
  std::vector<int> token_ids;
  std::vector<int> position_ids;
  std::vector<int> turn_ids;
  std::vector<int> role_ids;

  int length() const { return static_cast<int>(token_ids.size()); }
};

// Concatenates the utterances in turn order and truncates to max_len by
// dropping whole trailing turns first, then trailing tokens, keeping at
// least one token per retained turn. Throws if only one role survives.
TokenizedDialogue tokenize_dialogue(const Dialogue& dialogue, const Vocab& vocab,
                                    int max_len);

// whitespace-joined tokens; inverse of tokenization for in-vocab text
std::string detokenize(const TokenizedDialogue& tok, const Vocab& vocab);

}  // namespace dial2vec
