#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "dial2vec/corpus.hpp"
#include "dial2vec/rng.hpp"

namespace testutil {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                                     dial2vec::Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = scale * rng.next_normal();
    }
  }
  return m;
}

// alternating two-party dialogue with the given per-turn texts
inline dial2vec::Dialogue make_dialogue(const std::string& id,
                                        const std::vector<std::string>& texts,
                                        const std::string& domain = "") {
  dial2vec::Dialogue dialogue;
  dialogue.id = id;
  if (!domain.empty()) dialogue.domain = domain;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    dialogue.turns.push_back(
        {i % 2 == 0 ? dial2vec::Role::P1 : dial2vec::Role::P2, texts[i]});
  }
  return dialogue;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dial2vec_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
