#pragma once

#include <cstdint>
#include <vector>

#include "dial2vec/autograd.hpp"
#include "dial2vec/corpus.hpp"
#include "dial2vec/encoder.hpp"
#include "dial2vec/tokenizer.hpp"

namespace dial2vec {

// Binary position masks for the two interlocutors. The masks partition the
// positions: p1 + p2 is the all-ones vector.
struct MaskPair {
  Eigen::VectorXd p1;
  Eigen::VectorXd p2;

  const Eigen::VectorXd& for_role(Role r) const {
    return r == Role::P1 ? p1 : p2;
  }
};

MaskPair build_masks(const TokenizedDialogue& tok);

// Self-representation: encoder output with the other interlocutor's rows
// zeroed out.
ag::Matrix self_representation(const ag::Matrix& encoder_output,
                               const Eigen::VectorXd& mask);

// Correlation scores of one interlocutor against the other: raw dot products
// C^own = E_other * E_own^T, no normalization. C^p1 and C^p2 are mutual
// transposes.
ag::Matrix correlation_matrix(const ag::Matrix& self_other,
                              const ag::Matrix& self_own);

// 0/1 matrix with entry (i, j) = 1 iff |turn(i) - turn(j)| <= w.
ag::Matrix window_mask(const std::vector<int>& turn_ids, int window);

// Zeroes correlations between tokens more than `window` turns apart.
ag::Matrix apply_window_mask(const ag::Matrix& correlation,
                             const std::vector<int>& turn_ids, int window);

// Cross-representation: correlation-weighted remix of the own-side rows,
// supported on the other interlocutor's positions.
ag::Matrix cross_representation(const ag::Matrix& correlation,
                                const ag::Matrix& self_own);

// Counts similarity calls that hit an all-zero pooled vector (reachable at
// w = 0); those return similarity 0 instead of failing.
struct ZeroPoolStats {
  long events = 0;
};

// Cosine similarity between the mean-pooled rows of the self- and
// cross-representations. Pooling averages over all n positions.
double similarity(const ag::Matrix& self_rep, const ag::Matrix& cross_rep,
                  ZeroPoolStats* stats = nullptr);

// NT-Xent: for each role r, -log softmax of the positive's similarity over
// all N samples at temperature tau, summed over roles. Max-shifted exp.
double nt_xent_loss(const std::vector<double>& positive_sim_per_role,
                    const std::vector<std::vector<double>>& all_sims_per_role,
                    double tau);

// ---------------------------------------------------------------------------
// Tape-based pipeline for training.

// Self-guided similarity of one role within one encoded session.
ag::Var session_similarity(ag::Tape& tape, ag::Var encoder_output,
                           const MaskPair& masks, const std::vector<int>& turn_ids,
                           int window, Role role, ZeroPoolStats* stats);

struct SessionLossConfig {
  int window = 10;
  double tau = 0.2;
};

// Runs tokenize -> encode -> masks -> self/cross representations ->
// similarity on every session of the sample set and evaluates the NT-Xent
// objective on the tape. The positive is sample 0 of the denominator.
ag::Var session_loss(ag::Tape& tape, const ParamVars& params,
                     const EncoderConfig& config, const Vocab& vocab,
                     const SampleSet& samples, const SessionLossConfig& loss_config,
                     ZeroPoolStats* stats = nullptr, Rng* dropout_rng = nullptr);

// Loss value without gradients.
double session_loss_value(const EncoderParams& params, const EncoderConfig& config,
                          const Vocab& vocab, const SampleSet& samples,
                          const SessionLossConfig& loss_config,
                          ZeroPoolStats* stats = nullptr);

}  // namespace dial2vec
