#include "dial2vec/selfguided.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dial2vec {

MaskPair build_masks(const TokenizedDialogue& tok) {
  const int n = tok.length();
  MaskPair masks;
  masks.p1 = Eigen::VectorXd::Zero(n);
  masks.p2 = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (tok.role_ids[i] == 1) {
      masks.p1(i) = 1.0;
    } else {
      masks.p2(i) = 1.0;
    }
  }
  if (masks.p1.sum() == 0.0 || masks.p2.sum() == 0.0) {
    throw std::invalid_argument("dialogue '" + tok.dialogue_id +
                                "' does not cover both interlocutors");
  }
  return masks;
}

ag::Matrix self_representation(const ag::Matrix& encoder_output,
                               const Eigen::VectorXd& mask) {
  if (mask.size() != encoder_output.rows()) {
    throw std::invalid_argument("self_representation: mask length mismatch");
  }
  return mask.asDiagonal() * encoder_output;
}

ag::Matrix correlation_matrix(const ag::Matrix& self_other,
                              const ag::Matrix& self_own) {
  if (self_other.rows() != self_own.rows() ||
      self_other.cols() != self_own.cols()) {
    throw std::invalid_argument("correlation_matrix: shape mismatch");
  }
  return self_other * self_own.transpose();
}

ag::Matrix window_mask(const std::vector<int>& turn_ids, int window) {
  if (window < 0) throw std::invalid_argument("window must be >= 0");
  const int n = static_cast<int>(turn_ids.size());
  ag::Matrix mask(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      mask(i, j) = std::abs(turn_ids[i] - turn_ids[j]) <= window ? 1.0 : 0.0;
    }
  }
  return mask;
}

ag::Matrix apply_window_mask(const ag::Matrix& correlation,
                             const std::vector<int>& turn_ids, int window) {
  if (correlation.rows() != static_cast<Eigen::Index>(turn_ids.size()) ||
      correlation.rows() != correlation.cols()) {
    throw std::invalid_argument("apply_window_mask: shape mismatch");
  }
  return correlation.cwiseProduct(window_mask(turn_ids, window));
}

ag::Matrix cross_representation(const ag::Matrix& correlation,
                                const ag::Matrix& self_own) {
  if (correlation.cols() != self_own.rows()) {
    throw std::invalid_argument("cross_representation: shape mismatch");
  }
  return correlation * self_own;
}

double similarity(const ag::Matrix& self_rep, const ag::Matrix& cross_rep,
                  ZeroPoolStats* stats) {
  if (self_rep.rows() != cross_rep.rows() || self_rep.cols() != cross_rep.cols()) {
    throw std::invalid_argument("similarity: shape mismatch");
  }
  const Eigen::RowVectorXd pooled_self =
      self_rep.colwise().sum() / static_cast<double>(self_rep.rows());
  const Eigen::RowVectorXd pooled_cross =
      cross_rep.colwise().sum() / static_cast<double>(cross_rep.rows());
  const double self_norm = pooled_self.norm();
  const double cross_norm = pooled_cross.norm();
  if (self_norm == 0.0 || cross_norm == 0.0) {
    if (stats) ++stats->events;
    return 0.0;
  }
  return pooled_self.dot(pooled_cross) / (self_norm * cross_norm);
}

double nt_xent_loss(const std::vector<double>& positive_sim_per_role,
                    const std::vector<std::vector<double>>& all_sims_per_role,
                    double tau) {
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  if (positive_sim_per_role.size() != all_sims_per_role.size()) {
    throw std::invalid_argument("nt_xent_loss: role count mismatch");
  }
  double loss = 0.0;
  for (std::size_t r = 0; r < all_sims_per_role.size(); ++r) {
    const std::vector<double>& sims = all_sims_per_role[r];
    if (sims.empty()) throw std::invalid_argument("nt_xent_loss: empty sample list");
    double max_scaled = -std::numeric_limits<double>::infinity();
    for (const double s : sims) max_scaled = std::max(max_scaled, s / tau);
    double sum = 0.0;
    for (const double s : sims) sum += std::exp(s / tau - max_scaled);
    loss += max_scaled + std::log(sum) - positive_sim_per_role[r] / tau;
  }
  return loss;
}

ag::Var session_similarity(ag::Tape& tape, ag::Var encoder_output,
                           const MaskPair& masks, const std::vector<int>& turn_ids,
                           int window, Role role, ZeroPoolStats* stats) {
  const Eigen::VectorXd& own_mask = masks.for_role(role);
  const Eigen::VectorXd& other_mask = masks.for_role(other_role(role));

  ag::Var self_own = tape.scale_rows_const(encoder_output, own_mask);
  ag::Var self_other = tape.scale_rows_const(encoder_output, other_mask);
  ag::Var correlation = tape.matmul(self_other, tape.transpose(self_own));
  ag::Var windowed = tape.cwise_mul_const(correlation, window_mask(turn_ids, window));
  ag::Var cross = tape.matmul(windowed, self_own);

  ag::Var pooled_self = tape.mean_rows(self_own);
  ag::Var pooled_cross = tape.mean_rows(cross);
  const bool self_zero = pooled_self.value().row(0).norm() == 0.0;
  const bool cross_zero = pooled_cross.value().row(0).norm() == 0.0;
  if (self_zero || cross_zero) {
    if (stats) ++stats->events;
    return tape.constant(ag::Matrix::Zero(1, 1));
  }
  return tape.cosine(pooled_self, pooled_cross);
}

ag::Var session_loss(ag::Tape& tape, const ParamVars& params,
                     const EncoderConfig& config, const Vocab& vocab,
                     const SampleSet& samples, const SessionLossConfig& loss_config,
                     ZeroPoolStats* stats, Rng* dropout_rng) {
  if (loss_config.tau <= 0.0) throw std::invalid_argument("tau must be positive");
  if (samples.negatives.empty()) {
    throw std::invalid_argument("sample set needs at least one negative");
  }
  const double inv_tau = 1.0 / loss_config.tau;

  // sims[role][j], sample 0 is the positive
  std::vector<std::vector<ag::Var>> scaled_sims(2);
  const auto add_session = [&](const Dialogue& dialogue) {
    const TokenizedDialogue tok = tokenize_dialogue(dialogue, vocab, config.max_len);
    ag::Var encoded = encode_dialogue(tape, tok, params, config, dropout_rng);
    const MaskPair masks = build_masks(tok);
    for (int r = 0; r < 2; ++r) {
      const Role role = r == 0 ? Role::P1 : Role::P2;
      ag::Var sim = session_similarity(tape, encoded, masks, tok.turn_ids,
                                       loss_config.window, role, stats);
      scaled_sims[r].push_back(tape.scale(sim, inv_tau));
    }
  };
  add_session(samples.positive);
  for (const Dialogue& negative : samples.negatives) add_session(negative);

  ag::Var loss = tape.constant(ag::Matrix::Zero(1, 1));
  for (int r = 0; r < 2; ++r) {
    ag::Var row = tape.hcat(scaled_sims[r]);
    ag::Var lse = tape.logsumexp_row(row);
    loss = tape.add(loss, tape.sub(lse, scaled_sims[r].front()));
  }
  return loss;
}

double session_loss_value(const EncoderParams& params, const EncoderConfig& config,
                          const Vocab& vocab, const SampleSet& samples,
                          const SessionLossConfig& loss_config,
                          ZeroPoolStats* stats) {
  ag::Tape tape;
  const ParamVars vars = bind_params(tape, params);
  return session_loss(tape, vars, config, vocab, samples, loss_config, stats).scalar();
}

}  // namespace dial2vec
