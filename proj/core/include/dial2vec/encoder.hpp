#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dial2vec/autograd.hpp"
#include "dial2vec/rng.hpp"
#include "dial2vec/tokenizer.hpp"

namespace dial2vec {

struct EncoderConfig {
  int d_model = 64;
  int layers = 4;
  int heads = 4;
  int ffn_width = 256;
  int max_len = 512;
  int vocab_size = 0;  // set from the vocabulary
  int turn_vocab = 64;
  int frozen_layers = 0;
  double dropout = 0.0;

  void validate() const;
};

// Trainable state: four input-embedding tables plus per-layer attention and
// feed-forward weights. Walk order is the canonical order for checkpoints,
// optimizer state, and gradient buffers.
struct EncoderParams {
  struct Layer {
    ag::Matrix ln1_gain, ln1_bias;
    ag::Matrix wq, bq, wk, bk, wv, bv, wo, bo;
    ag::Matrix ln2_gain, ln2_bias;
    ag::Matrix w1, b1, w2, b2;
  };

  ag::Matrix token_table;     // vocab_size x d
  ag::Matrix position_table;  // max_len x d
  ag::Matrix turn_table;      // turn_vocab x d
  ag::Matrix role_table;      // 2 x d
  std::vector<Layer> layers;

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("token_table", token_table, -1);
    fn("position_table", position_table, -1);
    fn("turn_table", turn_table, -1);
    fn("role_table", role_table, -1);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const int li = static_cast<int>(i);
      const std::string p = "layer" + std::to_string(i) + ".";
      Layer& l = layers[i];
      fn(p + "ln1_gain", l.ln1_gain, li);
      fn(p + "ln1_bias", l.ln1_bias, li);
      fn(p + "wq", l.wq, li);
      fn(p + "bq", l.bq, li);
      fn(p + "wk", l.wk, li);
      fn(p + "bk", l.bk, li);
      fn(p + "wv", l.wv, li);
      fn(p + "bv", l.bv, li);
      fn(p + "wo", l.wo, li);
      fn(p + "bo", l.bo, li);
      fn(p + "ln2_gain", l.ln2_gain, li);
      fn(p + "ln2_bias", l.ln2_bias, li);
      fn(p + "w1", l.w1, li);
      fn(p + "b1", l.b1, li);
      fn(p + "w2", l.w2, li);
      fn(p + "b2", l.b2, li);
    }
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<EncoderParams*>(this)->for_each_tensor(
        [&](const std::string& name, ag::Matrix& m, int layer) {
          fn(name, static_cast<const ag::Matrix&>(m), layer);
        });
  }

  std::size_t parameter_count() const;
};

// Gradient and optimizer-moment buffers share the parameter layout.
using GradientBuffer = EncoderParams;

EncoderParams zeros_like(const EncoderConfig& config);

// Normal(0, 0.02^2) weights, zero biases, identity layer norms.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

// Whether a tensor is frozen under the given config: embedding tables freeze
// together with the bottom frozen_layers layers.
bool tensor_frozen(const EncoderConfig& config, int layer_index);

// ---------------------------------------------------------------------------
// Forward passes

// Parameter leaves bound to a tape in canonical order.
struct ParamVars {
  struct Layer {
    ag::Var ln1_gain, ln1_bias;
    ag::Var wq, bq, wk, bk, wv, bv, wo, bo;
    ag::Var ln2_gain, ln2_bias;
    ag::Var w1, b1, w2, b2;
  };
  ag::Var token_table, position_table, turn_table, role_table;
  std::vector<Layer> layers;
};

ParamVars bind_params(ag::Tape& tape, const EncoderParams& params);

// Row i = token_table[token_ids[i]] + position_table[i]
//       + turn_table[turn_ids[i]] + role_table[role_ids[i] - 1].
ag::Var assemble_input(ag::Tape& tape, const TokenizedDialogue& tok,
                       const ParamVars& params, const EncoderConfig& config);

// Pre-norm multi-head self-attention + feed-forward stack over an assembled
// input; full (non-causal) attention. With layers == 0 the input passes
// through unchanged. dropout_rng enables inverted dropout when
// config.dropout > 0; null keeps the pass deterministic.
ag::Var encode(ag::Tape& tape, ag::Var input, const ParamVars& params,
               const EncoderConfig& config, Rng* dropout_rng = nullptr);

ag::Var encode_dialogue(ag::Tape& tape, const TokenizedDialogue& tok,
                        const ParamVars& params, const EncoderConfig& config,
                        Rng* dropout_rng = nullptr);

// Plain-matrix convenience wrappers (no gradients retained).
ag::Matrix assemble_input(const TokenizedDialogue& tok, const EncoderParams& params,
                          const EncoderConfig& config);
ag::Matrix encode(const ag::Matrix& input, const EncoderParams& params,
                  const EncoderConfig& config);
ag::Matrix encode_dialogue(const TokenizedDialogue& tok, const EncoderParams& params,
                           const EncoderConfig& config);

// Reads leaf gradients after Tape::backward into a parameter-shaped buffer,
// scaled by weight; frozen tensors stay identically zero.
void accumulate_gradients(const ParamVars& vars, const EncoderConfig& config,
                          GradientBuffer& grads, double weight = 1.0);

// ---------------------------------------------------------------------------
// Checkpoints: binary file, little-endian. Header: magic "D2VC", format
// version u32, then config as eight u32 fields (d_model, layers, heads,
// ffn_width, max_len, vocab_size, turn_vocab, frozen_layers) and dropout as
// one f32. Tensors follow in for_each_tensor order, each as row-major f32.
struct Checkpoint {
  EncoderConfig config;
  EncoderParams params;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dial2vec
