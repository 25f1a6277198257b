#include "dial2vec/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dial2vec {

void EncoderConfig::validate() const {
  if (d_model < 1 || layers < 0 || heads < 1 || ffn_width < 1 || max_len < 2 ||
      vocab_size < 2 || turn_vocab < 2) {
    throw std::invalid_argument("encoder config fields out of range");
  }
  if (d_model % heads != 0) {
    throw std::invalid_argument("d_model must be divisible by heads");
  }
  if (frozen_layers < 0 || frozen_layers > layers) {
    throw std::invalid_argument("frozen_layers must lie in [0, layers]");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("dropout must lie in [0, 1)");
  }
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t count = 0;
  for_each_tensor([&](const std::string&, const ag::Matrix& m, int) {
    count += static_cast<std::size_t>(m.size());
  });
  return count;
}

EncoderParams zeros_like(const EncoderConfig& config) {
  config.validate();
  const int d = config.d_model;
  EncoderParams params;
  params.token_table = ag::Matrix::Zero(config.vocab_size, d);
  params.position_table = ag::Matrix::Zero(config.max_len, d);
  params.turn_table = ag::Matrix::Zero(config.turn_vocab, d);
  params.role_table = ag::Matrix::Zero(2, d);
  params.layers.resize(static_cast<std::size_t>(config.layers));
  for (EncoderParams::Layer& layer : params.layers) {
    layer.ln1_gain = ag::Matrix::Zero(1, d);
    layer.ln1_bias = ag::Matrix::Zero(1, d);
    layer.wq = ag::Matrix::Zero(d, d);
    layer.bq = ag::Matrix::Zero(1, d);
    layer.wk = ag::Matrix::Zero(d, d);
    layer.bk = ag::Matrix::Zero(1, d);
    layer.wv = ag::Matrix::Zero(d, d);
    layer.bv = ag::Matrix::Zero(1, d);
    layer.wo = ag::Matrix::Zero(d, d);
    layer.bo = ag::Matrix::Zero(1, d);
    layer.ln2_gain = ag::Matrix::Zero(1, d);
    layer.ln2_bias = ag::Matrix::Zero(1, d);
    layer.w1 = ag::Matrix::Zero(d, config.ffn_width);
    layer.b1 = ag::Matrix::Zero(1, config.ffn_width);
    layer.w2 = ag::Matrix::Zero(config.ffn_width, d);
    layer.b2 = ag::Matrix::Zero(1, d);
  }
  return params;
}

namespace {

void fill_normal(ag::Matrix& m, double scale, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = scale * rng.next_normal();
    }
  }
}

bool is_gain(const std::string& name) {
  return name.size() >= 4 && name.compare(name.size() - 4, 4, "gain") == 0;
}

bool is_bias(const std::string& name) {
  if (name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0) return true;
  const auto slash = name.rfind('.');
  const std::string leaf = slash == std::string::npos ? name : name.substr(slash + 1);
  return !leaf.empty() && leaf[0] == 'b' && leaf != "bias";
}

}  // namespace

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams params = zeros_like(config);
  Rng rng(derive_seed(seed, "encoder.init"));
  params.for_each_tensor([&](const std::string& name, ag::Matrix& m, int) {
    if (is_gain(name)) {
      m.setOnes();
    } else if (is_bias(name)) {
      m.setZero();
    } else {
      fill_normal(m, 0.02, rng);
    }
  });
  return params;
}

bool tensor_frozen(const EncoderConfig& config, int layer_index) {
  if (config.frozen_layers <= 0) return false;
  if (layer_index < 0) return true;  // embedding tables freeze with the bottom
  return layer_index < config.frozen_layers;
}

ParamVars bind_params(ag::Tape& tape, const EncoderParams& params) {
  ParamVars vars;
  vars.token_table = tape.parameter(params.token_table);
  vars.position_table = tape.parameter(params.position_table);
  vars.turn_table = tape.parameter(params.turn_table);
  vars.role_table = tape.parameter(params.role_table);
  vars.layers.reserve(params.layers.size());
  for (const EncoderParams::Layer& layer : params.layers) {
    ParamVars::Layer l;
    l.ln1_gain = tape.parameter(layer.ln1_gain);
    l.ln1_bias = tape.parameter(layer.ln1_bias);
    l.wq = tape.parameter(layer.wq);
    l.bq = tape.parameter(layer.bq);
    l.wk = tape.parameter(layer.wk);
    l.bk = tape.parameter(layer.bk);
    l.wv = tape.parameter(layer.wv);
    l.bv = tape.parameter(layer.bv);
    l.wo = tape.parameter(layer.wo);
    l.bo = tape.parameter(layer.bo);
    l.ln2_gain = tape.parameter(layer.ln2_gain);
    l.ln2_bias = tape.parameter(layer.ln2_bias);
    l.w1 = tape.parameter(layer.w1);
    l.b1 = tape.parameter(layer.b1);
    l.w2 = tape.parameter(layer.w2);
    l.b2 = tape.parameter(layer.b2);
    vars.layers.push_back(l);
  }
  return vars;
}

ag::Var assemble_input(ag::Tape& tape, const TokenizedDialogue& tok,
                       const ParamVars& params, const EncoderConfig& config) {
  const int n = tok.length();
  if (n > config.max_len) {
    throw std::out_of_range("sequence longer than max_len");
  }
  std::vector<int> role_rows(tok.role_ids.size());
  for (std::size_t i = 0; i < tok.role_ids.size(); ++i) {
    role_rows[i] = tok.role_ids[i] - 1;
  }
  ag::Var sum = tape.add(tape.gather_rows(params.token_table, tok.token_ids),
                         tape.gather_rows(params.position_table, tok.position_ids));
  sum = tape.add(sum, tape.gather_rows(params.turn_table, tok.turn_ids));
  return tape.add(sum, tape.gather_rows(params.role_table, role_rows));
}

namespace {

ag::Var dropout_mask(ag::Tape& tape, ag::Var x, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  ag::Matrix mask(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      mask(r, c) = rng->next_double() < p ? 0.0 : keep_scale;
    }
  }
  return tape.cwise_mul_const(x, mask);
}

ag::Var attention_block(ag::Tape& tape, ag::Var x, const ParamVars::Layer& layer,
                        const EncoderConfig& config) {
  const int d = config.d_model;
  const int dk = d / config.heads;
  const double scaling = 1.0 / std::sqrt(static_cast<double>(dk));

  ag::Var queries = tape.add_row_broadcast(tape.matmul(x, layer.wq), layer.bq);
  ag::Var keys = tape.add_row_broadcast(tape.matmul(x, layer.wk), layer.bk);
  ag::Var values = tape.add_row_broadcast(tape.matmul(x, layer.wv), layer.bv);

  std::vector<ag::Var> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(config.heads));
  for (int h = 0; h < config.heads; ++h) {
    ag::Var q = tape.col_block(queries, h * dk, dk);
    ag::Var k = tape.col_block(keys, h * dk, dk);
    ag::Var v = tape.col_block(values, h * dk, dk);
    ag::Var scores = tape.scale(tape.matmul(q, tape.transpose(k)), scaling);
    ag::Var weights = tape.softmax_rows(scores);
    head_outputs.push_back(tape.matmul(weights, v));
  }
  ag::Var merged = config.heads == 1 ? head_outputs.front() : tape.hcat(head_outputs);
  return tape.add_row_broadcast(tape.matmul(merged, layer.wo), layer.bo);
}

}  // namespace

ag::Var encode(ag::Tape& tape, ag::Var input, const ParamVars& params,
               const EncoderConfig& config, Rng* dropout_rng) {
  ag::Var x = input;
  for (const ParamVars::Layer& layer : params.layers) {
    ag::Var normed = tape.layer_norm_rows(x, layer.ln1_gain, layer.ln1_bias);
    ag::Var attended = attention_block(tape, normed, layer, config);
    attended = dropout_mask(tape, attended, config.dropout, dropout_rng);
    x = tape.add(x, attended);

    ag::Var normed2 = tape.layer_norm_rows(x, layer.ln2_gain, layer.ln2_bias);
    ag::Var hidden = tape.gelu(tape.add_row_broadcast(
        tape.matmul(normed2, layer.w1), layer.b1));
    ag::Var projected = tape.add_row_broadcast(tape.matmul(hidden, layer.w2),
                                               layer.b2);
    projected = dropout_mask(tape, projected, config.dropout, dropout_rng);
    x = tape.add(x, projected);
  }
  if (!x.value().allFinite()) {
    throw std::runtime_error("encoder produced non-finite values");
  }
  return x;
}

ag::Var encode_dialogue(ag::Tape& tape, const TokenizedDialogue& tok,
                        const ParamVars& params, const EncoderConfig& config,
                        Rng* dropout_rng) {
  return encode(tape, assemble_input(tape, tok, params, config), params, config,
                dropout_rng);
}

ag::Matrix assemble_input(const TokenizedDialogue& tok, const EncoderParams& params,
                          const EncoderConfig& config) {
  ag::Tape tape;
  return assemble_input(tape, tok, bind_params(tape, params), config).value();
}

ag::Matrix encode(const ag::Matrix& input, const EncoderParams& params,
                  const EncoderConfig& config) {
  ag::Tape tape;
  ag::Var x = tape.constant(input);
  return encode(tape, x, bind_params(tape, params), config).value();
}

ag::Matrix encode_dialogue(const TokenizedDialogue& tok, const EncoderParams& params,
                           const EncoderConfig& config) {
  ag::Tape tape;
  return encode_dialogue(tape, tok, bind_params(tape, params), config).value();
}

void accumulate_gradients(const ParamVars& vars, const EncoderConfig& config,
                          GradientBuffer& grads, double weight) {
  const auto add_grad = [&](ag::Matrix& dst, const ag::Var& src, int layer_index) {
    if (tensor_frozen(config, layer_index)) return;
    dst += weight * src.grad();
  };
  add_grad(grads.token_table, vars.token_table, -1);
  add_grad(grads.position_table, vars.position_table, -1);
  add_grad(grads.turn_table, vars.turn_table, -1);
  add_grad(grads.role_table, vars.role_table, -1);
  for (std::size_t i = 0; i < vars.layers.size(); ++i) {
    const int li = static_cast<int>(i);
    const ParamVars::Layer& v = vars.layers[i];
    EncoderParams::Layer& g = grads.layers[i];
    add_grad(g.ln1_gain, v.ln1_gain, li);
    add_grad(g.ln1_bias, v.ln1_bias, li);
    add_grad(g.wq, v.wq, li);
    add_grad(g.bq, v.bq, li);
    add_grad(g.wk, v.wk, li);
    add_grad(g.bk, v.bk, li);
    add_grad(g.wv, v.wv, li);
    add_grad(g.bv, v.bv, li);
    add_grad(g.wo, v.wo, li);
    add_grad(g.bo, v.bo, li);
    add_grad(g.ln2_gain, v.ln2_gain, li);
    add_grad(g.ln2_bias, v.ln2_bias, li);
    add_grad(g.w1, v.w1, li);
    add_grad(g.b1, v.b1, li);
    add_grad(g.w2, v.w2, li);
    add_grad(g.b2, v.b2, li);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint serialization

namespace {

constexpr char kMagic[4] = {'D', '2', 'V', 'C'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in) {
  const std::uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void write_tensor(std::ostream& out, const ag::Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      write_f32(out, static_cast<float>(m(r, c)));
    }
  }
}

void read_tensor(std::istream& in, ag::Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<double>(read_f32(in));
    }
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint: " + path.string());
  }
  out.write(kMagic, 4);
  write_u32(out, kFormatVersion);
  const EncoderConfig& c = checkpoint.config;
  for (const int field : {c.d_model, c.layers, c.heads, c.ffn_width, c.max_len,
                          c.vocab_size, c.turn_vocab, c.frozen_layers}) {
    write_u32(out, static_cast<std::uint32_t>(field));
  }
  write_f32(out, static_cast<float>(c.dropout));
  checkpoint.params.for_each_tensor(
      [&](const std::string&, const ag::Matrix& m, int) { write_tensor(out, m); });
  if (!out) {
    throw std::runtime_error("checkpoint write failed: " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint: " + path.string());
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  const std::uint32_t version = read_u32(in);
  if (version != kFormatVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }
  Checkpoint checkpoint;
  EncoderConfig& c = checkpoint.config;
  c.d_model = static_cast<int>(read_u32(in));
  c.layers = static_cast<int>(read_u32(in));
  c.heads = static_cast<int>(read_u32(in));
  c.ffn_width = static_cast<int>(read_u32(in));
  c.max_len = static_cast<int>(read_u32(in));
  c.vocab_size = static_cast<int>(read_u32(in));
  c.turn_vocab = static_cast<int>(read_u32(in));
  c.frozen_layers = static_cast<int>(read_u32(in));
  c.dropout = static_cast<double>(read_f32(in));
  c.validate();
  checkpoint.params = zeros_like(c);
  checkpoint.params.for_each_tensor(
      [&](const std::string&, ag::Matrix& m, int) { read_tensor(in, m); });
  if (!in) {
    throw std::runtime_error("truncated checkpoint: " + path.string());
  }
  return checkpoint;
}

}  // namespace dial2vec
