#include "dial2vec/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace dial2vec::ag {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

const Matrix& Var::value() const { return tape_->value_of(id_); }
const Matrix& Var::grad() const { return tape_->grad_of(id_); }

Var Tape::emplace(Matrix value, bool requires_grad,
                  std::function<void(Tape&)> fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backprop = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

bool Tape::any_requires_grad(std::initializer_list<Var> vars) const {
  for (const Var& v : vars) {
    if (nodes_[v.id()].requires_grad) return true;
  }
  return false;
}

Var Tape::parameter(const Matrix& value) { return emplace(value, true, {}); }

Var Tape::constant(Matrix value) { return emplace(std::move(value), false, {}); }

Var Tape::add(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("add: shape mismatch");
  }
  Var out = emplace(a.value() + b.value(), any_requires_grad({a, b}), {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, b, out_id](Tape& t) {
    const Matrix& g = t.grad_of(out_id);
    if (t.nodes_[a.id()].requires_grad) t.grad_ref(a.id()) += g;
    if (t.nodes_[b.id()].requires_grad) t.grad_ref(b.id()) += g;
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("sub: shape mismatch");
  }
  Var out = emplace(a.value() - b.value(), any_requires_grad({a, b}), {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, b, out_id](Tape& t) {
    const Matrix& g = t.grad_of(out_id);
    if (t.nodes_[a.id()].requires_grad) t.grad_ref(a.id()) += g;
    if (t.nodes_[b.id()].requires_grad) t.grad_ref(b.id()) -= g;
  };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree");
  }
  Var out = emplace(a.value() * b.value(), any_requires_grad({a, b}), {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, b, out_id](Tape& t) {
    const Matrix& g = t.grad_of(out_id);
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id()).noalias() += g * t.value_of(b.id()).transpose();
    if (t.nodes_[b.id()].requires_grad)
      t.grad_ref(b.id()).noalias() += t.value_of(a.id()).transpose() * g;
  };
  return out;
}

Var Tape::cwise_mul(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("cwise_mul: shape mismatch");
  }
  Var out = emplace(a.value().cwiseProduct(b.value()), any_requires_grad({a, b}), {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, b, out_id](Tape& t) {
    const Matrix& g = t.grad_of(out_id);
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id()) += g.cwiseProduct(t.value_of(b.id()));
    if (t.nodes_[b.id()].requires_grad)
      t.grad_ref(b.id()) += g.cwiseProduct(t.value_of(a.id()));
  };
  return out;
}

Var Tape::scale(Var a, double factor) {
  Var out = emplace(a.value() * factor, nodes_[a.id()].requires_grad, {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, factor, out_id](Tape& t) {
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id()) += t.grad_of(out_id) * factor;
  };
  return out;
}

Var Tape::transpose(Var a) {
  Var out = emplace(a.value().transpose(), nodes_[a.id()].requires_grad, {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, out_id](Tape& t) {
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id()) += t.grad_of(out_id).transpose();
  };
  return out;
}

Var Tape::add_row_broadcast(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row_broadcast: row must be 1 x cols(a)");
  }
  Matrix value = a.value();
  value.rowwise() += row.value().row(0);
  Var out = emplace(std::move(value), any_requires_grad({a, row}), {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, row, out_id](Tape& t) {
    const Matrix& g = t.grad_of(out_id);
    if (t.nodes_[a.id()].requires_grad) t.grad_ref(a.id()) += g;
    if (t.nodes_[row.id()].requires_grad)
      t.grad_ref(row.id()).row(0) += g.colwise().sum();
  };
  return out;
}

Var Tape::col_block(Var a, int first_col, int num_cols) {
  Var out = emplace(a.value().middleCols(first_col, num_cols),
                    nodes_[a.id()].requires_grad, {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, first_col, num_cols, out_id](Tape& t) {
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id()).middleCols(first_col, num_cols) += t.grad_of(out_id);
  };
  return out;
}

Var Tape::hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat: no parts");
  Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("hcat: row mismatch");
    cols += p.cols();
    rg = rg || nodes_[p.id()].requires_grad;
  }
  Matrix value(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    value.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Var out = emplace(std::move(value), rg, {});
  const int out_id = out.id();
  std::vector<Var> captured = parts;
  nodes_[out_id].backprop = [captured, out_id](Tape& t) {
    const Matrix& g = t.grad_of(out_id);
    Eigen::Index at = 0;
    for (const Var& p : captured) {
      if (t.nodes_[p.id()].requires_grad)
        t.grad_ref(p.id()) += g.middleCols(at, p.cols());
      at += p.cols();
    }
  };
  return out;
}

Var Tape::gather_rows(Var table, const std::vector<int>& indices) {
  const Matrix& src = table.value();
  Matrix value(static_cast<Eigen::Index>(indices.size()), src.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= src.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx) +
                              " outside table of " + std::to_string(src.rows()) +
                              " rows");
    }
    value.row(static_cast<Eigen::Index>(i)) = src.row(idx);
  }
  Var out = emplace(std::move(value), nodes_[table.id()].requires_grad, {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [table, indices, out_id](Tape& t) {
    if (!t.nodes_[table.id()].requires_grad) return;
    const Matrix& g = t.grad_of(out_id);
    Matrix& dst = t.grad_ref(table.id());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      dst.row(indices[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  };
  return out;
}

Var Tape::cwise_mul_const(Var a, const Matrix& factor) {
  if (a.rows() != factor.rows() || a.cols() != factor.cols()) {
    throw std::invalid_argument("cwise_mul_const: shape mismatch");
  }
  Var out = emplace(a.value().cwiseProduct(factor), nodes_[a.id()].requires_grad, {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, factor, out_id](Tape& t) {
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id()) += t.grad_of(out_id).cwiseProduct(factor);
  };
  return out;
}

Var Tape::scale_rows_const(Var a, const Eigen::VectorXd& row_factors) {
  if (row_factors.size() != a.rows()) {
    throw std::invalid_argument("scale_rows_const: factor length mismatch");
  }
  Var out = emplace(row_factors.asDiagonal() * a.value(),
                    nodes_[a.id()].requires_grad, {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, row_factors, out_id](Tape& t) {
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id()) += row_factors.asDiagonal() * t.grad_of(out_id);
  };
  return out;
}

Var Tape::softmax_rows(Var a) {
  Matrix value = a.value();
  for (Eigen::Index r = 0; r < value.rows(); ++r) {
    const double max = value.row(r).maxCoeff();
    value.row(r) = (value.row(r).array() - max).exp();
    value.row(r) /= value.row(r).sum();
  }
  Var out = emplace(std::move(value), nodes_[a.id()].requires_grad, {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, out_id](Tape& t) {
    if (!t.nodes_[a.id()].requires_grad) return;
    const Matrix& y = t.value_of(out_id);
    const Matrix& g = t.grad_of(out_id);
    Matrix gy = g.cwiseProduct(y);
    const Eigen::VectorXd row_sums = gy.rowwise().sum();
    gy.noalias() -= row_sums.asDiagonal() * y;
    t.grad_ref(a.id()) += gy;
  };
  return out;
}

Var Tape::layer_norm_rows(Var a, Var gain, Var bias, double eps) {
  const Eigen::Index d = a.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw std::invalid_argument("layer_norm_rows: gain/bias must be 1 x cols(a)");
  }
  const Matrix& x = a.value();
  Matrix normalized(x.rows(), d);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    normalized.row(r) = (x.row(r).array() - mean) * is;
  }
  Matrix value =
      (normalized.array().rowwise() * gain.value().row(0).array()).matrix();
  value.rowwise() += bias.value().row(0);
  Var out = emplace(std::move(value), any_requires_grad({a, gain, bias}), {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, gain, bias, normalized, inv_std, out_id](Tape& t) {
    const Matrix& g = t.grad_of(out_id);
    if (t.nodes_[gain.id()].requires_grad)
      t.grad_ref(gain.id()).row(0) += g.cwiseProduct(normalized).colwise().sum();
    if (t.nodes_[bias.id()].requires_grad)
      t.grad_ref(bias.id()).row(0) += g.colwise().sum();
    if (!t.nodes_[a.id()].requires_grad) return;
    // d_normalized = g * gain; dx = (d_norm - mean(d_norm) - x_hat * mean(d_norm .* x_hat)) / std
    Matrix dn =
        (g.array().rowwise() * t.value_of(gain.id()).row(0).array()).matrix();
    Matrix& dst = t.grad_ref(a.id());
    for (Eigen::Index r = 0; r < dn.rows(); ++r) {
      const double mean_dn = dn.row(r).mean();
      const double mean_dn_xhat =
          dn.row(r).cwiseProduct(normalized.row(r)).mean();
      dst.row(r).array() += (dn.row(r).array() - mean_dn -
                             normalized.row(r).array() * mean_dn_xhat) *
                            inv_std(r);
    }
  };
  return out;
}

namespace {
double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
}  // namespace

Var Tape::gelu(Var a) {
  Matrix value = a.value().unaryExpr(
      [](double x) { return x * normal_cdf(x); });
  Var out = emplace(std::move(value), nodes_[a.id()].requires_grad, {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, out_id](Tape& t) {
    if (!t.nodes_[a.id()].requires_grad) return;
    // d/dx x*Phi(x) = Phi(x) + x*phi(x)
    const Matrix derivative = t.value_of(a.id()).unaryExpr([](double x) {
      return normal_cdf(x) + x * std::exp(-0.5 * x * x) * kInvSqrt2Pi;
    });
    t.grad_ref(a.id()) += t.grad_of(out_id).cwiseProduct(derivative);
  };
  return out;
}

Var Tape::mean_rows(Var a) {
  const double inv_n = 1.0 / static_cast<double>(a.rows());
  Matrix value = a.value().colwise().sum() * inv_n;
  Var out = emplace(std::move(value), nodes_[a.id()].requires_grad, {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, inv_n, out_id](Tape& t) {
    if (!t.nodes_[a.id()].requires_grad) return;
    const Matrix& g = t.grad_of(out_id);
    t.grad_ref(a.id()).rowwise() += (g.row(0) * inv_n).eval();
  };
  return out;
}

Var Tape::dot(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("dot: shape mismatch");
  }
  Matrix value(1, 1);
  value(0, 0) = a.value().cwiseProduct(b.value()).sum();
  Var out = emplace(std::move(value), any_requires_grad({a, b}), {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, b, out_id](Tape& t) {
    const double g = t.grad_of(out_id)(0, 0);
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id()) += g * t.value_of(b.id());
    if (t.nodes_[b.id()].requires_grad)
      t.grad_ref(b.id()) += g * t.value_of(a.id());
  };
  return out;
}

Var Tape::mul_scalar(Var a, Var b) {
  Matrix value(1, 1);
  value(0, 0) = a.scalar() * b.scalar();
  Var out = emplace(std::move(value), any_requires_grad({a, b}), {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, b, out_id](Tape& t) {
    const double g = t.grad_of(out_id)(0, 0);
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id())(0, 0) += g * t.value_of(b.id())(0, 0);
    if (t.nodes_[b.id()].requires_grad)
      t.grad_ref(b.id())(0, 0) += g * t.value_of(a.id())(0, 0);
  };
  return out;
}

Var Tape::div_scalar(Var a, Var b) {
  Matrix value(1, 1);
  value(0, 0) = a.scalar() / b.scalar();
  Var out = emplace(std::move(value), any_requires_grad({a, b}), {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, b, out_id](Tape& t) {
    const double g = t.grad_of(out_id)(0, 0);
    const double bv = t.value_of(b.id())(0, 0);
    if (t.nodes_[a.id()].requires_grad) t.grad_ref(a.id())(0, 0) += g / bv;
    if (t.nodes_[b.id()].requires_grad)
      t.grad_ref(b.id())(0, 0) -= g * t.value_of(a.id())(0, 0) / (bv * bv);
  };
  return out;
}

Var Tape::sqrt_scalar(Var a) {
  Matrix value(1, 1);
  value(0, 0) = std::sqrt(a.scalar());
  Var out = emplace(std::move(value), nodes_[a.id()].requires_grad, {});
  const int out_id = out.id();
  nodes_[out_id].backprop = [a, out_id](Tape& t) {
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id())(0, 0) +=
          t.grad_of(out_id)(0, 0) * 0.5 / t.value_of(out_id)(0, 0);
  };
  return out;
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::cosine(Var a, Var b) {
  Var num = dot(a, b);
  Var norms = mul_scalar(dot(a, a), dot(b, b));
  return div_scalar(num, sqrt_scalar(norms));
}

Var Tape::logsumexp_row(Var a) {
  if (a.rows() != 1) throw std::invalid_argument("logsumexp_row: expects 1 x n");
  const double max = a.value().row(0).maxCoeff();
  const Eigen::RowVectorXd shifted =
      (a.value().row(0).array() - max).exp().matrix();
  Matrix value(1, 1);
  value(0, 0) = max + std::log(shifted.sum());
  Var out = emplace(std::move(value), nodes_[a.id()].requires_grad, {});
  const int out_id = out.id();
  const Eigen::RowVectorXd softmax = shifted / shifted.sum();
  nodes_[out_id].backprop = [a, softmax, out_id](Tape& t) {
    if (t.nodes_[a.id()].requires_grad)
      t.grad_ref(a.id()).row(0) += t.grad_of(out_id)(0, 0) * softmax;
  };
  return out;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::invalid_argument("backward: foreign var");
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("backward: root must be scalar");
  }
  for (Node& node : nodes_) {
    if (node.requires_grad) {
      node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
    }
  }
  if (!nodes_[root.id()].requires_grad) {
    // loss does not depend on any parameter; all gradients stay zero
    return;
  }
  nodes_[root.id()].grad(0, 0) = 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.requires_grad && node.backprop && node.grad.cwiseAbs().sum() != 0.0) {
      node.backprop(*this);
    }
  }
}

}  // namespace dial2vec::ag
