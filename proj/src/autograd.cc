// Copyright 2026 The envconv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "envconv/autograd.h"

#include <cmath>
#include <limits>
#include <memory>

#include <fmt/format.h>

namespace envconv::nn {
namespace {

constexpr uint64_t kFnvOffset = 14695981039346656037ull;
constexpr uint64_t kFnvPrime = 1099511628211ull;

void Require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw Error(fmt::format("{}: {}", op, what));
}

std::string ShapeStr(const Matrix& m) {
  return fmt::format("{}x{}", m.rows(), m.cols());
}

void RequireSameShape(const Matrix& a, const Matrix& b, const char* op) {
  Require(a.rows() == b.rows() && a.cols() == b.cols(), op,
          fmt::format("shape mismatch {} vs {}", ShapeStr(a), ShapeStr(b)));
}

// Adds g into the gradient of `id` when that node participates in backward.
void Accumulate(Tape& tape, int id, const Matrix& g) {
  if (tape.requires_grad(id)) tape.grad(id) += g;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

Parameter& ParameterStore::Create(const std::string& name, Matrix init,
                                  bool trainable) {
  if (by_name_.count(name)) throw Error(fmt::format("duplicate parameter {}", name));
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->grad = Matrix::Zero(p->value.rows(), p->value.cols());
  p->m = Matrix::Zero(p->value.rows(), p->value.cols());
  p->v = Matrix::Zero(p->value.rows(), p->value.cols());
  p->trainable = trainable;
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  by_name_[name] = raw;
  return *raw;
}

Parameter& ParameterStore::Get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error(fmt::format("unknown parameter {}", name));
  return *it->second;
}

const Parameter& ParameterStore::Get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error(fmt::format("unknown parameter {}", name));
  return *it->second;
}

bool ParameterStore::Contains(const std::string& name) const {
  return by_name_.count(name) > 0;
}

std::vector<Parameter*> ParameterStore::WithPrefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p->trainable && p->name.compare(0, prefix.size(), prefix) == 0) {
      out.push_back(p.get());
    }
  }
  return out;
}

size_t ParameterStore::TotalSize() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p->value.size());
  return n;
}

void ParameterStore::ZeroGrad() {
  for (auto& p : params_) p->ZeroGrad();
}

Matrix GlorotUniform(int rows, int cols, int fan_in, int fan_out,
                     std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double u = (rng() >> 11) * 0x1.0p-53;
      m(r, c) = (2.0 * u - 1.0) * limit;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Tape

const Matrix& Var::value() const { return tape->value(id); }

void Tape::MixBranches(uint64_t digest) {
  branch_signature_ = (branch_signature_ ^ digest) * kFnvPrime;
}

Var Tape::Constant(Matrix value) {
  Node node;
  node.own = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::Leaf(Parameter& param) {
  Node node;
  node.external = &param.value;
  node.param = &param;
  node.requires_grad = record_ && param.trainable;
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::Record(Matrix value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node node;
  node.own = std::move(value);
  if (record_) {
    for (const Var& in : inputs) {
      if (in.tape != this) throw Error("op mixes nodes from different tapes");
      if (nodes_[in.id].requires_grad) node.requires_grad = true;
    }
    if (node.requires_grad) node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.own;
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::Backward(Var output, double seed) {
  if (!record_) throw Error("Backward on a tape without gradient recording");
  const Matrix& out = value(output.id);
  if (out.rows() != 1 || out.cols() != 1) {
    throw Error("Backward requires a scalar output");
  }
  if (!nodes_[output.id].requires_grad) return;
  grad(output.id)(0, 0) += seed;
  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_ready || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && n.grad_ready && n.requires_grad) {
      n.param->grad += n.grad;
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear ops

Var Add(Var a, Var b) {
  RequireSameShape(a.value(), b.value(), "Add");
  return a.tape->Record(a.value() + b.value(), {a, b},
                        [ia = a.id, ib = b.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          Accumulate(t, ia, g);
                          Accumulate(t, ib, g);
                        });
}

Var Sub(Var a, Var b) {
  RequireSameShape(a.value(), b.value(), "Sub");
  return a.tape->Record(a.value() - b.value(), {a, b},
                        [ia = a.id, ib = b.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          Accumulate(t, ia, g);
                          if (t.requires_grad(ib)) t.grad(ib) -= g;
                        });
}

Var Scale(Var x, double s) {
  return x.tape->Record(x.value() * s, {x}, [ix = x.id, s](Tape& t, int self) {
    if (t.requires_grad(ix)) t.grad(ix) += t.grad(self) * s;
  });
}

Var Relu(Var x) {
  uint64_t digest = kFnvOffset;
  const Matrix& v = x.value();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    digest = (digest ^ (v.data()[i] > 0.0 ? 1u : 0u)) * kFnvPrime;
  }
  x.tape->MixBranches(digest);
  Matrix out = v.cwiseMax(0.0);
  return x.tape->Record(std::move(out), {x}, [ix = x.id](Tape& t, int self) {
    if (!t.requires_grad(ix)) return;
    const Matrix& in = t.value(ix);
    t.grad(ix).array() +=
        t.grad(self).array() * (in.array() > 0.0).cast<double>();
  });
}

Var MatMul(Var x, Var w) {
  Require(x.cols() == w.rows(), "MatMul",
          fmt::format("{} times {}", ShapeStr(x.value()), ShapeStr(w.value())));
  Matrix out = x.value() * w.value();
  return x.tape->Record(std::move(out), {x, w},
                        [ix = x.id, iw = w.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          if (t.requires_grad(ix)) {
                            t.grad(ix).noalias() += g * t.value(iw).transpose();
                          }
                          if (t.requires_grad(iw)) {
                            t.grad(iw).noalias() += t.value(ix).transpose() * g;
                          }
                        });
}

Var AddBias(Var x, Var bias) {
  Require(bias.rows() == 1 && bias.cols() == x.cols(), "AddBias",
          "bias must be 1 x cols");
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return x.tape->Record(std::move(out), {x, bias},
                        [ix = x.id, ib = bias.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          Accumulate(t, ix, g);
                          if (t.requires_grad(ib)) {
                            t.grad(ib) += g.colwise().sum();
                          }
                        });
}

Var Linear(Var x, Var w, Var bias) { return AddBias(MatMul(x, w), bias); }

Var MulConst(Var x, const Matrix& c) {
  RequireSameShape(x.value(), c, "MulConst");
  Matrix out = x.value().cwiseProduct(c);
  return x.tape->Record(std::move(out), {x}, [ix = x.id, c](Tape& t, int self) {
    if (t.requires_grad(ix)) t.grad(ix) += t.grad(self).cwiseProduct(c);
  });
}

Var AddConst(Var x, const Matrix& c) {
  RequireSameShape(x.value(), c, "AddConst");
  return x.tape->Record(x.value() + c, {x}, [ix = x.id](Tape& t, int self) {
    Accumulate(t, ix, t.grad(self));
  });
}

Var ScaleRows(Var x, const std::vector<double>& scale) {
  Require(static_cast<int>(scale.size()) == x.rows(), "ScaleRows",
          "one scale per row required");
  Eigen::Map<const Eigen::VectorXd> s(scale.data(), scale.size());
  Matrix out = s.asDiagonal() * x.value();
  return x.tape->Record(std::move(out), {x}, [ix = x.id, scale](Tape& t, int self) {
    if (!t.requires_grad(ix)) return;
    Eigen::Map<const Eigen::VectorXd> s(scale.data(), scale.size());
    t.grad(ix) += s.asDiagonal() * t.grad(self);
  });
}

Var GradScaleRows(Var x, const std::vector<double>& scale) {
  Require(static_cast<int>(scale.size()) == x.rows(), "GradScaleRows",
          "one scale per row required");
  return x.tape->Record(x.value(), {x}, [ix = x.id, scale](Tape& t, int self) {
    if (!t.requires_grad(ix)) return;
    Eigen::Map<const Eigen::VectorXd> s(scale.data(), scale.size());
    t.grad(ix) += s.asDiagonal() * t.grad(self);
  });
}

Var ConcatCols(Var a, Var b) {
  Require(a.rows() == b.rows(), "ConcatCols", "row counts differ");
  const int ca = a.cols();
  Matrix out(a.rows(), ca + b.cols());
  out.leftCols(ca) = a.value();
  out.rightCols(b.cols()) = b.value();
  return a.tape->Record(std::move(out), {a, b},
                        [ia = a.id, ib = b.id, ca](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          if (t.requires_grad(ia)) t.grad(ia) += g.leftCols(ca);
                          if (t.requires_grad(ib)) {
                            t.grad(ib) += g.rightCols(g.cols() - ca);
                          }
                        });
}

// ---------------------------------------------------------------------------
// Sequence ops

Var Conv1d(Var x, Var w, Var bias, const SeqShape& shape, int kernel,
           int dilation) {
  const int c_in = x.cols();
  const int c_out = w.cols();
  Require(x.rows() == shape.rows(), "Conv1d", "rows must equal batch * time");
  Require(w.rows() == kernel * c_in, "Conv1d",
          fmt::format("weight {} incompatible with kernel {} and {} inputs",
                      ShapeStr(w.value()), kernel, c_in));
  Require(bias.rows() == 1 && bias.cols() == c_out, "Conv1d", "bias shape");
  const int center = (kernel - 1) / 2;
  const int n = shape.rows();
  const Matrix& in = x.value();

  auto cols = std::make_shared<Matrix>(Matrix::Zero(n, kernel * c_in));
  for (int b = 0; b < shape.batch; ++b) {
    for (int t = 0; t < shape.time; ++t) {
      const int r = b * shape.time + t;
      for (int k = 0; k < kernel; ++k) {
        const int s = t + (k - center) * dilation;
        if (s < 0 || s >= shape.time) continue;
        cols->block(r, k * c_in, 1, c_in) = in.row(b * shape.time + s);
      }
    }
  }
  Matrix out = (*cols) * w.value();
  out.rowwise() += bias.value().row(0);
  return x.tape->Record(
      std::move(out), {x, w, bias},
      [ix = x.id, iw = w.id, ib = bias.id, cols, shape, kernel, dilation, c_in,
       center](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(iw)) t.grad(iw).noalias() += cols->transpose() * g;
        if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
        if (!t.requires_grad(ix)) return;
        const Matrix dcols = g * t.value(iw).transpose();
        Matrix& dx = t.grad(ix);
        for (int b = 0; b < shape.batch; ++b) {
          for (int tt = 0; tt < shape.time; ++tt) {
            const int r = b * shape.time + tt;
            for (int k = 0; k < kernel; ++k) {
              const int s = tt + (k - center) * dilation;
              if (s < 0 || s >= shape.time) continue;
              dx.row(b * shape.time + s) += dcols.block(r, k * c_in, 1, c_in);
            }
          }
        }
      });
}

Var MaxPool2(Var x, const SeqShape& shape) {
  Require(shape.time % 2 == 0, "MaxPool2", "time must be even");
  Require(x.rows() == shape.rows(), "MaxPool2", "rows must equal batch * time");
  const int half = shape.time / 2;
  const int c = x.cols();
  const Matrix& in = x.value();
  Matrix out(shape.batch * half, c);
  // Source row of each pooled element.
  auto argmax = std::make_shared<std::vector<int>>(out.size());
  for (int b = 0; b < shape.batch; ++b) {
    for (int t = 0; t < half; ++t) {
      const int r0 = b * shape.time + 2 * t;
      const int ro = b * half + t;
      for (int j = 0; j < c; ++j) {
        const bool first = in(r0, j) >= in(r0 + 1, j);
        out(ro, j) = first ? in(r0, j) : in(r0 + 1, j);
        (*argmax)[static_cast<size_t>(ro) * c + j] = first ? r0 : r0 + 1;
      }
    }
  }
  uint64_t digest = kFnvOffset;
  for (int a : *argmax) digest = (digest ^ static_cast<uint64_t>(a)) * kFnvPrime;
  x.tape->MixBranches(digest);
  return x.tape->Record(std::move(out), {x}, [ix = x.id, argmax, c](Tape& t, int self) {
    if (!t.requires_grad(ix)) return;
    const Matrix& g = t.grad(self);
    Matrix& dx = t.grad(ix);
    for (int r = 0; r < g.rows(); ++r) {
      for (int j = 0; j < c; ++j) {
        dx((*argmax)[static_cast<size_t>(r) * c + j], j) += g(r, j);
      }
    }
  });
}

Var ConvTranspose2(Var x, Var w, Var bias, const SeqShape& shape) {
  const int c_in = x.cols();
  const int c_out = w.cols();
  Require(x.rows() == shape.rows(), "ConvTranspose2", "rows must equal batch * time");
  Require(w.rows() == 2 * c_in, "ConvTranspose2", "weight must be (2 * c_in) x c_out");
  Require(bias.rows() == 1 && bias.cols() == c_out, "ConvTranspose2", "bias shape");
  const Matrix y0 = x.value() * w.value().topRows(c_in);
  const Matrix y1 = x.value() * w.value().bottomRows(c_in);
  Matrix out(2 * shape.rows(), c_out);
  for (int r = 0; r < shape.rows(); ++r) {
    // Row r = (b, t) maps to output rows (b, 2t) and (b, 2t + 1).
    out.row(2 * r) = y0.row(r) + bias.value().row(0);
    out.row(2 * r + 1) = y1.row(r) + bias.value().row(0);
  }
  return x.tape->Record(
      std::move(out), {x, w, bias},
      [ix = x.id, iw = w.id, ib = bias.id, c_in](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const int n = static_cast<int>(g.rows() / 2);
        Matrix g0(n, g.cols()), g1(n, g.cols());
        for (int r = 0; r < n; ++r) {
          g0.row(r) = g.row(2 * r);
          g1.row(r) = g.row(2 * r + 1);
        }
        if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
        const Matrix& xin = t.value(ix);
        if (t.requires_grad(iw)) {
          Matrix& dw = t.grad(iw);
          dw.topRows(c_in).noalias() += xin.transpose() * g0;
          dw.bottomRows(c_in).noalias() += xin.transpose() * g1;
        }
        if (t.requires_grad(ix)) {
          const Matrix& wv = t.value(iw);
          t.grad(ix).noalias() += g0 * wv.topRows(c_in).transpose();
          t.grad(ix).noalias() += g1 * wv.bottomRows(c_in).transpose();
        }
      });
}

Var LayerNorm(Var x, Var gamma, Var beta, double eps) {
  const int c = x.cols();
  Require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 &&
              beta.cols() == c,
          "LayerNorm", "gamma/beta must be 1 x channels");
  const Matrix& in = x.value();
  auto xhat = std::make_shared<Matrix>(in.rows(), c);
  auto inv_std = std::make_shared<Eigen::VectorXd>(in.rows());
  for (int r = 0; r < in.rows(); ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (in.row(r).array() - mean) * (*inv_std)(r);
  }
  Matrix out = (xhat->array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return x.tape->Record(
      std::move(out), {x, gamma, beta},
      [ix = x.id, ig = gamma.id, ib = beta.id, xhat, inv_std](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ig)) {
          t.grad(ig) += g.cwiseProduct(*xhat).colwise().sum();
        }
        if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
        if (!t.requires_grad(ix)) return;
        const Matrix dxhat =
            (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
        Matrix& dx = t.grad(ix);
        for (int r = 0; r < g.rows(); ++r) {
          const double mean_d = dxhat.row(r).mean();
          const double mean_dx = dxhat.row(r).dot(xhat->row(r)) / g.cols();
          dx.row(r).array() += (*inv_std)(r) * (dxhat.row(r).array() - mean_d -
                                                xhat->row(r).array() * mean_dx);
        }
      });
}

Var BatchNorm(Var x, Var gamma, Var beta, BatchNormState state, bool training) {
  const int c = x.cols();
  const int n = x.rows();
  Require(gamma.cols() == c && beta.cols() == c, "BatchNorm", "gamma/beta shape");
  Require(state.running_mean && state.running_var, "BatchNorm", "missing buffers");
  const Matrix& in = x.value();
  Eigen::RowVectorXd mean(c), inv_std(c);
  if (training) {
    Require(n > 1, "BatchNorm", "training mode needs more than one row");
    mean = in.colwise().mean();
    const Eigen::RowVectorXd var =
        (in.rowwise() - mean).array().square().colwise().mean();
    inv_std = (var.array() + state.eps).rsqrt();
    Matrix& rm = state.running_mean->value;
    Matrix& rv = state.running_var->value;
    const double unbias = static_cast<double>(n) / (n - 1);
    rm.row(0) = (1.0 - state.momentum) * rm.row(0) + state.momentum * mean;
    rv.row(0) = (1.0 - state.momentum) * rv.row(0) + state.momentum * unbias * var;
  } else {
    mean = state.running_mean->value.row(0);
    inv_std = (state.running_var->value.row(0).array() + state.eps).rsqrt();
  }
  auto xhat = std::make_shared<Matrix>(
      ((in.rowwise() - mean).array().rowwise() * inv_std.array()).matrix());
  Matrix out = (xhat->array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return x.tape->Record(
      std::move(out), {x, gamma, beta},
      [ix = x.id, ig = gamma.id, ib = beta.id, xhat, inv_std, training](Tape& t,
                                                                       int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ig)) {
          t.grad(ig) += g.cwiseProduct(*xhat).colwise().sum();
        }
        if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
        if (!t.requires_grad(ix)) return;
        const Eigen::RowVectorXd scale =
            t.value(ig).row(0).array() * inv_std.array();
        if (!training) {
          t.grad(ix) += (g.array().rowwise() * scale.array()).matrix();
          return;
        }
        const Eigen::RowVectorXd mean_g = g.colwise().mean();
        const Eigen::RowVectorXd mean_gx = g.cwiseProduct(*xhat).colwise().mean();
        Matrix centered = g.rowwise() - mean_g;
        centered -= (xhat->array().rowwise() * mean_gx.array()).matrix();
        t.grad(ix) += (centered.array().rowwise() * scale.array()).matrix();
      });
}

Var MultiHeadAttention(Var q, Var k, Var v, const SeqShape& shape, int heads,
                       const std::vector<bool>& key_mask) {
  const int d = q.cols();
  Require(d % heads == 0, "MultiHeadAttention", "width not divisible by heads");
  Require(q.rows() == shape.rows() && k.rows() == shape.rows() &&
              v.rows() == shape.rows() && k.cols() == d && v.cols() == d,
          "MultiHeadAttention", "q/k/v shapes");
  Require(static_cast<int>(key_mask.size()) == shape.rows(), "MultiHeadAttention",
          "key mask must have one entry per row");
  const int dh = d / heads;
  const int T = shape.time;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs[b * heads + h] is T x T.
  auto probs = std::make_shared<std::vector<Matrix>>(shape.batch * heads);
  Matrix out = Matrix::Zero(shape.rows(), d);
  for (int b = 0; b < shape.batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto qb = q.value().block(b * T, h * dh, T, dh);
      const auto kb = k.value().block(b * T, h * dh, T, dh);
      const auto vb = v.value().block(b * T, h * dh, T, dh);
      Matrix s = (qb * kb.transpose()) * scale;
      for (int j = 0; j < T; ++j) {
        if (!key_mask[b * T + j]) {
          s.col(j).setConstant(-std::numeric_limits<double>::infinity());
        }
      }
      for (int i = 0; i < T; ++i) {
        const double mx = s.row(i).maxCoeff();
        if (!std::isfinite(mx)) {
          s.row(i).setZero();
          continue;
        }
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      out.block(b * T, h * dh, T, dh) = s * vb;
      (*probs)[b * heads + h] = std::move(s);
    }
  }
  return q.tape->Record(
      std::move(out), {q, k, v},
      [iq = q.id, ik = k.id, iv = v.id, probs, shape, heads, dh, scale](Tape& t,
                                                                       int self) {
        const Matrix& g = t.grad(self);
        const int T = shape.time;
        const bool need_q = t.requires_grad(iq);
        const bool need_k = t.requires_grad(ik);
        const bool need_v = t.requires_grad(iv);
        for (int b = 0; b < shape.batch; ++b) {
          for (int h = 0; h < heads; ++h) {
            const Matrix& p = (*probs)[b * heads + h];
            const auto gb = g.block(b * T, h * dh, T, dh);
            const auto qb = t.value(iq).block(b * T, h * dh, T, dh);
            const auto kb = t.value(ik).block(b * T, h * dh, T, dh);
            const auto vb = t.value(iv).block(b * T, h * dh, T, dh);
            if (need_v) {
              t.grad(iv).block(b * T, h * dh, T, dh).noalias() += p.transpose() * gb;
            }
            if (!need_q && !need_k) continue;
            const Matrix dp = gb * vb.transpose();
            const Eigen::VectorXd rowdot = dp.cwiseProduct(p).rowwise().sum();
            const Matrix ds =
                (p.array() * (dp.colwise() - rowdot).array()).matrix() * scale;
            if (need_q) t.grad(iq).block(b * T, h * dh, T, dh).noalias() += ds * kb;
            if (need_k) {
              t.grad(ik).block(b * T, h * dh, T, dh).noalias() += ds.transpose() * qb;
            }
          }
        }
      });
}

Var MaskedMeanPool(Var x, const SeqShape& shape, const std::vector<bool>& mask) {
  Require(x.rows() == shape.rows(), "MaskedMeanPool", "rows must equal batch * time");
  Require(static_cast<int>(mask.size()) == shape.rows(), "MaskedMeanPool",
          "mask must have one entry per row");
  const int c = x.cols();
  Matrix out = Matrix::Zero(shape.batch, c);
  std::vector<double> inv_count(shape.batch, 0.0);
  for (int b = 0; b < shape.batch; ++b) {
    int count = 0;
    for (int t = 0; t < shape.time; ++t) {
      const int r = b * shape.time + t;
      if (!mask[r]) continue;
      out.row(b) += x.value().row(r);
      ++count;
    }
    if (count > 0) {
      inv_count[b] = 1.0 / count;
      out.row(b) *= inv_count[b];
    }
  }
  return x.tape->Record(std::move(out), {x},
                        [ix = x.id, shape, mask, inv_count](Tape& t, int self) {
                          if (!t.requires_grad(ix)) return;
                          const Matrix& g = t.grad(self);
                          Matrix& dx = t.grad(ix);
                          for (int b = 0; b < shape.batch; ++b) {
                            for (int tt = 0; tt < shape.time; ++tt) {
                              const int r = b * shape.time + tt;
                              if (mask[r]) dx.row(r) += g.row(b) * inv_count[b];
                            }
                          }
                        });
}

Var Embedding(Var table, const std::vector<int>& indices) {
  const int bins = table.rows();
  Matrix out(static_cast<int>(indices.size()), table.cols());
  for (size_t i = 0; i < indices.size(); ++i) {
    Require(indices[i] >= 0 && indices[i] < bins, "Embedding", "index out of range");
    out.row(static_cast<int>(i)) = table.value().row(indices[i]);
  }
  return table.tape->Record(std::move(out), {table},
                            [it = table.id, indices](Tape& t, int self) {
                              if (!t.requires_grad(it)) return;
                              const Matrix& g = t.grad(self);
                              Matrix& dt = t.grad(it);
                              for (size_t i = 0; i < indices.size(); ++i) {
                                dt.row(indices[i]) += g.row(static_cast<int>(i));
                              }
                            });
}

// ---------------------------------------------------------------------------
// Losses

Var SoftmaxCrossEntropy(Var logits, const std::vector<int>& labels) {
  const int n = logits.rows();
  const int classes = logits.cols();
  Require(static_cast<int>(labels.size()) == n, "SoftmaxCrossEntropy",
          "one label per row required");
  auto probs = std::make_shared<Matrix>(n, classes);
  double loss = 0.0;
  for (int r = 0; r < n; ++r) {
    Require(labels[r] >= 0 && labels[r] < classes, "SoftmaxCrossEntropy",
            "label out of range");
    const auto row = logits.value().row(r);
    const double mx = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - mx).exp();
    const double z = e.sum();
    probs->row(r) = e / z;
    loss += std::log(z) + mx - row(labels[r]);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  return logits.tape->Record(std::move(out), {logits},
                             [il = logits.id, probs, labels](Tape& t, int self) {
                               if (!t.requires_grad(il)) return;
                               const double g = t.grad(self)(0, 0);
                               Matrix d = *probs;
                               for (size_t r = 0; r < labels.size(); ++r) {
                                 d(static_cast<int>(r), labels[r]) -= 1.0;
                               }
                               t.grad(il) += d * (g / labels.size());
                             });
}

Var WeightedMse(Var pred, const Matrix& target, const Matrix& weights) {
  RequireSameShape(pred.value(), target, "WeightedMse");
  RequireSameShape(pred.value(), weights, "WeightedMse");
  const double total = weights.sum();
  auto diff = std::make_shared<Matrix>(pred.value() - target);
  Matrix out(1, 1);
  out(0, 0) = total > 0.0
                  ? diff->array().square().cwiseProduct(weights.array()).sum() / total
                  : 0.0;
  return pred.tape->Record(std::move(out), {pred},
                           [ip = pred.id, diff, weights, total](Tape& t, int self) {
                             if (!t.requires_grad(ip) || total <= 0.0) return;
                             const double g = t.grad(self)(0, 0);
                             t.grad(ip) += diff->cwiseProduct(weights) * (2.0 * g / total);
                           });
}

Var SumScalars(const std::vector<Var>& terms) {
  Require(!terms.empty(), "SumScalars", "no terms");
  Matrix out = Matrix::Zero(1, 1);
  std::vector<int> ids;
  for (const Var& v : terms) {
    Require(v.rows() == 1 && v.cols() == 1, "SumScalars", "terms must be 1x1");
    out(0, 0) += v.scalar();
    ids.push_back(v.id);
  }
  return terms.front().tape->Record(std::move(out), terms,
                                    [ids](Tape& t, int self) {
                                      const Matrix& g = t.grad(self);
                                      for (int id : ids) Accumulate(t, id, g);
                                    });
}

Var ScaleScalar(Var x, double s) { return Scale(x, s); }

}  // namespace envconv::nn
