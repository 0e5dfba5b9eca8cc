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

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation of one forward pass. Sequence tensors are
// stored as (batch * time) x channels matrices, sample-major, described by a
// SeqShape. Parameters live in a ParameterStore and enter a tape as leaves;
// Tape::Backward accumulates their gradients into Parameter::grad.

#ifndef ENVCONV_AUTOGRAD_H_
#define ENVCONV_AUTOGRAD_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "envconv/common.h"

namespace envconv::nn {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  // Adam moments.
  Matrix m;
  Matrix v;
  int64_t adam_steps = 0;
  // Buffers (batch-norm running statistics) are saved but never optimized.
  bool trainable = true;

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

// Owns parameters by name; iteration order is creation order.
class ParameterStore {
 public:
  Parameter& Create(const std::string& name, Matrix init, bool trainable = true);
  Parameter& Get(const std::string& name);
  const Parameter& Get(const std::string& name) const;
  bool Contains(const std::string& name) const;

  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  // Trainable parameters whose name starts with `prefix`.
  std::vector<Parameter*> WithPrefix(const std::string& prefix);
  size_t TotalSize() const;
  void ZeroGrad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*> by_name_;
};

// Glorot-uniform initialization for a fan_in x fan_out weight.
Matrix GlorotUniform(int rows, int cols, int fan_in, int fan_out,
                     std::mt19937_64& rng);

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  int rows() const { return static_cast<int>(value().rows()); }
  int cols() const { return static_cast<int>(value().cols()); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  // With grad recording off no backward closures are kept.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Matrix value);
  Var Leaf(Parameter& param);

  // Records an op result; `fn` runs during Backward if any input needs grad.
  Var Record(Matrix value, const std::vector<Var>& inputs, BackwardFn fn);

  const Matrix& value(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of node `id`, zero-initialized on first access.
  Matrix& grad(int id);
  bool has_grad(int id) const { return nodes_[id].grad_ready; }

  // Reverse pass from a 1x1 node; parameter gradients are accumulated.
  void Backward(Var output, double seed = 1.0);

  bool recording() const { return record_; }
  size_t size() const { return nodes_.size(); }

  // Fingerprint of the branches taken so far by piecewise ops (ReLU signs,
  // max-pool winners). Two passes with equal fingerprints ran on the same
  // smooth piece of the function.
  uint64_t branch_signature() const { return branch_signature_; }
  void MixBranches(uint64_t digest);

 private:
  struct Node {
    Matrix own;
    const Matrix* external = nullptr;
    Matrix grad;
    bool grad_ready = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool record_;
  uint64_t branch_signature_ = 14695981039346656037ull;
};

// Batch of equal-length sequences stacked sample-major.
struct SeqShape {
  int batch = 1;
  int time = 1;
  int rows() const { return batch * time; }
};

// ---- elementwise and linear ----
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Scale(Var x, double s);
Var Relu(Var x);
// x (N x K) times w (K x M).
Var MatMul(Var x, Var w);
// Adds a 1 x M row vector to every row.
Var AddBias(Var x, Var bias);
Var Linear(Var x, Var w, Var bias);
// Elementwise product with a constant of the same shape.
Var MulConst(Var x, const Matrix& c);
Var AddConst(Var x, const Matrix& c);
// Multiplies row r by scale[r]; forward and backward both scaled.
Var ScaleRows(Var x, const std::vector<double>& scale);
// Forward identity; backward multiplies the gradient of row r by scale[r].
Var GradScaleRows(Var x, const std::vector<double>& scale);
Var ConcatCols(Var a, Var b);

// ---- sequence ops ----
// Same-padded 1-D convolution along time. w is (kernel * c_in) x c_out,
// tap-major; bias is 1 x c_out.
Var Conv1d(Var x, Var w, Var bias, const SeqShape& shape, int kernel,
           int dilation = 1);
// Max pooling with kernel 2, stride 2 along time; time must be even.
Var MaxPool2(Var x, const SeqShape& shape);
// Transposed convolution with kernel 2, stride 2: doubles time.
// w is (2 * c_in) x c_out, tap-major; bias is 1 x c_out.
Var ConvTranspose2(Var x, Var w, Var bias, const SeqShape& shape);
Var LayerNorm(Var x, Var gamma, Var beta, double eps = 1e-5);

struct BatchNormState {
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};
// Per-channel normalization over all rows. In training mode uses batch
// statistics and updates the running buffers; otherwise uses the buffers.
Var BatchNorm(Var x, Var gamma, Var beta, BatchNormState state, bool training);

// Scaled dot-product self-attention with `heads` heads over projected q, k, v
// ((batch*time) x d). Keys with key_mask[row] == false are ignored.
Var MultiHeadAttention(Var q, Var k, Var v, const SeqShape& shape, int heads,
                       const std::vector<bool>& key_mask);

// Mean over valid frames of each sample: batch x channels.
Var MaskedMeanPool(Var x, const SeqShape& shape, const std::vector<bool>& mask);

// Rows of `table` selected by `indices`.
Var Embedding(Var table, const std::vector<int>& indices);

// ---- reductions / losses ----
// Mean softmax cross-entropy over rows of `logits` (batch x classes).
Var SoftmaxCrossEntropy(Var logits, const std::vector<int>& labels);
// sum(w * (pred - target)^2) / sum(w) with per-element weights; 0 if sum(w) is
// 0. `weights` must match pred's shape.
Var WeightedMse(Var pred, const Matrix& target, const Matrix& weights);
// Sum of 1x1 nodes.
Var SumScalars(const std::vector<Var>& terms);
Var ScaleScalar(Var x, double s);

}  // namespace envconv::nn

#endif  // ENVCONV_AUTOGRAD_H_
