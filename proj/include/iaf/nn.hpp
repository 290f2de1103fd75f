#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iaf/random.hpp"
#include "iaf/tensor.hpp"

namespace iaf::nn {

/// A learnable tensor and its gradient accumulator (same shape).
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}

  void zero_grad() { grad.fill(0.0); }
};

using ParamList = std::vector<Param*>;
using ConstParamList = std::vector<const Param*>;

inline ConstParamList as_const(const ParamList& params) { return {params.begin(), params.end()}; }

void zero_grads(const ParamList& params);

/// Gaussian init with std sqrt(2 / fan_in).
void he_normal(Param& p, std::size_t fan_in, Rng& rng);

// Layers hold parameters only. Backward takes the forward input explicitly,
// so one layer may be applied several times per step (shared heads) and
// forward passes are safe to run concurrently on an immutable model.

/// 2-D convolution over H x W x C maps; weight layout k x k x Cin x Cout.
class Conv2d {
 public:
  Conv2d() = default;
  /// padding defaults to kernel / 2 ("same" for odd kernels at stride 1).
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride = 1, std::optional<std::size_t> padding = std::nullopt);

  Tensor forward(const Tensor& x) const;
  /// Accumulates weight/bias gradients and returns dL/dx.
  Tensor backward(const Tensor& x, const Tensor& dy);

  Shape output_shape(const Shape& input) const;
  void init(Rng& rng);
  ParamList params() { return {&weight, &bias}; }

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }

  Param weight;
  Param bias;

 private:
  void check_input(const Tensor& x) const;

  std::size_t in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
};

/// Fully connected layer on N x D batches (a rank-1 input is a batch of one).
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in_features, std::size_t out_features);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& dy);

  void init(Rng& rng);
  ParamList params() { return {&weight, &bias}; }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Param weight;  // in x out
  Param bias;    // out

 private:
  std::size_t in_ = 0, out_ = 0;
};

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// 2x2 / stride 2 max pooling. Odd heights or widths are padded with -inf on
/// the bottom/right, so the output is ceil(H/2) x ceil(W/2).
Tensor maxpool2x2_forward(const Tensor& x);
/// Routes each output gradient to the first maximal input of its window.
Tensor maxpool2x2_backward(const Tensor& x, const Tensor& dy);

/// Inverted dropout: kept units are scaled by 1/(1-rate) at train time,
/// identity at inference. `mask` holds the per-element scale.
struct DropoutResult {
  Tensor output;
  Tensor mask;
};
DropoutResult dropout_forward(const Tensor& x, double rate, Rng* rng, bool train);
Tensor dropout_backward(const Tensor& mask, const Tensor& dy);

std::vector<double> softmax(std::span<const double> logits);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

inline constexpr double kLogFloor = 1e-12;

/// -log p(label) with p = softmax(logits); gradient is p - onehot.
LossGrad softmax_ce(std::span<const double> logits, std::size_t label);

/// Sum over coordinates of 0.5 d^2 (|d| < 1) or |d| - 0.5, d = pred - target.
LossGrad smooth_l1(std::span<const double> pred, std::span<const double> target);

/// Mean per-pixel binary cross-entropy between sigmoid(logits) and a {0,1}
/// mask, logs clamped at kLogFloor. Gradient is w.r.t. the logits.
LossGrad sigmoid_bce_mean(std::span<const double> logits, std::span<const double> target);

double sigmoid(double z);

// Optimizers.

class Sgd {
 public:
  Sgd(ParamList params, double momentum = 0.0, double weight_decay = 0.0);
  void step(double lr);
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  double momentum_, weight_decay_;
  std::vector<Tensor> velocity_;
};

struct AdamState {
  std::size_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update; moments are allocated on first use.
void adam_step(const ParamList& params, AdamState& state);

// Finite-difference verification.

struct GradCheckOptions {
  double h = 1e-6;
  /// Entries checked per parameter tensor; 0 means all of them.
  std::size_t max_entries_per_param = 0;
  /// Denominator floor for the relative error.
  double floor = 1e-4;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;

  bool passed(double tol) const { return max_rel_error < tol; }
};

/// Compares analytic gradients against central differences.
/// `objective(true)` must run forward and backward (accumulating into the
/// params' grads, which grad_check zeroes first) and return the loss;
/// `objective(false)` returns the loss only.
GradCheckReport grad_check(const ParamList& params, const std::function<double(bool)>& objective,
                           const GradCheckOptions& opts = {});

}  // namespace iaf::nn
