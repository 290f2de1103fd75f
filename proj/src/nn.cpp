#include "iaf/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace iaf::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;

}  // namespace

void zero_grads(const ParamList& params) {
  for (Param* p : params) p->zero_grad();
}

void he_normal(Param& p, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : p.value.data()) v = stddev * standard_normal(rng);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel, std::size_t stride, std::optional<std::size_t> padding)
    : weight(name + ".weight", {kernel, kernel, in_channels, out_channels}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(padding.value_or(kernel / 2)) {
  if (kernel == 0 || stride == 0) throw ShapeError("Conv2d: kernel and stride must be positive");
}

void Conv2d::init(Rng& rng) {
  he_normal(weight, k_ * k_ * in_, rng);
  bias.value.fill(0.0);
}

void Conv2d::check_input(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != in_) {
    throw ShapeError(weight.name + ": expected input HxWx" + std::to_string(in_) + ", got " +
                     shape_string(x.shape()));
  }
  if (x.dim(0) + 2 * pad_ < k_ || x.dim(1) + 2 * pad_ < k_) {
    throw ShapeError(weight.name + ": kernel " + std::to_string(k_) +
                     " does not fit padded input " + shape_string(x.shape()));
  }
}

Shape Conv2d::output_shape(const Shape& input) const {
  return {(input[0] + 2 * pad_ - k_) / stride_ + 1, (input[1] + 2 * pad_ - k_) / stride_ + 1,
          out_};
}

namespace {

// Rows are output pixels, columns are (ky, kx, cin) patch entries.
RowMatrix im2col(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad,
                 std::size_t ho, std::size_t wo) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(ho * wo),
                                   static_cast<Eigen::Index>(k * k * c));
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* row = cols.data() + (oy * wo + ox) * k * k * c;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
        if (iy < 0 || iy >= static_cast<long>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
          if (ix < 0 || ix >= static_cast<long>(w)) continue;
          std::copy_n(x.ptr() + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c,
                      c, row + (ky * k + kx) * c);
        }
      }
    }
  }
  return cols;
}

void col2im_add(const RowMatrix& dcols, Tensor& dx, std::size_t k, std::size_t stride,
                std::size_t pad, std::size_t ho, std::size_t wo) {
  const std::size_t h = dx.dim(0), w = dx.dim(1), c = dx.dim(2);
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const double* row = dcols.data() + (oy * wo + ox) * k * k * c;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
        if (iy < 0 || iy >= static_cast<long>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
          if (ix < 0 || ix >= static_cast<long>(w)) continue;
          double* dst = dx.ptr() + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
          const double* src = row + (ky * k + kx) * c;
          for (std::size_t ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

bool is_pointwise(std::size_t k, std::size_t stride, std::size_t pad) {
  return k == 1 && stride == 1 && pad == 0;
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x) const {
  check_input(x);
  const Shape os = output_shape(x.shape());
  const auto rows = static_cast<Eigen::Index>(os[0] * os[1]);
  const auto kdim = static_cast<Eigen::Index>(k_ * k_ * in_);
  Tensor y(os);
  MatMap ym(y.ptr(), rows, static_cast<Eigen::Index>(out_));
  ConstMatMap wm(weight.value.ptr(), kdim, static_cast<Eigen::Index>(out_));
  if (is_pointwise(k_, stride_, pad_)) {
    ym.noalias() = ConstMatMap(x.ptr(), rows, kdim) * wm;
  } else {
    ym.noalias() = im2col(x, k_, stride_, pad_, os[0], os[1]) * wm;
  }
  ym.rowwise() += ConstVecMap(bias.value.ptr(), static_cast<Eigen::Index>(out_));
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& dy) {
  check_input(x);
  const Shape os = output_shape(x.shape());
  dy.expect_shape(os, weight.name + " backward dy");
  const auto rows = static_cast<Eigen::Index>(os[0] * os[1]);
  const auto kdim = static_cast<Eigen::Index>(k_ * k_ * in_);
  const auto cout = static_cast<Eigen::Index>(out_);
  ConstMatMap dym(dy.ptr(), rows, cout);
  MatMap dw(weight.grad.ptr(), kdim, cout);
  ConstMatMap wm(weight.value.ptr(), kdim, cout);
  VecMap(bias.grad.ptr(), cout) += dym.colwise().sum();

  Tensor dx(x.shape());
  if (is_pointwise(k_, stride_, pad_)) {
    dw.noalias() += ConstMatMap(x.ptr(), rows, kdim).transpose() * dym;
    MatMap(dx.ptr(), rows, kdim).noalias() = dym * wm.transpose();
  } else {
    const RowMatrix cols = im2col(x, k_, stride_, pad_, os[0], os[1]);
    dw.noalias() += cols.transpose() * dym;
    const RowMatrix dcols = dym * wm.transpose();
    col2im_add(dcols, dx, k_, stride_, pad_, os[0], os[1]);
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, std::size_t in_features, std::size_t out_features)
    : weight(name + ".weight", {in_features, out_features}),
      bias(name + ".bias", {out_features}),
      in_(in_features),
      out_(out_features) {}

void Linear::init(Rng& rng) {
  he_normal(weight, in_, rng);
  bias.value.fill(0.0);
}

namespace {

std::size_t batch_rows(const Tensor& x, std::size_t features, const std::string& name) {
  if (x.rank() == 1 && x.dim(0) == features) return 1;
  if (x.rank() == 2 && x.dim(1) == features) return x.dim(0);
  throw ShapeError(name + ": expected input [" + std::to_string(features) + "] or [Nx" +
                   std::to_string(features) + "], got " + shape_string(x.shape()));
}

}  // namespace

Tensor Linear::forward(const Tensor& x) const {
  const std::size_t n = batch_rows(x, in_, weight.name);
  Tensor y(x.rank() == 1 ? Shape{out_} : Shape{n, out_});
  MatMap ym(y.ptr(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_));
  ym.noalias() = ConstMatMap(x.ptr(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in_)) *
                 ConstMatMap(weight.value.ptr(), static_cast<Eigen::Index>(in_),
                             static_cast<Eigen::Index>(out_));
  ym.rowwise() += ConstVecMap(bias.value.ptr(), static_cast<Eigen::Index>(out_));
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& dy) {
  const std::size_t n = batch_rows(x, in_, weight.name);
  if (dy.size() != n * out_) {
    throw ShapeError(weight.name + " backward: dy has " + std::to_string(dy.size()) +
                     " values, expected " + std::to_string(n * out_));
  }
  const auto ni = static_cast<Eigen::Index>(n), ii = static_cast<Eigen::Index>(in_),
             oi = static_cast<Eigen::Index>(out_);
  ConstMatMap xm(x.ptr(), ni, ii);
  ConstMatMap dym(dy.ptr(), ni, oi);
  MatMap(weight.grad.ptr(), ii, oi).noalias() += xm.transpose() * dym;
  VecMap(bias.grad.ptr(), oi) += dym.colwise().sum();
  Tensor dx(x.shape());
  MatMap(dx.ptr(), ni, ii).noalias() = dym * ConstMatMap(weight.value.ptr(), ii, oi).transpose();
  return dx;
}

// ---------------------------------------------------------------- ReLU / pool / dropout

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  dy.expect_shape(x.shape(), "relu backward");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

namespace {

// Flat index of the window maximum; padding cells never win.
std::size_t pool_argmax(const Tensor& x, std::size_t oy, std::size_t ox, std::size_t c) {
  const std::size_t h = x.dim(0), w = x.dim(1), ch = x.dim(2);
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t dy = 0; dy < 2; ++dy) {
    const std::size_t iy = 2 * oy + dy;
    if (iy >= h) continue;
    for (std::size_t dx = 0; dx < 2; ++dx) {
      const std::size_t ix = 2 * ox + dx;
      if (ix >= w) continue;
      const std::size_t idx = (iy * w + ix) * ch + c;
      if (!found || x[idx] > best_v) {
        best = idx;
        best_v = x[idx];
        found = true;
      }
    }
  }
  return best;
}

}  // namespace

Tensor maxpool2x2_forward(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("maxpool2x2: expected HxWxC, got " + shape_string(x.shape()));
  const std::size_t ho = (x.dim(0) + 1) / 2, wo = (x.dim(1) + 1) / 2, c = x.dim(2);
  Tensor y({ho, wo, c});
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox)
      for (std::size_t ci = 0; ci < c; ++ci) y.at(oy, ox, ci) = x[pool_argmax(x, oy, ox, ci)];
  return y;
}

Tensor maxpool2x2_backward(const Tensor& x, const Tensor& dy) {
  const std::size_t ho = (x.dim(0) + 1) / 2, wo = (x.dim(1) + 1) / 2, c = x.dim(2);
  dy.expect_shape({ho, wo, c}, "maxpool2x2 backward");
  Tensor dx(x.shape());
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox)
      for (std::size_t ci = 0; ci < c; ++ci) dx[pool_argmax(x, oy, ox, ci)] += dy.at(oy, ox, ci);
  return dx;
}

DropoutResult dropout_forward(const Tensor& x, double rate, Rng* rng, bool train) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0,1)");
  DropoutResult r{x, Tensor(x.shape(), 1.0)};
  if (!train || rate == 0.0) return r;
  if (rng == nullptr) throw std::invalid_argument("dropout: training mode requires an rng");
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = uniform01(*rng) < rate ? 0.0 : keep_scale;
    r.mask[i] = m;
    r.output[i] = x[i] * m;
  }
  return r;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& dy) {
  if (dy.size() != mask.size()) throw ShapeError("dropout backward: mask/gradient size mismatch");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
  return dx;
}

// ---------------------------------------------------------------- losses

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

LossGrad softmax_ce(std::span<const double> logits, std::size_t label) {
  if (logits.size() < 2) throw std::invalid_argument("softmax_ce: need at least two classes");
  if (label >= logits.size()) throw std::invalid_argument("softmax_ce: label out of range");
  LossGrad r;
  r.grad = softmax(logits);
  r.loss = -std::log(std::max(r.grad[label], kLogFloor));
  r.grad[label] -= 1.0;
  return r;
}

LossGrad smooth_l1(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("smooth_l1: size mismatch");
  LossGrad r;
  r.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    if (std::abs(d) < 1.0) {
      r.loss += 0.5 * d * d;
      r.grad[i] = d;
    } else {
      r.loss += std::abs(d) - 0.5;
      r.grad[i] = d > 0.0 ? 1.0 : -1.0;
    }
  }
  return r;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

LossGrad sigmoid_bce_mean(std::span<const double> logits, std::span<const double> target) {
  if (logits.size() != target.size() || logits.empty()) {
    throw std::invalid_argument("sigmoid_bce_mean: size mismatch or empty input");
  }
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  LossGrad r;
  r.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits[i]);
    const double q = 1.0 - p;
    const double g = target[i];
    double loss = 0.0, grad = 0.0;
    if (g != 0.0) {
      loss -= g * std::log(std::max(p, kLogFloor));
      if (p > kLogFloor) grad -= g * q;
    }
    if (g != 1.0) {
      loss -= (1.0 - g) * std::log(std::max(q, kLogFloor));
      if (q > kLogFloor) grad += (1.0 - g) * p;
    }
    r.loss += loss * inv_n;
    r.grad[i] = grad * inv_n;
  }
  return r;
}

// ---------------------------------------------------------------- optimizers

Sgd::Sgd(ParamList params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (Param* p : params_) velocity_.emplace_back(p->value.shape());
}

void Sgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    Tensor& vel = velocity_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j] + weight_decay_ * p.value[j];
      vel[j] = momentum_ * vel[j] + g;
      p.value[j] -= lr * vel[j];
    }
  }
}

void adam_step(const ParamList& params, AdamState& s) {
  if (s.m.empty()) {
    for (Param* p : params) {
      s.m.emplace_back(p->value.shape());
      s.v.emplace_back(p->value.shape());
    }
  }
  if (s.m.size() != params.size()) throw std::invalid_argument("adam_step: state/param mismatch");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    s.m[i].expect_shape(p.value.shape(), "adam moment");
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      s.m[i][j] = s.beta1 * s.m[i][j] + (1.0 - s.beta1) * g;
      s.v[i][j] = s.beta2 * s.v[i][j] + (1.0 - s.beta2) * g * g;
      const double mhat = s.m[i][j] / c1;
      const double vhat = s.v[i][j] / c2;
      p.value[j] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

// ---------------------------------------------------------------- grad check

GradCheckReport grad_check(const ParamList& params, const std::function<double(bool)>& objective,
                           const GradCheckOptions& opts) {
  zero_grads(params);
  objective(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  Rng rng(opts.seed);
  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    std::vector<std::size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opts.max_entries_per_param > 0 && idx.size() > opts.max_entries_per_param) {
      shuffle(idx, rng);
      idx.resize(opts.max_entries_per_param);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t j : idx) {
      const double orig = p.value[j];
      p.value[j] = orig + opts.h;
      const double up = objective(false);
      p.value[j] = orig - opts.h;
      const double down = objective(false);
      p.value[j] = orig;
      const double numeric = (up - down) / (2.0 * opts.h);
      const double a = analytic[pi][j];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
      ++report.entries_checked;
      if (report.worst_param.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = j;
      }
    }
  }
  zero_grads(params);
  return report;
}

}  // namespace iaf::nn
