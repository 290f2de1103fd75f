#include "iaf/illumination.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace iaf::illumination {

double key_estimate(const Image& color) {
  if (color.channels() != 3) throw std::invalid_argument("key_estimate: expected a 3-channel image");
  return mean_pixel(color);
}

double range_estimate(const Image& color) {
  if (color.channels() != 3) throw std::invalid_argument("range_estimate: expected a 3-channel image");
  return (static_cast<double>(percentile(color, 90.0)) - static_cast<double>(percentile(color, 10.0))) / 255.0;
}

Tensor ian_input(const Image& color, std::size_t input_size) {
  if (color.channels() != 3) throw std::invalid_argument("IAN input must be a 3-channel color image");
  Tensor t = to_tensor(resize_bilinear(color, input_size, input_size));
  for (double& v : t.data()) v -= 0.5;
  return t;
}

namespace {

std::size_t flat_features(const IanConfig& cfg) {
  const std::size_t s = (((cfg.input_size + 1) / 2) + 1) / 2;
  return s * s * cfg.conv2_channels;
}

}  // namespace

IanModel::IanModel(const IanConfig& cfg)
    : cfg_(cfg),
      conv1_("ian.conv1", 3, cfg.conv1_channels, 3),
      conv2_("ian.conv2", cfg.conv1_channels, cfg.conv2_channels, 3),
      fc1_("ian.fc1", flat_features(cfg), cfg.fc1_units),
      fc2_("ian.fc2", cfg.fc1_units, 2) {}

void IanModel::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  fc1_.init(rng);
  fc2_.init(rng);
}

nn::ParamList IanModel::params() {
  return {&conv1_.weight, &conv1_.bias, &conv2_.weight, &conv2_.bias,
          &fc1_.weight,   &fc1_.bias,   &fc2_.weight,   &fc2_.bias};
}

namespace {

struct IanActivations {
  Tensor a1, r1, p1, a2, r2, p2, flat, f1, r3;
  nn::DropoutResult drop;
  Tensor logits;
};

IanActivations run_forward(const nn::Conv2d& c1, const nn::Conv2d& c2, const nn::Linear& f1,
                                  const nn::Linear& f2, double rate, const Tensor& x, Rng* rng,
                                  bool train) {
  IanActivations a;
  a.a1 = c1.forward(x);
  a.r1 = nn::relu_forward(a.a1);
  a.p1 = nn::maxpool2x2_forward(a.r1);
  a.a2 = c2.forward(a.p1);
  a.r2 = nn::relu_forward(a.a2);
  a.p2 = nn::maxpool2x2_forward(a.r2);
  a.flat = a.p2.reshaped({a.p2.size()});
  a.f1 = f1.forward(a.flat);
  a.r3 = nn::relu_forward(a.f1);
  a.drop = nn::dropout_forward(a.r3, rate, rng, train);
  a.logits = f2.forward(a.drop.output);
  a.logits.check_finite("IAN logits");
  return a;
}

}  // namespace

std::array<double, 2> IanModel::logits(const Tensor& input) const {
  input.expect_shape({cfg_.input_size, cfg_.input_size, 3}, "IAN input");
  const auto a = run_forward(conv1_, conv2_, fc1_, fc2_, cfg_.dropout, input, nullptr, false);
  return {a.logits[0], a.logits[1]};
}

double IanModel::infer(const Image& color) const {
  const auto l = logits(ian_input(color, cfg_.input_size));
  return nn::softmax(l)[kDayClass];
}

double IanModel::loss(const Tensor& input, std::size_t label) const {
  const auto l = logits(input);
  return nn::softmax_ce(l, label).loss;
}

double IanModel::accumulate_gradients(const Tensor& input, std::size_t label, Rng& rng,
                                      double grad_scale) {
  input.expect_shape({cfg_.input_size, cfg_.input_size, 3}, "IAN input");
  const auto a = run_forward(conv1_, conv2_, fc1_, fc2_, cfg_.dropout, input, &rng, true);
  nn::LossGrad lg = nn::softmax_ce(a.logits.data(), label);
  Tensor dlogits({2}, {lg.grad[0] * grad_scale, lg.grad[1] * grad_scale});
  Tensor d = fc2_.backward(a.drop.output, dlogits);
  d = nn::dropout_backward(a.drop.mask, d);
  d = nn::relu_backward(a.f1, d);
  d = fc1_.backward(a.flat, d);
  d.reshape(a.p2.shape());
  d = nn::maxpool2x2_backward(a.r2, d);
  d = nn::relu_backward(a.a2, d);
  d = conv2_.backward(a.p1, d);
  d = nn::maxpool2x2_backward(a.r1, d);
  d = nn::relu_backward(a.a1, d);
  conv1_.backward(input, d);
  return lg.loss;
}

nn::ConstParamList IanModel::params() const {
  return {&conv1_.weight, &conv1_.bias, &conv2_.weight, &conv2_.bias,
          &fc1_.weight,   &fc1_.bias,   &fc2_.weight,   &fc2_.bias};
}

Checkpoint IanModel::to_checkpoint() const {
  return make_checkpoint({{"model", "ian"},
                          {"class.night", std::to_string(kNightClass)},
                          {"class.day", std::to_string(kDayClass)},
                          {"input_size", std::to_string(cfg_.input_size)},
                          {"conv1_channels", std::to_string(cfg_.conv1_channels)},
                          {"conv2_channels", std::to_string(cfg_.conv2_channels)},
                          {"fc1_units", std::to_string(cfg_.fc1_units)}},
                         params());
}

IanModel IanModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.require("model") != "ian") throw CheckpointError("checkpoint is not an IAN model");
  if (ckpt.require("class.day") != std::to_string(kDayClass) ||
      ckpt.require("class.night") != std::to_string(kNightClass)) {
    throw CheckpointError("IAN checkpoint uses an unsupported class-index convention");
  }
  IanConfig cfg;
  try {
    cfg.input_size = std::stoul(ckpt.require("input_size"));
    cfg.conv1_channels = std::stoul(ckpt.require("conv1_channels"));
    cfg.conv2_channels = std::stoul(ckpt.require("conv2_channels"));
    cfg.fc1_units = std::stoul(ckpt.require("fc1_units"));
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const CheckpointError*>(&e)) throw;
    throw CheckpointError(std::string("IAN checkpoint: bad size field: ") + e.what());
  }
  IanModel m(cfg);
  load_params(ckpt, m.params());
  return m;
}

void save_ian(const std::filesystem::path& path, const IanModel& model) {
  write_checkpoint(path, model.to_checkpoint());
}

IanModel load_ian(const std::filesystem::path& path) {
  return IanModel::from_checkpoint(read_checkpoint(path));
}

IanTrainResult ian_train(const std::vector<LabeledImage>& data, const IanTrainConfig& cfg,
                         const IanConfig& model_cfg) {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  for (const LabeledImage& s : data) {
    if (s.condition == Condition::Unknown) continue;
    inputs.push_back(ian_input(s.color, model_cfg.input_size));
    labels.push_back(s.condition == Condition::Day ? kDayClass : kNightClass);
  }
  const auto n_day = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kDayClass));
  if (n_day == 0 || n_day == labels.size()) {
    throw std::invalid_argument("ian_train: dataset must contain both day and night images");
  }
  if (cfg.batch_size == 0) throw std::invalid_argument("ian_train: batch size must be positive");

  Rng rng(cfg.seed);
  IanTrainResult result{IanModel(model_cfg), {}, {}};
  IanModel& model = result.model;
  model.init(rng);
  const nn::ParamList params = model.params();
  nn::AdamState adam;
  adam.lr = cfg.lr;

  auto dataset_loss = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) sum += model.loss(inputs[i], labels[i]);
    return sum / static_cast<double>(inputs.size());
  };

  result.epoch_losses.push_back(dataset_loss());
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      nn::zero_grads(params);
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        batch_loss += model.accumulate_gradients(inputs[order[b]], labels[order[b]], rng, scale) * scale;
      }
      nn::adam_step(params, adam);
      result.steps.push_back({epoch, ++step, batch_loss});
    }
    result.epoch_losses.push_back(dataset_loss());
  }
  return result;
}

}  // namespace iaf::illumination
