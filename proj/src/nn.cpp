#include "frontdoor/nn.hpp"

#include "frontdoor/errors.hpp"

#include <cmath>
#include <numbers>

namespace frontdoor {

namespace {

Tensor kaiming_uniform(Shape shape, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Array v(shape_numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

Index Module::parameter_count() const {
  Index n = 0;
  for (auto& t : parameters()) n += t.numel();
  return n;
}

Conv2d::Conv2d(Index in_channels, Index out_channels, Index kernel, Index stride, Index padding, Rng& rng)
    : weight_(kaiming_uniform({out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel, rng)),
      bias_(Tensor::zeros({out_channels}, true)),
      stride_(stride),
      padding_(padding) {}

Tensor Conv2d::forward(const Tensor& input) const { return conv2d(input, weight_, bias_, stride_, padding_); }

std::vector<NamedTensor> Conv2d::named_parameters() const { return {{"weight", weight_}, {"bias", bias_}}; }

Dense::Dense(Index in_features, Index out_features, Rng& rng)
    : weight_(kaiming_uniform({in_features, out_features}, in_features, rng)),
      bias_(Tensor::zeros({out_features}, true)) {}

Tensor Dense::forward(const Tensor& input) const { return dense(input, weight_, bias_); }

std::vector<NamedTensor> Dense::named_parameters() const { return {{"weight", weight_}, {"bias", bias_}}; }

Tensor Flatten::forward(const Tensor& input) const {
  if (input.rank() < 1) throw DimensionError("flatten: scalar input");
  const Index n = input.dim(0);
  return reshape(input, {n, n == 0 ? 0 : input.numel() / n});
}

Sequential& Sequential::add(std::shared_ptr<Module> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& input) const {
  Tensor x = input;
  for (const auto& l : layers_) x = l->forward(x);
  return x;
}

std::vector<NamedTensor> Sequential::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto& [name, t] : layers_[i]->named_parameters()) out.emplace_back(std::to_string(i) + "." + name, t);
  }
  return out;
}

// ---- optimizer -------------------------------------------------------------

namespace {

void check_finite_grads(const std::vector<Tensor>& params, const char* who) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].has_grad() && !params[i].node()->grad.allFinite()) {
      throw DivergenceError(std::string(who) + ": non-finite gradient in parameter " + std::to_string(i));
    }
  }
}

}  // namespace

Sgd::Sgd(std::vector<Tensor> params, double lr, double momentum, double weight_decay)
    : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
  if (!(lr >= 0.0)) throw ValidationError("sgd: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("sgd: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("sgd: weight_decay must be >= 0");
  for (const auto& p : params_) velocity_.push_back(Array::Zero(p.numel()));
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Sgd::set_lr(double lr) {
  if (!(lr >= 0.0)) throw ValidationError("sgd: lr must be >= 0");
  lr_ = lr;
}

void Sgd::step() {
  check_finite_grads(params_, "sgd");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const Array g = p.grad();
    velocity_[i] = momentum_ * velocity_[i] + (g + weight_decay_ * p.data());
    p.mutable_data() -= lr_ * velocity_[i];
  }
}


Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr >= 0.0)) throw ValidationError("adam: lr must be >= 0");
  for (const auto& p : params_) {
    m_.push_back(Array::Zero(p.numel()));
    v_.push_back(Array::Zero(p.numel()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  check_finite_grads(params_, "adam");
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const Array g = p.grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.square();
    p.mutable_data() -= lr_ * (m_[i] / c1) / ((v_[i] / c2).sqrt() + eps_);
  }
}

double scheduled_lr(LrSchedule schedule, double base_lr, int epoch, int total_epochs, int step_size, double gamma) {
  switch (schedule) {
    case LrSchedule::step:
      return base_lr * std::pow(gamma, step_size > 0 ? epoch / step_size : 0);
    case LrSchedule::cosine:
      if (total_epochs <= 0) return base_lr;
      return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(total_epochs)));
  }
  return base_lr;
}

void copy_parameters(const std::vector<NamedTensor>& src, const std::vector<NamedTensor>& dst) {
  if (src.size() != dst.size()) throw DimensionError("copy_parameters: parameter count differs");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].first != dst[i].first || src[i].second.shape() != dst[i].second.shape()) {
      throw DimensionError("copy_parameters: mismatch at " + src[i].first);
    }
    Tensor t = dst[i].second;
    t.mutable_data() = src[i].second.data();
  }
}

}  // namespace frontdoor
