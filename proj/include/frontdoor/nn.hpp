#pragma once

#include "frontdoor/rng.hpp"
#include "frontdoor/tensor.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace frontdoor {

using NamedTensor = std::pair<std::string, Tensor>;

/// A differentiable function with a fixed parameter list.
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor forward(const Tensor& input) const = 0;
  /// Parameters with stable, hierarchical names ("0.weight", ...).
  virtual std::vector<NamedTensor> named_parameters() const { return {}; }

  std::vector<Tensor> parameters() const;
  Index parameter_count() const;
};

/// Conv layer with Kaiming-uniform weights and zero bias.
class Conv2d final : public Module {
 public:
  Conv2d(Index in_channels, Index out_channels, Index kernel, Index stride, Index padding, Rng& rng);
  Tensor forward(const Tensor& input) const override;
  std::vector<NamedTensor> named_parameters() const override;

  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
  Index stride_;
  Index padding_;
};

class Dense final : public Module {
 public:
  Dense(Index in_features, Index out_features, Rng& rng);
  Tensor forward(const Tensor& input) const override;
  std::vector<NamedTensor> named_parameters() const override;

 private:
  Tensor weight_;  // in × out
  Tensor bias_;
};

class Relu final : public Module {
 public:
  Tensor forward(const Tensor& input) const override { return relu(input); }
};

class AvgPool2d final : public Module {
 public:
  explicit AvgPool2d(Index kernel) : kernel_(kernel) {}
  Tensor forward(const Tensor& input) const override { return avg_pool2d(input, kernel_); }

 private:
  Index kernel_;
};

class UpsampleNearest final : public Module {
 public:
  explicit UpsampleNearest(Index factor) : factor_(factor) {}
  Tensor forward(const Tensor& input) const override { return upsample_nearest(input, factor_); }

 private:
  Index factor_;
};

/// N×... -> N×(rest).
class Flatten final : public Module {
 public:
  Tensor forward(const Tensor& input) const override;
};

class Sequential final : public Module {
 public:
  Sequential() = default;
  Sequential& add(std::shared_ptr<Module> layer);
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_shared<L>(std::forward<Args>(args)...));
  }

  Tensor forward(const Tensor& input) const override;
  std::vector<NamedTensor> named_parameters() const override;
  std::size_t size() const { return layers_.size(); }
  const Module& layer(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<std::shared_ptr<Module>> layers_;
};

/// SGD with heavy-ball momentum and L2 weight decay:
///   v <- momentum * v + (grad + weight_decay * param);  param <- param - lr * v
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double lr, double momentum = 0.0, double weight_decay = 0.0);

  void zero_grad();
  /// Throws DivergenceError on a non-finite gradient; parameters untouched then.
  void step();

  double lr() const { return lr_; }
  void set_lr(double lr);

 private:
  std::vector<Tensor> params_;
  std::vector<Array> velocity_;
  double lr_;
  double momentum_;
  double weight_decay_;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void zero_grad();
  /// Throws DivergenceError on a non-finite gradient; parameters untouched then.
  void step();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<Array> m_;
  std::vector<Array> v_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long steps_ = 0;
};

enum class LrSchedule { step, cosine };

/// Learning rate at `epoch` (0-based): step decays by gamma every step_size
/// epochs; cosine anneals from base to 0 over total_epochs.
double scheduled_lr(LrSchedule schedule, double base_lr, int epoch, int total_epochs, int step_size, double gamma);

/// Copies values of `src` into `dst` (same names and shapes required).
void copy_parameters(const std::vector<NamedTensor>& src, const std::vector<NamedTensor>& dst);

}  // namespace frontdoor
