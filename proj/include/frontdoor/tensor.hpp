#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace frontdoor {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Array = Eigen::ArrayXd;

Index shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  Array value;
  Array grad;  // empty until backward touches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Array& grad_buffer();
};

}  // namespace detail

/// Dense N-d array of doubles with an optional reverse-mode tape.
///
/// A Tensor is a shared handle; ops never mutate their inputs. Values are
/// stored row-major (last extent fastest), so images are NCHW.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, Array values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor constant(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::span<const double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  Index numel() const { return node_->value.size(); }

  const Array& data() const { return node_->value; }
  /// Direct write access; reserved for leaf tensors (parameters, buffers).
  Array& mutable_data() { return node_->value; }
  double item() const;
  double at(std::initializer_list<Index> idx) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && node_->value.size() > 0; }
  /// Gradient buffer; zeros if backward never reached this tensor.
  Array grad() const;
  void zero_grad();

  /// Reverse pass from a scalar tensor, seeding d(self)/d(self) = 1.
  /// Leaf gradients accumulate; callers zero them between steps.
  void backward() const;

  /// Same values, detached from the tape.
  Tensor detach() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, Array, std::vector<Tensor>, std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

/// True when ops record backward closures on this thread.
bool grad_enabled();

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// kernel. Call once at program start; large training runs allocate and free
/// buffers of the same sizes every step.
void tune_allocator();

/// Disables tape recording for the current thread within its scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. The closure receives the result node and must add
/// into each parent's grad_buffer() for parents that require grad.
Tensor make_result(Shape shape, Array value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

// ---- primitive ops ---------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Mean of squared differences.
Tensor mse(const Tensor& a, const Tensor& b);

/// Rows [begin, begin + count) along the leading axis.
Tensor slice_rows(const Tensor& a, Index begin, Index count);
/// Concatenation along the leading axis.
Tensor concat_rows(const std::vector<Tensor>& parts);

/// Cross-correlation, NCHW input, OIkk kernel, optional bias of length O.
Tensor conv2d(const Tensor& input, const Tensor& kernel, Index stride, Index padding);
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Index stride, Index padding);

/// input N×F, weight F×G, bias G -> N×G.
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor avg_pool2d(const Tensor& input, Index kernel);
Tensor upsample_nearest(const Tensor& input, Index factor);

/// Per-(n, c) mean over H×W: N×C×H×W -> N×C.
Tensor channel_mean(const Tensor& input);
/// Per-(n, c) sqrt(var + eps) over H×W with the (HW - 1) denominator.
Tensor channel_std(const Tensor& input, double eps);
/// Repeats an N×C tensor over the spatial extents of an N×C×H×W shape.
Tensor channel_broadcast(const Tensor& stats, const Shape& like);

/// Row-wise softmax of an N×C tensor.
Tensor softmax(const Tensor& logits);

struct SoftmaxCrossEntropy {
  Tensor loss;   // scalar mean of -log p(label)
  Tensor probs;  // N×C, detached
};

/// Fused, numerically stable softmax + mean negative log-likelihood.
SoftmaxCrossEntropy softmax_crossentropy(const Tensor& logits, std::span<const int> labels);

/// Mean of -log probs[i, labels[i]] for an N×C probability tensor.
Tensor nll_from_probs(const Tensor& probs, std::span<const int> labels);

}  // namespace frontdoor
