#include "frontdoor/tensor.hpp"

#include "frontdoor/errors.hpp"

#include <algorithm>
#include <cmath>
#include <malloc.h>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace frontdoor {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

thread_local bool g_grad_enabled = true;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const Tensor& a, Index rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
  }
}

bool wants(const std::shared_ptr<detail::Node>& n) { return n->requires_grad; }

}  // namespace

Index shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Array& detail::Node::grad_buffer() {
  if (grad.size() != value.size()) grad = Array::Zero(value.size());
  return grad;
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {}

Tensor::Tensor(Shape shape, Array values, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = shape_numel(shape);
  return Tensor(std::move(shape), Array::Zero(n), requires_grad);
}

Tensor Tensor::constant(Shape shape, double value, bool requires_grad) {
  const Index n = shape_numel(shape);
  return Tensor(std::move(shape), Array::Constant(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::span<const double> values, bool requires_grad) {
  Array a = Eigen::Map<const Array>(values.data(), static_cast<Index>(values.size()));
  return Tensor(std::move(shape), std::move(a), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({}, Array::Constant(1, value)); }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item: tensor has " + std::to_string(numel()) + " values");
  return node_->value[0];
}

double Tensor::at(std::initializer_list<Index> idx) const {
  if (static_cast<Index>(idx.size()) != rank()) throw DimensionError("at: index rank mismatch");
  Index flat = 0;
  std::size_t d = 0;
  for (Index i : idx) {
    if (i < 0 || i >= node_->shape[d]) throw DimensionError("at: index out of range");
    flat = flat * node_->shape[d] + i;
    ++d;
  }
  return node_->value[flat];
}

Array Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return Array::Zero(numel());
}

void Tensor::zero_grad() {
  if (node_->grad.size() == node_->value.size()) node_->grad.setZero();
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

void Tensor::backward() const {
  if (numel() != 1) throw DimensionError("backward: root must be a scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (detail::Node* n : order) {
    if (!n->parents.empty()) n->grad_buffer().setZero();
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

bool grad_enabled() { return g_grad_enabled; }

void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, Array value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward) {
  Tensor out(std::move(shape), std::move(value), false);
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node_;
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (auto& t : inputs) node.parents.push_back(t.node_);
  node.backward = std::move(backward);
  return out;
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_result(a.shape(), a.data() + b.data(), {a, b}, [](detail::Node& n) {
    for (auto& p : n.parents)
      if (wants(p)) p->grad_buffer() += n.grad;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.shape(), a.data() - b.data(), {a, b}, [](detail::Node& n) {
    if (wants(n.parents[0])) n.parents[0]->grad_buffer() += n.grad;
    if (wants(n.parents[1])) n.parents[1]->grad_buffer() -= n.grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make_result(a.shape(), a.data() * b.data(), {a, b}, [](detail::Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (wants(pa)) pa->grad_buffer() += n.grad * pb->value;
    if (wants(pb)) pb->grad_buffer() += n.grad * pa->value;
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  return make_result(a.shape(), a.data() / b.data(), {a, b}, [](detail::Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (wants(pa)) pa->grad_buffer() += n.grad / pb->value;
    if (wants(pb)) pb->grad_buffer() -= n.grad * pa->value / pb->value.square();
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.shape(), a.data() * s, {a}, [s](detail::Node& n) {
    n.parents[0]->grad_buffer() += n.grad * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return make_result(a.shape(), a.data() + s, {a}, [](detail::Node& n) {
    n.parents[0]->grad_buffer() += n.grad;
  });
}

Tensor square(const Tensor& a) {
  return make_result(a.shape(), a.data().square(), {a}, [](detail::Node& n) {
    auto& p = n.parents[0];
    p->grad_buffer() += 2.0 * n.grad * p->value;
  });
}

Tensor sqrt(const Tensor& a) {
  Array v = a.data().sqrt();
  return make_result(a.shape(), v, {a}, [](detail::Node& n) {
    n.parents[0]->grad_buffer() += n.grad * 0.5 / n.value;
  });
}

Tensor log(const Tensor& a) {
  return make_result(a.shape(), a.data().log(), {a}, [](detail::Node& n) {
    auto& p = n.parents[0];
    p->grad_buffer() += n.grad / p->value;
  });
}

Tensor relu(const Tensor& a) {
  return make_result(a.shape(), a.data().max(0.0), {a}, [](detail::Node& n) {
    auto& p = n.parents[0];
    p->grad_buffer() += (p->value > 0.0).select(n.grad, 0.0);
  });
}

Tensor sum(const Tensor& a) {
  return make_result({}, Array::Constant(1, a.data().sum()), {a}, [](detail::Node& n) {
    n.parents[0]->grad_buffer() += n.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  return make_result({}, Array::Constant(1, a.data().sum() * inv), {a}, [inv](detail::Node& n) {
    n.parents[0]->grad_buffer() += n.grad[0] * inv;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  return make_result(std::move(shape), a.data(), {a}, [](detail::Node& n) {
    n.parents[0]->grad_buffer() += n.grad;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

Tensor slice_rows(const Tensor& a, Index begin, Index count) {
  if (a.rank() < 1 || begin < 0 || count < 0 || begin + count > a.dim(0)) {
    throw DimensionError("slice_rows: range out of bounds for " + shape_string(a.shape()));
  }
  const Index stride = a.dim(0) == 0 ? 0 : a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = count;
  Array v = a.data().segment(begin * stride, count * stride);
  return make_result(std::move(shape), std::move(v), {a}, [begin, count, stride](detail::Node& n) {
    n.parents[0]->grad_buffer().segment(begin * stride, count * stride) += n.grad;
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw DimensionError("concat_rows: scalar input");
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<Index>(shape.size()) ||
        !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat_rows: trailing extents differ");
    }
    rows += p.dim(0);
  }
  shape[0] = rows;
  Array v(shape_numel(shape));
  Index off = 0;
  std::vector<std::pair<Index, Index>> spans;
  for (const auto& p : parts) {
    v.segment(off, p.numel()) = p.data();
    spans.emplace_back(off, p.numel());
    off += p.numel();
  }
  return make_result(std::move(shape), std::move(v), parts, [spans](detail::Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      if (wants(n.parents[i])) n.parents[i]->grad_buffer() += n.grad.segment(spans[i].first, spans[i].second);
    }
  });
}

// ---- convolution -----------------------------------------------------------

namespace {

struct ConvGeometry {
  Index n, c, h, w, o, kh, kw, stride, pad, oh, ow;
  Index rows() const { return c * kh * kw; }
  Index positions() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, Index stride, Index padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (stride < 1 || padding < 0) throw ValidationError("conv2d: stride must be >= 1 and padding >= 0");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0), kernel.dim(2),
                 kernel.dim(3), stride, padding, 0, 0};
  if (kernel.dim(1) != g.c) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " channels, input has " +
                         std::to_string(g.c));
  }
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;
  return g;
}

// Valid output-column range [lo, hi) for kernel offset j along one axis.
struct Span {
  Index lo, hi;
};

Span valid_span(Index j, Index pad, Index stride, Index in, Index out) {
  Index lo = pad > j ? (pad - j + stride - 1) / stride : 0;
  Index hi = (in - 1 + pad - j) >= 0 ? (in - 1 + pad - j) / stride + 1 : 0;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
  return {lo, hi};
}

// Column matrix, row-major: rows = (c, i, j), columns = (n, oy, ox), for
// samples [n0, n0 + nb).
void im2col(const double* x, const ConvGeometry& g, Index n0, Index nb, RowMatrix& cols) {
  const Index p = g.positions();
  cols.resize(g.rows(), nb * p);
  for (Index c = 0; c < g.c; ++c) {
    for (Index i = 0; i < g.kh; ++i) {
      const Span ys = valid_span(i, g.pad, g.stride, g.h, g.oh);
      for (Index j = 0; j < g.kw; ++j) {
        const Span xs = valid_span(j, g.pad, g.stride, g.w, g.ow);
        double* row = cols.row((c * g.kh + i) * g.kw + j).data();
        for (Index n = 0; n < nb; ++n) {
          const double* plane = x + ((n0 + n) * g.c + c) * g.h * g.w;
          double* dst = row + n * p;
          for (Index oy = 0; oy < g.oh; ++oy) {
            double* d = dst + oy * g.ow;
            if (oy < ys.lo || oy >= ys.hi) {
              std::fill(d, d + g.ow, 0.0);
              continue;
            }
            const double* src = plane + (oy * g.stride - g.pad + i) * g.w - g.pad + j;
            std::fill(d, d + xs.lo, 0.0);
            if (g.stride == 1) {
              std::copy(src + xs.lo, src + xs.hi, d + xs.lo);
            } else {
              for (Index ox = xs.lo; ox < xs.hi; ++ox) d[ox] = src[ox * g.stride];
            }
            std::fill(d + xs.hi, d + g.ow, 0.0);
          }
        }
      }
    }
  }
}

void col2im_add(const RowMatrix& cols, const ConvGeometry& g, Index n0, Index nb, double* dx) {
  const Index p = g.positions();
  for (Index c = 0; c < g.c; ++c) {
    for (Index i = 0; i < g.kh; ++i) {
      const Span ys = valid_span(i, g.pad, g.stride, g.h, g.oh);
      for (Index j = 0; j < g.kw; ++j) {
        const Span xs = valid_span(j, g.pad, g.stride, g.w, g.ow);
        const double* row = cols.row((c * g.kh + i) * g.kw + j).data();
        for (Index n = 0; n < nb; ++n) {
          double* plane = dx + ((n0 + n) * g.c + c) * g.h * g.w;
          const double* srow = row + n * p;
          for (Index oy = ys.lo; oy < ys.hi; ++oy) {
            const double* s = srow + oy * g.ow;
            double* d = plane + (oy * g.stride - g.pad + i) * g.w - g.pad + j;
            if (g.stride == 1) {
              for (Index ox = xs.lo; ox < xs.hi; ++ox) d[ox] += s[ox];
            } else {
              for (Index ox = xs.lo; ox < xs.hi; ++ox) d[ox * g.stride] += s[ox];
            }
          }
        }
      }
    }
  }
}

// Samples per im2col chunk, sized to keep the column matrix cache resident.
Index conv_chunk(const ConvGeometry& g) {
  constexpr Index kTargetElements = Index{1} << 16;
  return std::clamp<Index>(kTargetElements / std::max<Index>(1, g.rows() * g.positions()), 1, g.n);
}

// Stride-1 convolution on zero-padded planes. Output rows are computed in
// "wide" coordinates q = y * wp + x with x < wp, so each kernel tap is a single
// contiguous axpy; columns x >= ow are scratch.
struct WideLayout {
  Index hp, wp, plane, span;
};

WideLayout wide_layout(const ConvGeometry& g) {
  const Index hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
  return {hp, wp, hp * wp + g.kw, g.oh * wp};
}

void pad_planes(const double* x, const ConvGeometry& g, const WideLayout& l, Index n, Eigen::ArrayXd& xp) {
  xp.setZero(g.c * l.plane);
  for (Index c = 0; c < g.c; ++c) {
    const double* src = x + (n * g.c + c) * g.h * g.w;
    double* dst = xp.data() + c * l.plane + g.pad * l.wp + g.pad;
    for (Index y = 0; y < g.h; ++y) std::copy_n(src + y * g.w, g.w, dst + y * l.wp);
  }
}

Tensor conv2d_direct(const Tensor& input, const Tensor& kernel, const Tensor* bias, const ConvGeometry& g) {
  const WideLayout l = wide_layout(g);
  const double* k = kernel.data().data();
  Array out(g.n * g.o * g.positions());
  Eigen::ArrayXd xp, acc(l.span);
  for (Index n = 0; n < g.n; ++n) {
    pad_planes(input.data().data(), g, l, n, xp);
    for (Index o = 0; o < g.o; ++o) {
      acc.setConstant(bias ? bias->data()[o] : 0.0);
      for (Index c = 0; c < g.c; ++c) {
        const double* plane = xp.data() + c * l.plane;
        const double* w = k + (o * g.c + c) * g.kh * g.kw;
        if (g.kh == 3 && g.kw == 3) {
          auto tap = [&](Index i, Index j) { return Eigen::Map<const Eigen::ArrayXd>(plane + i * l.wp + j, l.span); };
          acc += w[0] * tap(0, 0) + w[1] * tap(0, 1) + w[2] * tap(0, 2) + w[3] * tap(1, 0) + w[4] * tap(1, 1) +
                 w[5] * tap(1, 2) + w[6] * tap(2, 0) + w[7] * tap(2, 1) + w[8] * tap(2, 2);
          continue;
        }
        for (Index i = 0; i < g.kh; ++i)
          for (Index j = 0; j < g.kw; ++j)
            acc += w[i * g.kw + j] * Eigen::Map<const Eigen::ArrayXd>(plane + i * l.wp + j, l.span);
      }
      double* dst = out.data() + (n * g.o + o) * g.positions();
      for (Index y = 0; y < g.oh; ++y) std::copy_n(acc.data() + y * l.wp, g.ow, dst + y * g.ow);
    }
  }
  std::vector<Tensor> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return make_result({g.n, g.o, g.oh, g.ow}, std::move(out), std::move(inputs), [g, l](detail::Node& node) {
    auto& in = node.parents[0];
    auto& ker = node.parents[1];
    const bool want_in = wants(in), want_k = wants(ker);
    const bool want_bias = node.parents.size() > 2 && wants(node.parents[2]);
    const double* k = ker->value.data();
    // Each gradient plane carries a leading zero margin so the input gradient
    // is a gather over non-negative offsets.
    const Index margin = (g.kh - 1) * l.wp + g.kw - 1;
    const Index stride_o = margin + l.plane;
    Eigen::ArrayXd gw(g.o * stride_o), xp, dxp(l.plane);
    for (Index n = 0; n < g.n; ++n) {
      gw.setZero();
      for (Index o = 0; o < g.o; ++o) {
        const double* src = node.grad.data() + (n * g.o + o) * g.positions();
        double* dst = gw.data() + o * stride_o + margin;
        for (Index y = 0; y < g.oh; ++y) std::copy_n(src + y * g.ow, g.ow, dst + y * l.wp);
      }
      if (want_bias) {
        Array& db = node.parents[2]->grad_buffer();
        for (Index o = 0; o < g.o; ++o) db[o] += gw.segment(o * stride_o + margin, l.span).sum();
      }
      if (want_k) {
        pad_planes(in->value.data(), g, l, n, xp);
        double* dk = ker->grad_buffer().data();
        for (Index o = 0; o < g.o; ++o) {
          const auto go = gw.segment(o * stride_o + margin, l.span);
          for (Index c = 0; c < g.c; ++c) {
            const double* plane = xp.data() + c * l.plane;
            for (Index i = 0; i < g.kh; ++i)
              for (Index j = 0; j < g.kw; ++j)
                dk[((o * g.c + c) * g.kh + i) * g.kw + j] +=
                    (go * Eigen::Map<const Eigen::ArrayXd>(plane + i * l.wp + j, l.span)).sum();
          }
        }
      }
      if (!want_in) continue;
      double* dx = in->grad_buffer().data();
      for (Index c = 0; c < g.c; ++c) {
        dxp.setZero();
        for (Index o = 0; o < g.o; ++o) {
          const double* go = gw.data() + o * stride_o + margin;
          const double* w = k + (o * g.c + c) * g.kh * g.kw;
          if (g.kh == 3 && g.kw == 3) {
            auto tap = [&](Index i, Index j) {
              return Eigen::Map<const Eigen::ArrayXd>(go - i * l.wp - j, l.plane);
            };
            dxp += w[0] * tap(0, 0) + w[1] * tap(0, 1) + w[2] * tap(0, 2) + w[3] * tap(1, 0) + w[4] * tap(1, 1) +
                   w[5] * tap(1, 2) + w[6] * tap(2, 0) + w[7] * tap(2, 1) + w[8] * tap(2, 2);
            continue;
          }
          for (Index i = 0; i < g.kh; ++i)
            for (Index j = 0; j < g.kw; ++j)
              dxp += w[i * g.kw + j] * Eigen::Map<const Eigen::ArrayXd>(go - i * l.wp - j, l.plane);
        }
        const double* src = dxp.data() + g.pad * l.wp + g.pad;
        double* dst = dx + (n * g.c + c) * g.h * g.w;
        for (Index y = 0; y < g.h; ++y)
          for (Index x = 0; x < g.w; ++x) dst[y * g.w + x] += src[y * l.wp + x];
      }
    }
  });
}

Tensor conv2d_impl(const Tensor& input, const Tensor& kernel, const Tensor* bias, Index stride, Index padding) {
  const ConvGeometry g = conv_geometry(input, kernel, stride, padding);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.o)) {
    throw DimensionError("conv2d: bias must have one entry per output channel");
  }
  if (g.stride == 1) return conv2d_direct(input, kernel, bias, g);
  ConstRowMap k(kernel.data().data(), g.o, g.rows());
  const Index p = g.positions();
  const Index chunk = conv_chunk(g);
  Array out(g.n * g.o * p);
  const bool keep_cols = grad_enabled() && kernel.requires_grad();
  auto saved = std::make_shared<std::vector<RowMatrix>>();
  RowMatrix cols, prod;
  for (Index n0 = 0; n0 < g.n; n0 += chunk) {
    const Index nb = std::min(chunk, g.n - n0);
    im2col(input.data().data(), g, n0, nb, cols);
    prod.resize(g.o, nb * p);
    prod.noalias() = k * cols;
    for (Index n = 0; n < nb; ++n) {
      for (Index o = 0; o < g.o; ++o) {
        const double* src = prod.data() + o * prod.cols() + n * p;
        double* dst = out.data() + ((n0 + n) * g.o + o) * p;
        const double b = bias ? bias->data()[o] : 0.0;
        for (Index q = 0; q < p; ++q) dst[q] = src[q] + b;
      }
    }
    if (keep_cols) saved->push_back(std::move(cols));
  }
  std::vector<Tensor> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return make_result({g.n, g.o, g.oh, g.ow}, std::move(out), std::move(inputs), [g, chunk, saved](detail::Node& node) {
    const Index pos = g.positions();
    auto& in = node.parents[0];
    auto& ker = node.parents[1];
    const bool want_bias = node.parents.size() > 2 && wants(node.parents[2]);
    ConstRowMap k(ker->value.data(), g.o, g.rows());
    RowMatrix grad_out, cols, dcols;
    for (Index n0 = 0; n0 < g.n; n0 += chunk) {
      const Index nb = std::min(chunk, g.n - n0);
      grad_out.resize(g.o, nb * pos);
      for (Index n = 0; n < nb; ++n)
        for (Index o = 0; o < g.o; ++o)
          std::copy_n(node.grad.data() + ((n0 + n) * g.o + o) * pos, pos,
                      grad_out.data() + o * grad_out.cols() + n * pos);
      if (wants(ker)) {
        const RowMatrix* c = &cols;
        if (saved->empty()) {
          im2col(in->value.data(), g, n0, nb, cols);
        } else {
          c = &(*saved)[static_cast<std::size_t>(n0 / chunk)];
        }
        RowMap dk(ker->grad_buffer().data(), g.o, g.rows());
        dk.noalias() += grad_out * c->transpose();
      }
      if (want_bias) node.parents[2]->grad_buffer() += grad_out.rowwise().sum().array();
      if (wants(in)) {
        dcols.resize(g.rows(), nb * pos);
        dcols.noalias() = k.transpose() * grad_out;
        col2im_add(dcols, g, n0, nb, in->grad_buffer().data());
      }
    }
  });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, Index stride, Index padding) {
  return conv2d_impl(input, kernel, nullptr, stride, padding);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Index stride, Index padding) {
  return conv2d_impl(input, kernel, &bias, stride, padding);
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "dense input");
  require_rank(weight, 2, "dense weight");
  require_rank(bias, 1, "dense bias");
  const Index n = input.dim(0), f = input.dim(1), g = weight.dim(1);
  if (weight.dim(0) != f) {
    throw DimensionError("dense: input has " + std::to_string(f) + " features, weight expects " +
                         std::to_string(weight.dim(0)));
  }
  if (bias.dim(0) != g) throw DimensionError("dense: bias length must equal output features");
  ConstRowMap x(input.data().data(), n, f);
  ConstRowMap w(weight.data().data(), f, g);
  Array out(n * g);
  RowMap y(out.data(), n, g);
  y.noalias() = x * w;
  y.rowwise() += bias.data().matrix().transpose();
  return make_result({n, g}, std::move(out), {input, weight, bias}, [n, f, g](detail::Node& node) {
    ConstRowMap dy(node.grad.data(), n, g);
    auto& in = node.parents[0];
    auto& wt = node.parents[1];
    auto& b = node.parents[2];
    if (wants(in)) {
      RowMap dx(in->grad_buffer().data(), n, f);
      dx.noalias() += dy * ConstRowMap(wt->value.data(), f, g).transpose();
    }
    if (wants(wt)) {
      RowMap dw(wt->grad_buffer().data(), f, g);
      dw.noalias() += ConstRowMap(in->value.data(), n, f).transpose() * dy;
    }
    if (wants(b)) b->grad_buffer() += dy.colwise().sum().transpose().array();
  });
}

// ---- pooling / resampling --------------------------------------------------

Tensor avg_pool2d(const Tensor& input, Index kernel) {
  require_rank(input, 4, "avg_pool2d");
  if (kernel < 1) throw ValidationError("avg_pool2d: kernel must be >= 1");
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index oh = h / kernel, ow = w / kernel;
  if (oh < 1 || ow < 1) throw DimensionError("avg_pool2d: kernel larger than input");
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
  Array out = Array::Zero(n * c * oh * ow);
  const Array& x = input.data();
  for (Index pl = 0; pl < n * c; ++pl)
    for (Index y = 0; y < oh * kernel; ++y)
      for (Index xx = 0; xx < ow * kernel; ++xx)
        out[pl * oh * ow + (y / kernel) * ow + xx / kernel] += x[pl * h * w + y * w + xx] * inv;
  return make_result({n, c, oh, ow}, std::move(out), {input}, [=](detail::Node& node) {
    Array& dx = node.parents[0]->grad_buffer();
    for (Index pl = 0; pl < n * c; ++pl)
      for (Index y = 0; y < oh * kernel; ++y)
        for (Index xx = 0; xx < ow * kernel; ++xx)
          dx[pl * h * w + y * w + xx] += node.grad[pl * oh * ow + (y / kernel) * ow + xx / kernel] * inv;
  });
}

Tensor upsample_nearest(const Tensor& input, Index factor) {
  require_rank(input, 4, "upsample_nearest");
  if (factor < 1) throw ValidationError("upsample_nearest: factor must be >= 1");
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index oh = h * factor, ow = w * factor;
  Array out(n * c * oh * ow);
  const double* x = input.data().data();
  for (Index pl = 0; pl < n * c; ++pl) {
    for (Index y = 0; y < h; ++y) {
      const double* src = x + (pl * h + y) * w;
      double* row = out.data() + (pl * oh + y * factor) * ow;
      for (Index xx = 0; xx < w; ++xx) std::fill_n(row + xx * factor, factor, src[xx]);
      for (Index r = 1; r < factor; ++r) std::copy_n(row, ow, row + r * ow);
    }
  }
  return make_result({n, c, oh, ow}, std::move(out), {input}, [=](detail::Node& node) {
    double* dx = node.parents[0]->grad_buffer().data();
    for (Index pl = 0; pl < n * c; ++pl) {
      for (Index y = 0; y < h; ++y) {
        double* dst = dx + (pl * h + y) * w;
        for (Index r = 0; r < factor; ++r) {
          const double* g = node.grad.data() + (pl * oh + y * factor + r) * ow;
          for (Index xx = 0; xx < w; ++xx)
            for (Index q = 0; q < factor; ++q) dst[xx] += g[xx * factor + q];
        }
      }
    }
  });
}

// ---- channel statistics ----------------------------------------------------

Tensor channel_mean(const Tensor& input) {
  require_rank(input, 4, "channel_mean");
  const Index planes = input.dim(0) * input.dim(1);
  const Index hw = input.dim(2) * input.dim(3);
  Eigen::Map<const Eigen::MatrixXd> x(input.data().data(), hw, planes);
  Array out = x.colwise().mean().transpose().array();
  return make_result({input.dim(0), input.dim(1)}, std::move(out), {input}, [planes, hw](detail::Node& node) {
    Eigen::Map<Eigen::MatrixXd> dx(node.parents[0]->grad_buffer().data(), hw, planes);
    dx.rowwise() += (node.grad / static_cast<double>(hw)).matrix().transpose();
  });
}

Tensor channel_std(const Tensor& input, double eps) {
  require_rank(input, 4, "channel_std");
  const Index planes = input.dim(0) * input.dim(1);
  const Index hw = input.dim(2) * input.dim(3);
  if (hw < 2) throw ValidationError("channel_std: needs H*W >= 2");
  Eigen::Map<const Eigen::MatrixXd> x(input.data().data(), hw, planes);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mu;
  const double denom = static_cast<double>(hw - 1);
  Array out = ((centered.colwise().squaredNorm().array() / denom) + eps).sqrt().transpose();
  return make_result({input.dim(0), input.dim(1)}, out, {input}, [planes, hw, denom](detail::Node& node) {
    const auto& xin = node.parents[0]->value;
    Eigen::Map<const Eigen::MatrixXd> xv(xin.data(), hw, planes);
    const Eigen::RowVectorXd m = xv.colwise().mean();
    const Eigen::RowVectorXd coef = (node.grad / (denom * node.value)).matrix().transpose();
    Eigen::Map<Eigen::MatrixXd> dx(node.parents[0]->grad_buffer().data(), hw, planes);
    dx += ((xv.rowwise() - m).array().rowwise() * coef.array()).matrix();
  });
}

Tensor channel_broadcast(const Tensor& stats, const Shape& like) {
  require_rank(stats, 2, "channel_broadcast");
  if (like.size() != 4 || like[0] != stats.dim(0) || like[1] != stats.dim(1)) {
    throw DimensionError("channel_broadcast: stats " + shape_string(stats.shape()) + " incompatible with " +
                         shape_string(like));
  }
  const Index planes = stats.numel();
  const Index hw = like[2] * like[3];
  Array out(planes * hw);
  Eigen::Map<Eigen::MatrixXd>(out.data(), hw, planes).rowwise() = stats.data().matrix().transpose();
  return make_result(like, std::move(out), {stats}, [planes, hw](detail::Node& node) {
    Eigen::Map<const Eigen::MatrixXd> g(node.grad.data(), hw, planes);
    node.parents[0]->grad_buffer() += g.colwise().sum().transpose().array();
  });
}

// ---- softmax / losses ------------------------------------------------------

namespace {

RowMatrix row_softmax(const Array& logits, Index n, Index c) {
  ConstRowMap z(logits.data(), n, c);
  RowMatrix p = z.colwise() - z.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

void check_labels(std::span<const int> labels, Index n, Index c) {
  if (static_cast<Index>(labels.size()) != n) throw DimensionError("labels: count must equal batch size");
  for (int y : labels) {
    if (y < 0 || y >= c) {
      throw ValidationError("labels: class index " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
  }
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  const Index n = logits.dim(0), c = logits.dim(1);
  RowMatrix p = row_softmax(logits.data(), n, c);
  Array out = Eigen::Map<const Array>(p.data(), n * c);
  return make_result({n, c}, std::move(out), {logits}, [n, c](detail::Node& node) {
    ConstRowMap pm(node.value.data(), n, c);
    ConstRowMap g(node.grad.data(), n, c);
    const Eigen::VectorXd dot = (pm.array() * g.array()).rowwise().sum();
    RowMap dz(node.parents[0]->grad_buffer().data(), n, c);
    dz.array() += pm.array() * (g.array().colwise() - dot.array());
  });
}

SoftmaxCrossEntropy softmax_crossentropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_crossentropy");
  const Index n = logits.dim(0), c = logits.dim(1);
  check_labels(labels, n, c);
  ConstRowMap z(logits.data().data(), n, c);
  const Eigen::VectorXd zmax = z.rowwise().maxCoeff();
  const Eigen::VectorXd lse = ((z.colwise() - zmax).array().exp().rowwise().sum().log()).matrix() + zmax;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += lse[i] - z(i, labels[static_cast<std::size_t>(i)]);
  RowMatrix p = row_softmax(logits.data(), n, c);
  Tensor probs({n, c}, Eigen::Map<const Array>(p.data(), n * c));
  std::vector<int> ys(labels.begin(), labels.end());
  Tensor loss = make_result({}, Array::Constant(1, total / static_cast<double>(n)), {logits},
                            [n, c, p = std::move(p), ys = std::move(ys)](detail::Node& node) {
                              RowMap dz(node.parents[0]->grad_buffer().data(), n, c);
                              const double s = node.grad[0] / static_cast<double>(n);
                              dz += p * s;
                              for (Index i = 0; i < n; ++i) dz(i, ys[static_cast<std::size_t>(i)]) -= s;
                            });
  return {loss, probs};
}

Tensor nll_from_probs(const Tensor& probs, std::span<const int> labels) {
  require_rank(probs, 2, "nll_from_probs");
  const Index n = probs.dim(0), c = probs.dim(1);
  check_labels(labels, n, c);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total -= std::log(probs.data()[i * c + labels[static_cast<std::size_t>(i)]]);
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result({}, Array::Constant(1, total / static_cast<double>(n)), {probs},
                     [n, c, ys = std::move(ys)](detail::Node& node) {
                       Array& dp = node.parents[0]->grad_buffer();
                       const double s = node.grad[0] / static_cast<double>(n);
                       for (Index i = 0; i < n; ++i) {
                         const Index k = i * c + ys[static_cast<std::size_t>(i)];
                         dp[k] -= s / node.parents[0]->value[k];
                       }
                     });
}

}  // namespace frontdoor
