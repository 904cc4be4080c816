#pragma once

#include "frontdoor/rng.hpp"
#include "frontdoor/scm.hpp"
#include "frontdoor/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace fdtest {

using frontdoor::Array;
using frontdoor::Index;
using frontdoor::Rng;
using frontdoor::Shape;
using frontdoor::Tensor;

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  Array v(frontdoor::shape_numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

/// Values bounded away from zero (keeps relu and sqrt off their kinks).
inline Tensor random_away_from_zero(Shape shape, Rng& rng, double margin = 0.1) {
  Array v(frontdoor::shape_numel(shape));
  for (Index i = 0; i < v.size(); ++i) {
    const double m = rng.uniform(margin, 1.0);
    v[i] = rng.uniform() < 0.5 ? -m : m;
  }
  return Tensor(std::move(shape), std::move(v), true);
}

/// Worst relative error, over inputs, between the tape gradient and central
/// differences: |g - fd| / max(|g|, |fd|, floor), measured as vector norms.
inline double gradient_error(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                             double eps = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  f(inputs).backward();
  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const Array analytic = t.grad();
    Array numeric(t.numel());
    for (Index i = 0; i < t.numel(); ++i) {
      const double saved = t.data()[i];
      t.mutable_data()[i] = saved + eps;
      const double up = f(inputs).item();
      t.mutable_data()[i] = saved - eps;
      const double down = f(inputs).item();
      t.mutable_data()[i] = saved;
      numeric[i] = (up - down) / (2.0 * eps);
    }
    const double scale = std::max({analytic.matrix().norm(), numeric.matrix().norm(), 1e-12});
    worst = std::max(worst, (analytic - numeric).matrix().norm() / scale);
  }
  return worst;
}

/// Weighted sum of an op's output against fixed random weights, so every
/// output element reaches the gradient.
inline Tensor probe(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed, "probe");
  Array w(out.numel());
  for (Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
  return frontdoor::sum(frontdoor::mul(out, Tensor(out.shape(), std::move(w))));
}

/// Moves zero-initialised biases to small random values. Untrained layers fed
/// constant (e.g. clamped) inputs otherwise sit exactly on ReLU kinks, where
/// central differences disagree with any subgradient.
template <typename Named>
void jitter_biases(const Named& named_parameters, std::uint64_t seed, double scale = 0.1) {
  Rng rng(seed, "jitter");
  for (const auto& [name, t] : named_parameters) {
    if (name.find("bias") == std::string::npos) continue;
    Tensor p = t;
    for (Index i = 0; i < p.numel(); ++i) p.mutable_data()[i] = rng.uniform(-scale, scale);
  }
}

// ---- SCM fixtures ------------------------------------------------------------

namespace scm = frontdoor::scm;

inline Eigen::MatrixXd random_cpt(Index rows, Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(0.05, 1.0);
    m.row(r) /= m.row(r).sum();
  }
  return m;
}

inline void fill_random_cpts(scm::DiscreteScm& model, Rng& rng) {
  const auto& g = model.graph();
  for (int i = 0; i < g.size(); ++i) {
    Index rows = 1;
    for (int p : g.parents(i)) rows *= g.node(p).domain_size;
    model.set_cpt(i, random_cpt(rows, g.node(i).domain_size, rng));
  }
}

inline int random_size(Rng& rng) { return 2 + static_cast<int>(rng.below(3)); }

/// U (hidden) confounds X and Y; X -> Z -> Y. With `domain_confounder`, a
/// second hidden D -> X, D -> Y joins it.
inline scm::DiscreteScm random_frontdoor_scm(Rng& rng, bool domain_confounder) {
  scm::CausalGraph g;
  g.add_node("U", random_size(rng), false);
  if (domain_confounder) g.add_node("D", random_size(rng), false);
  g.add_node("X", random_size(rng));
  g.add_node("Z", random_size(rng));
  g.add_node("Y", random_size(rng));
  g.add_edge("U", "X");
  if (domain_confounder) g.add_edge("D", "X");
  g.add_edge("X", "Z");
  g.add_edge("Z", "Y");
  g.add_edge("U", "Y");
  if (domain_confounder) g.add_edge("D", "Y");
  scm::DiscreteScm model(g);
  fill_random_cpts(model, rng);
  return model;
}

/// Observed confounders C1, C2 of X and Y, plus X -> Y.
inline scm::DiscreteScm random_backdoor_scm(Rng& rng) {
  scm::CausalGraph g;
  g.add_node("C1", random_size(rng));
  g.add_node("C2", random_size(rng));
  g.add_node("X", random_size(rng));
  g.add_node("Y", random_size(rng));
  g.add_edge("C1", "X");
  g.add_edge("C2", "X");
  g.add_edge("C1", "Y");
  g.add_edge("X", "Y");
  g.add_edge("C2", "Y");
  scm::DiscreteScm model(g);
  fill_random_cpts(model, rng);
  return model;
}

inline scm::DiscreteScm reference_scm() {
  scm::CausalGraph g;
  g.add_node("U", 2, false);
  g.add_node("X", 2);
  g.add_node("Z", 2);
  g.add_node("Y", 2);
  g.add_edge("U", "X");
  g.add_edge("X", "Z");
  g.add_edge("Z", "Y");
  g.add_edge("U", "Y");
  scm::DiscreteScm model(g);
  model.set_cpt("U", (Eigen::MatrixXd(1, 2) << 0.5, 0.5).finished());
  model.set_cpt("X", (Eigen::MatrixXd(2, 2) << 0.8, 0.2, 0.1, 0.9).finished());
  model.set_cpt("Z", (Eigen::MatrixXd(2, 2) << 0.75, 0.25, 0.25, 0.75).finished());
  // Rows (z, u) = (0,0), (0,1), (1,0), (1,1); P(Y=1) = 0.3 + 0.4 z + 0.2 u.
  model.set_cpt("Y", (Eigen::MatrixXd(4, 2) << 0.7, 0.3, 0.5, 0.5, 0.3, 0.7, 0.1, 0.9).finished());
  return model;
}

/// Hidden D and U confound X and Y; Z mediates.
inline scm::CausalGraph figure_graph() {
  scm::CausalGraph g;
  g.add_node("D", 2, false);
  g.add_node("U", 2, false);
  g.add_node("X", 2);
  g.add_node("Z", 2);
  g.add_node("Y", 2);
  g.add_edge("D", "X");
  g.add_edge("U", "X");
  g.add_edge("D", "Y");
  g.add_edge("U", "Y");
  g.add_edge("X", "Z");
  g.add_edge("Z", "Y");
  return g;
}

}  // namespace fdtest
