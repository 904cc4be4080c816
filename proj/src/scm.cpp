#include "frontdoor/scm.hpp"

#include "frontdoor/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

namespace frontdoor::scm {

// ---- CausalGraph -----------------------------------------------------------

int CausalGraph::add_node(std::string name, int domain_size, bool observed) {
  if (name.empty()) throw ValidationError("graph: empty node name");
  if (contains(name)) throw ValidationError("graph: duplicate node " + name);
  if (domain_size < 1) throw ValidationError("graph: node " + name + " needs domain size >= 1");
  nodes_.push_back({std::move(name), domain_size, observed});
  parents_.emplace_back();
  children_.emplace_back();
  return size() - 1;
}

int CausalGraph::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (nodes_[static_cast<std::size_t>(i)].name == name) return i;
  throw ValidationError("graph: unknown node " + name);
}

bool CausalGraph::contains(const std::string& name) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [&](const Variable& v) { return v.name == name; });
}

void CausalGraph::set_observed(const std::string& name, bool observed) {
  nodes_[static_cast<std::size_t>(index_of(name))].observed = observed;
}

bool CausalGraph::has_edge(int parent, int child) const {
  const auto& p = parents(child);
  return std::find(p.begin(), p.end(), parent) != p.end();
}

void CausalGraph::add_edge(const std::string& parent, const std::string& child) {
  const int p = index_of(parent);
  const int c = index_of(child);
  if (p == c) throw ValidationError("graph: self loop on " + parent);
  if (has_edge(p, c)) throw ValidationError("graph: duplicate edge " + parent + " -> " + child);
  const auto desc = descendants(c);
  if (std::find(desc.begin(), desc.end(), p) != desc.end()) {
    throw ValidationError("graph: edge " + parent + " -> " + child + " creates a cycle");
  }
  parents_[static_cast<std::size_t>(c)].push_back(p);
  children_[static_cast<std::size_t>(p)].push_back(c);
}

void CausalGraph::remove_incoming(int node) {
  for (int p : parents(node)) {
    auto& ch = children_[static_cast<std::size_t>(p)];
    ch.erase(std::remove(ch.begin(), ch.end(), node), ch.end());
  }
  parents_[static_cast<std::size_t>(node)].clear();
}

std::vector<int> CausalGraph::topological_order() const {
  std::vector<int> indeg(static_cast<std::size_t>(size()));
  for (int i = 0; i < size(); ++i) indeg[static_cast<std::size_t>(i)] = static_cast<int>(parents(i).size());
  std::vector<int> order;
  std::vector<int> ready;
  for (int i = size() - 1; i >= 0; --i)
    if (indeg[static_cast<std::size_t>(i)] == 0) ready.push_back(i);
  while (!ready.empty()) {
    // smallest index first, for a stable order
    auto it = std::min_element(ready.begin(), ready.end());
    const int n = *it;
    ready.erase(it);
    order.push_back(n);
    for (int c : children(n))
      if (--indeg[static_cast<std::size_t>(c)] == 0) ready.push_back(c);
  }
  if (static_cast<int>(order.size()) != size()) throw ValidationError("graph: not acyclic");
  return order;
}

std::vector<int> CausalGraph::descendants(int i) const {
  std::vector<char> seen(static_cast<std::size_t>(size()), 0);
  std::vector<int> stack{i};
  std::vector<int> out;
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    for (int c : children(n)) {
      if (!seen[static_cast<std::size_t>(c)]) {
        seen[static_cast<std::size_t>(c)] = 1;
        out.push_back(c);
        stack.push_back(c);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- DiscreteScm -----------------------------------------------------------

namespace {

Eigen::Index parent_rows(const CausalGraph& g, int node) {
  Eigen::Index rows = 1;
  for (int p : g.parents(node)) rows *= g.node(p).domain_size;
  return rows;
}

Eigen::MatrixXd uniform_cpt(const CausalGraph& g, int node) {
  const int k = g.node(node).domain_size;
  return Eigen::MatrixXd::Constant(parent_rows(g, node), k, 1.0 / k);
}

}  // namespace

DiscreteScm::DiscreteScm(CausalGraph graph) : graph_(std::move(graph)) {
  for (int i = 0; i < graph_.size(); ++i) cpts_.push_back(uniform_cpt(graph_, i));
}

void DiscreteScm::set_cpt(const std::string& node, Eigen::MatrixXd table) { set_cpt(graph_.index_of(node), std::move(table)); }

void DiscreteScm::set_cpt(int node, Eigen::MatrixXd table) {
  if (node < 0 || node >= graph_.size()) throw ValidationError("scm: node index out of range");
  cpts_.resize(static_cast<std::size_t>(graph_.size()));
  const Eigen::Index rows = parent_rows(graph_, node);
  if (table.rows() != rows || table.cols() != graph_.node(node).domain_size) {
    throw ValidationError("scm: CPT for " + graph_.node(node).name + " must be " + std::to_string(rows) + "x" +
                          std::to_string(graph_.node(node).domain_size));
  }
  cpts_[static_cast<std::size_t>(node)] = std::move(table);
}

Eigen::Index DiscreteScm::parent_row(int node, std::span<const int> full_assignment) const {
  Eigen::Index row = 0;
  for (int p : graph_.parents(node)) row = row * graph_.node(p).domain_size + full_assignment[static_cast<std::size_t>(p)];
  return row;
}

void DiscreteScm::validate() const {
  if (static_cast<int>(cpts_.size()) != graph_.size()) throw ValidationError("scm: CPT count differs from node count");
  for (int i = 0; i < graph_.size(); ++i) {
    const auto& t = cpts_[static_cast<std::size_t>(i)];
    const auto& name = graph_.node(i).name;
    if (t.rows() != parent_rows(graph_, i) || t.cols() != graph_.node(i).domain_size) {
      throw ValidationError("scm: CPT arity mismatch for " + name);
    }
    if ((t.array() < 0.0).any() || !t.allFinite()) throw ValidationError("scm: negative or non-finite CPT entry for " + name);
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      if (std::abs(t.row(r).sum() - 1.0) > 1e-12) {
        throw ValidationError("scm: CPT row " + std::to_string(r) + " of " + name + " does not sum to 1");
      }
    }
  }
}

// ---- Distribution ----------------------------------------------------------

Eigen::Index Distribution::flat_index(std::span<const int> assignment) const {
  if (assignment.size() != sizes.size()) throw DimensionError("distribution: assignment arity mismatch");
  Eigen::Index flat = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (assignment[i] < 0 || assignment[i] >= sizes[i]) throw ValidationError("distribution: value out of range");
    flat = flat * sizes[i] + assignment[i];
  }
  return flat;
}

std::vector<int> Distribution::assignment(Eigen::Index flat) const {
  std::vector<int> a(sizes.size());
  for (std::size_t i = sizes.size(); i-- > 0;) {
    a[i] = static_cast<int>(flat % sizes[i]);
    flat /= sizes[i];
  }
  return a;
}

double Distribution::operator[](int v) const {
  if (sizes.size() != 1) throw DimensionError("distribution: operator[] needs a single variable");
  if (v < 0 || v >= sizes[0]) throw ValidationError("distribution: value out of range");
  return probs[v];
}

double total_variation(const Distribution& a, const Distribution& b) {
  if (a.sizes != b.sizes) throw DimensionError("total_variation: supports differ");
  return 0.5 * (a.probs - b.probs).abs().sum();
}

// ---- enumeration -----------------------------------------------------------

Distribution joint(const DiscreteScm& scm) {
  scm.validate();
  const auto& g = scm.graph();
  double states = 1.0;
  for (const auto& v : g.nodes()) states *= v.domain_size;
  if (states > kMaxJointStates) {
    throw CapacityError("joint: " + std::to_string(static_cast<long long>(states)) + " states exceed the 1e7 guard");
  }
  Distribution d;
  for (const auto& v : g.nodes()) {
    d.variables.push_back(v.name);
    d.sizes.push_back(v.domain_size);
  }
  const auto n = static_cast<Eigen::Index>(states);
  d.probs.resize(n);
  const auto order = g.topological_order();
  std::vector<int> a(static_cast<std::size_t>(g.size()), 0);
  for (Eigen::Index flat = 0; flat < n; ++flat) {
    double p = 1.0;
    for (int node : order) {
      p *= scm.cpt(node)(scm.parent_row(node, a), a[static_cast<std::size_t>(node)]);
      if (p == 0.0) break;
    }
    d.probs[flat] = p;
    // odometer increment, last variable fastest
    for (std::size_t i = a.size(); i-- > 0;) {
      if (++a[i] < d.sizes[i]) break;
      a[i] = 0;
    }
  }
  return d;
}

Distribution marginal(const Distribution& dist, const std::vector<std::string>& keep) {
  std::vector<std::size_t> idx;
  Distribution out;
  for (const auto& name : keep) {
    auto it = std::find(dist.variables.begin(), dist.variables.end(), name);
    if (it == dist.variables.end()) throw ValidationError("marginal: unknown variable " + name);
    idx.push_back(static_cast<std::size_t>(it - dist.variables.begin()));
    out.variables.push_back(name);
    out.sizes.push_back(dist.sizes[idx.back()]);
  }
  Eigen::Index n = 1;
  for (int s : out.sizes) n *= s;
  out.probs = Eigen::ArrayXd::Zero(n);
  std::vector<int> sub(idx.size());
  for (Eigen::Index flat = 0; flat < dist.probs.size(); ++flat) {
    if (dist.probs[flat] == 0.0) continue;
    const auto a = dist.assignment(flat);
    for (std::size_t i = 0; i < idx.size(); ++i) sub[i] = a[idx[i]];
    out.probs[out.flat_index(sub)] += dist.probs[flat];
  }
  return out;
}

namespace {

/// Conditions an enumerated joint on evidence and marginalizes to targets.
Distribution condition_joint(const Distribution& j, const std::vector<std::string>& targets, const Assignment& evidence) {
  std::vector<std::pair<std::size_t, int>> ev;
  for (const auto& [name, value] : evidence) {
    auto it = std::find(j.variables.begin(), j.variables.end(), name);
    if (it == j.variables.end()) throw ValidationError("conditional: unknown evidence variable " + name);
    const auto i = static_cast<std::size_t>(it - j.variables.begin());
    if (value < 0 || value >= j.sizes[i]) throw ValidationError("conditional: evidence value out of range for " + name);
    ev.emplace_back(i, value);
  }
  Distribution restricted = j;
  for (Eigen::Index flat = 0; flat < j.probs.size(); ++flat) {
    if (j.probs[flat] == 0.0) continue;
    const auto a = j.assignment(flat);
    for (const auto& [i, v] : ev) {
      if (a[i] != v) {
        restricted.probs[flat] = 0.0;
        break;
      }
    }
  }
  Distribution out = marginal(restricted, targets);
  const double z = out.probs.sum();
  if (!(z > 0.0)) {
    std::ostringstream os;
    os << "conditional: evidence {";
    bool first = true;
    for (const auto& [name, value] : evidence) {
      os << (first ? "" : ", ") << name << "=" << value;
      first = false;
    }
    os << "} has zero probability";
    throw ConditioningError(os.str());
  }
  out.probs /= z;
  return out;
}

void require_nodes(const CausalGraph& g, const std::vector<std::string>& names) {
  for (const auto& n : names) g.index_of(n);
}

}  // namespace

Distribution observational_conditional(const DiscreteScm& scm, const std::vector<std::string>& targets,
                                       const Assignment& evidence) {
  require_nodes(scm.graph(), targets);
  return condition_joint(joint(scm), targets, evidence);
}

Distribution observational_conditional(const DiscreteScm& scm, const std::string& target, const Assignment& evidence) {
  return observational_conditional(scm, std::vector<std::string>{target}, evidence);
}

DiscreteScm intervene(const DiscreteScm& scm, const Assignment& assignments) {
  DiscreteScm out = scm;
  for (const auto& [name, value] : assignments) {
    const int i = out.graph().index_of(name);
    const int k = out.graph().node(i).domain_size;
    if (value < 0 || value >= k) throw ValidationError("intervene: value " + std::to_string(value) + " out of range for " + name);
    out.mutable_graph().remove_incoming(i);
    Eigen::MatrixXd point = Eigen::MatrixXd::Zero(1, k);
    point(0, value) = 1.0;
    out.set_cpt(i, std::move(point));
  }
  return out;
}

Distribution interventional(const DiscreteScm& scm, const std::string& target, const Assignment& do_assignments) {
  return observational_conditional(intervene(scm, do_assignments), target, {});
}

Distribution backdoor_estimate(const DiscreteScm& scm, const std::string& target, const std::string& treatment,
                               int treatment_value, const std::vector<std::string>& adjustment_set) {
  const auto& g = scm.graph();
  require_nodes(g, {target, treatment});
  for (const auto& s : adjustment_set) {
    if (!g.node(g.index_of(s)).observed) throw ValidationError("backdoor: adjustment variable " + s + " is unobserved");
    if (s == treatment || s == target) throw ValidationError("backdoor: adjustment set contains " + s);
  }
  const Distribution j = joint(scm);
  std::vector<std::string> vars = adjustment_set;
  vars.push_back(treatment);
  vars.push_back(target);
  const Distribution m = marginal(j, vars);
  const Distribution prior = marginal(j, adjustment_set);

  Distribution out;
  out.variables = {target};
  out.sizes = {g.node(g.index_of(target)).domain_size};
  out.probs = Eigen::ArrayXd::Zero(out.sizes[0]);
  const int ys = out.sizes[0];
  const int xs = g.node(g.index_of(treatment)).domain_size;
  for (Eigen::Index s = 0; s < prior.probs.size(); ++s) {
    if (prior.probs[s] == 0.0) continue;
    // m is laid out as (strata..., x, y): block of xs*ys per stratum
    const Eigen::ArrayXd cell = m.probs.segment(s * xs * ys + treatment_value * ys, ys);
    const double px = cell.sum();
    if (!(px > 0.0)) {
      throw ConditioningError("backdoor: stratum " + std::to_string(s) + " has zero probability with " + treatment +
                              "=" + std::to_string(treatment_value));
    }
    out.probs += prior.probs[s] * cell / px;
  }
  return out;
}

// ---- paths and d-separation -----------------------------------------------

std::vector<Path> directed_paths(const CausalGraph& g, int from, int to) {
  std::vector<Path> out;
  Path cur{from};
  std::function<void(int)> walk = [&](int n) {
    if (n == to) {
      out.push_back(cur);
      return;
    }
    for (int c : g.children(n)) {
      cur.push_back(c);
      walk(c);
      cur.pop_back();
    }
  };
  walk(from);
  return out;
}

namespace {

std::vector<Path> skeleton_paths(const CausalGraph& g, int from, int to, bool backdoor_only) {
  std::vector<Path> out;
  std::vector<char> on(static_cast<std::size_t>(g.size()), 0);
  Path cur{from};
  on[static_cast<std::size_t>(from)] = 1;
  std::function<void(int)> walk = [&](int n) {
    if (n == to) {
      out.push_back(cur);
      return;
    }
    std::vector<int> nbrs = g.parents(n);
    if (!(backdoor_only && n == from)) nbrs.insert(nbrs.end(), g.children(n).begin(), g.children(n).end());
    for (int m : nbrs) {
      if (on[static_cast<std::size_t>(m)]) continue;
      on[static_cast<std::size_t>(m)] = 1;
      cur.push_back(m);
      walk(m);
      cur.pop_back();
      on[static_cast<std::size_t>(m)] = 0;
    }
  };
  walk(from);
  return out;
}

}  // namespace

std::vector<Path> backdoor_paths(const CausalGraph& g, int from, int to) { return skeleton_paths(g, from, to, true); }

bool path_blocked(const CausalGraph& g, const Path& path, const std::vector<int>& conditioning) {
  std::vector<int> cond;
  for (int c : conditioning)
    if (g.node(c).observed) cond.push_back(c);
  auto in_cond = [&](int n) { return std::find(cond.begin(), cond.end(), n) != cond.end(); };
  for (std::size_t i = 1; i + 1 < path.size(); ++i) {
    const int prev = path[i - 1], v = path[i], next = path[i + 1];
    const bool collider = g.has_edge(prev, v) && g.has_edge(next, v);
    if (collider) {
      bool opened = in_cond(v);
      for (int d : g.descendants(v)) opened = opened || in_cond(d);
      if (!opened) return true;
    } else if (in_cond(v)) {
      return true;
    }
  }
  return false;
}

bool d_separated(const CausalGraph& g, int a, int b, const std::vector<int>& conditioning) {
  for (const auto& p : skeleton_paths(g, a, b, false))
    if (!path_blocked(g, p, conditioning)) return false;
  return true;
}

std::string path_string(const CausalGraph& g, const Path& path) {
  std::ostringstream os;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0) os << (g.has_edge(path[i - 1], path[i]) ? " -> " : " <- ");
    os << g.node(path[i]).name;
  }
  return os.str();
}

// ---- front-door criterion and estimator -----------------------------------

const char* condition_label(FrontdoorCondition c) {
  switch (c) {
    case FrontdoorCondition::interception: return "i";
    case FrontdoorCondition::mediator_outcome: return "ii";
    case FrontdoorCondition::treatment_mediator: return "iii";
  }
  return "?";
}

bool CriterionReport::violates(FrontdoorCondition c) const {
  return std::any_of(violations.begin(), violations.end(), [c](const auto& v) { return v.condition == c; });
}

std::string CriterionReport::summary() const {
  if (passed) return "front-door criterion satisfied";
  std::ostringstream os;
  os << "front-door criterion violated:";
  for (const auto& v : violations) {
    os << " condition (" << condition_label(v.condition) << ")";
    if (!v.paths.empty()) os << " via " << v.paths.front();
    os << ";";
  }
  return os.str();
}

CriterionReport check_frontdoor_criterion(const CausalGraph& g, const std::string& treatment, const std::string& outcome,
                                          const std::string& mediator) {
  const int x = g.index_of(treatment), y = g.index_of(outcome), z = g.index_of(mediator);
  if (x == y || x == z || y == z) throw ValidationError("criterion: treatment, outcome and mediator must be distinct");
  CriterionReport r;
  auto add = [&](FrontdoorCondition c, const Path& p) {
    auto it = std::find_if(r.violations.begin(), r.violations.end(), [c](const auto& v) { return v.condition == c; });
    if (it == r.violations.end()) {
      r.violations.push_back({c, {}});
      it = r.violations.end() - 1;
    }
    it->paths.push_back(path_string(g, p));
    r.passed = false;
  };
  for (const auto& p : directed_paths(g, x, y))
    if (std::find(p.begin(), p.end(), z) == p.end()) add(FrontdoorCondition::interception, p);
  for (const auto& p : backdoor_paths(g, z, y))
    if (!path_blocked(g, p, {x})) add(FrontdoorCondition::mediator_outcome, p);
  for (const auto& p : backdoor_paths(g, x, z))
    if (!path_blocked(g, p, {})) add(FrontdoorCondition::treatment_mediator, p);
  std::sort(r.violations.begin(), r.violations.end(),
            [](const auto& a, const auto& b) { return a.condition < b.condition; });
  return r;
}

Distribution frontdoor_estimate(const DiscreteScm& scm, const std::string& target, const std::string& treatment,
                                int treatment_value, const std::string& mediator) {
  const auto& g = scm.graph();
  const auto report = check_frontdoor_criterion(g, treatment, target, mediator);
  if (!report.passed) throw IdentificationError(report.summary());
  for (const auto& n : {treatment, target, mediator}) {
    if (!g.node(g.index_of(n)).observed) throw IdentificationError("frontdoor: " + n + " must be observed");
  }
  const int xs = g.node(g.index_of(treatment)).domain_size;
  const int zs = g.node(g.index_of(mediator)).domain_size;
  const int ys = g.node(g.index_of(target)).domain_size;
  if (treatment_value < 0 || treatment_value >= xs) throw ValidationError("frontdoor: treatment value out of range");

  // Observational joint over (X, Z, Y) is all the estimator may touch.
  const Distribution xzy = marginal(joint(scm), {treatment, mediator, target});
  auto p = [&](int xv, int zv, int yv) { return xzy.probs[(xv * zs + zv) * ys + yv]; };

  Eigen::ArrayXd px = Eigen::ArrayXd::Zero(xs);
  Eigen::ArrayXXd pxz = Eigen::ArrayXXd::Zero(xs, zs);
  for (int xv = 0; xv < xs; ++xv)
    for (int zv = 0; zv < zs; ++zv)
      for (int yv = 0; yv < ys; ++yv) pxz(xv, zv) += p(xv, zv, yv);
  px = pxz.rowwise().sum();
  if (!(px[treatment_value] > 0.0)) {
    throw ConditioningError("frontdoor: P(" + treatment + "=" + std::to_string(treatment_value) + ") is zero");
  }

  Distribution out;
  out.variables = {target};
  out.sizes = {ys};
  out.probs = Eigen::ArrayXd::Zero(ys);
  for (int zv = 0; zv < zs; ++zv) {
    const double pz_given_x = pxz(treatment_value, zv) / px[treatment_value];
    if (pz_given_x == 0.0) continue;
    Eigen::ArrayXd inner = Eigen::ArrayXd::Zero(ys);
    for (int xp = 0; xp < xs; ++xp) {
      if (px[xp] == 0.0) continue;
      if (!(pxz(xp, zv) > 0.0)) {
        throw ConditioningError("frontdoor: positivity violated, P(" + mediator + "=" + std::to_string(zv) + ", " +
                                treatment + "=" + std::to_string(xp) + ") is zero");
      }
      for (int yv = 0; yv < ys; ++yv) inner[yv] += px[xp] * p(xp, zv, yv) / pxz(xp, zv);
    }
    out.probs += pz_given_x * inner;
  }
  return out;
}

// ---- sampling and MIL ------------------------------------------------------

Eigen::MatrixXi sample(const DiscreteScm& scm, Eigen::Index n, Rng& rng) {
  scm.validate();
  const auto& g = scm.graph();
  const auto order = g.topological_order();
  Eigen::MatrixXi out(n, g.size());
  std::vector<int> a(static_cast<std::size_t>(g.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int node : order) {
      const auto row = scm.cpt(node).row(scm.parent_row(node, a));
      const double u = rng.uniform();
      double acc = 0.0;
      int v = static_cast<int>(row.size()) - 1;
      for (Eigen::Index k = 0; k < row.size(); ++k) {
        acc += row[k];
        if (u < acc) {
          v = static_cast<int>(k);
          break;
        }
      }
      // never land on a zero-probability tail value through rounding
      while (v > 0 && row[v] == 0.0) --v;
      a[static_cast<std::size_t>(node)] = v;
    }
    for (int j = 0; j < g.size(); ++j) out(i, j) = a[static_cast<std::size_t>(j)];
  }
  return out;
}

std::vector<Triple> extract_triples(const DiscreteScm& scm, const Eigen::MatrixXi& samples, const std::string& treatment,
                                    const std::string& outcome, const std::string& mediator) {
  const int xi = scm.graph().index_of(treatment), yi = scm.graph().index_of(outcome), zi = scm.graph().index_of(mediator);
  std::vector<Triple> out(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) out[static_cast<std::size_t>(i)] = {samples(i, xi), samples(i, yi), samples(i, zi)};
  return out;
}

namespace {

Eigen::VectorXd smoothed(const Eigen::VectorXd& counts, double pseudo) {
  Eigen::VectorXd v = counts.array() + pseudo;
  const double total = v.sum();
  if (!(total > 0.0)) return Eigen::VectorXd::Constant(counts.size(), 1.0 / static_cast<double>(counts.size()));
  return v / total;
}

}  // namespace

MilFit mil_fit(std::span<const Triple> samples, int x_size, int y_size, int z_size, MilOptions options) {
  if (samples.empty()) throw ValidationError("mil_fit: empty sample set");
  if (x_size < 1 || y_size < 1 || z_size < 1) throw ValidationError("mil_fit: domain sizes must be >= 1");
  if (options.pseudocount < 0.0) throw ValidationError("mil_fit: pseudocount must be >= 0");
  Eigen::VectorXd cx = Eigen::VectorXd::Zero(x_size);
  Eigen::MatrixXd cxz = Eigen::MatrixXd::Zero(x_size, z_size);
  Eigen::MatrixXd czxy = Eigen::MatrixXd::Zero(z_size * x_size, y_size);
  for (const auto& s : samples) {
    if (s.x < 0 || s.x >= x_size || s.y < 0 || s.y >= y_size || s.z < 0 || s.z >= z_size) {
      throw ValidationError("mil_fit: sample value out of range");
    }
    cx[s.x] += 1;
    cxz(s.x, s.z) += 1;
    czxy(s.z * x_size + s.x, s.y) += 1;
  }
  for (int x = 0; x < x_size; ++x) {
    if (cx[x] == 0.0) throw ValidationError("mil_fit: treatment value " + std::to_string(x) + " never observed");
  }
  const double a = options.pseudocount;
  MilFit fit;
  fit.p_x = smoothed(cx, a);
  fit.p_z_given_x.resize(x_size, z_size);
  for (int x = 0; x < x_size; ++x) fit.p_z_given_x.row(x) = smoothed(cxz.row(x).transpose(), a).transpose();
  fit.p_y_given_zx.resize(z_size * x_size, y_size);
  for (Eigen::Index r = 0; r < czxy.rows(); ++r) fit.p_y_given_zx.row(r) = smoothed(czxy.row(r).transpose(), a).transpose();

  fit.p_y_do_x = Eigen::MatrixXd::Zero(x_size, y_size);
  for (int x = 0; x < x_size; ++x)
    for (int z = 0; z < z_size; ++z) {
      Eigen::RowVectorXd inner = Eigen::RowVectorXd::Zero(y_size);
      for (int xp = 0; xp < x_size; ++xp) inner += fit.p_x[xp] * fit.p_y_given_zx.row(z * x_size + xp);
      fit.p_y_do_x.row(x) += fit.p_z_given_x(x, z) * inner;
    }
  return fit;
}

double interventional_log_likelihood(const Eigen::MatrixXd& p_y_do_x, std::span<const Triple> samples) {
  double ll = 0.0;
  for (const auto& s : samples) {
    if (s.x < 0 || s.x >= p_y_do_x.rows() || s.y < 0 || s.y >= p_y_do_x.cols()) {
      throw ValidationError("interventional_log_likelihood: sample out of table range");
    }
    ll += std::log(p_y_do_x(s.x, s.y));
  }
  return ll;
}

Eigen::MatrixXd interventional_table(const DiscreteScm& scm, const std::string& outcome, const std::string& treatment) {
  const auto& g = scm.graph();
  const int xs = g.node(g.index_of(treatment)).domain_size;
  const int ys = g.node(g.index_of(outcome)).domain_size;
  Eigen::MatrixXd t(xs, ys);
  for (int x = 0; x < xs; ++x) t.row(x) = interventional(scm, outcome, {{treatment, x}}).probs.matrix().transpose();
  return t;
}

}  // namespace frontdoor::scm
