#pragma once

#include "frontdoor/rng.hpp"

#include <Eigen/Core>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace frontdoor::scm {

struct Variable {
  std::string name;
  int domain_size = 2;
  bool observed = true;
  friend bool operator==(const Variable&, const Variable&) = default;
};

/// Finite DAG over named discrete variables. Parent order is edge insertion
/// order; it fixes the row layout of conditional probability tables.
class CausalGraph {
 public:
  int add_node(std::string name, int domain_size, bool observed = true);
  /// Throws ValidationError on unknown endpoints, duplicates, or a cycle.
  void add_edge(const std::string& parent, const std::string& child);
  void remove_incoming(int node);

  int size() const { return static_cast<int>(nodes_.size()); }
  int index_of(const std::string& name) const;
  bool contains(const std::string& name) const;
  const Variable& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  const std::vector<Variable>& nodes() const { return nodes_; }
  void set_observed(const std::string& name, bool observed);

  const std::vector<int>& parents(int i) const { return parents_.at(static_cast<std::size_t>(i)); }
  const std::vector<int>& children(int i) const { return children_.at(static_cast<std::size_t>(i)); }
  bool has_edge(int parent, int child) const;
  std::vector<int> topological_order() const;
  /// Strict descendants of `i`.
  std::vector<int> descendants(int i) const;

  friend bool operator==(const CausalGraph&, const CausalGraph&) = default;

 private:
  std::vector<Variable> nodes_;
  std::vector<std::vector<int>> parents_;
  std::vector<std::vector<int>> children_;
};

/// Discrete structural causal model: a graph plus P(node | parents) tables.
/// cpt(i) has one row per parent assignment (mixed radix, first parent most
/// significant) and one column per value of node i.
class DiscreteScm {
 public:
  DiscreteScm() = default;
  explicit DiscreteScm(CausalGraph graph);

  const CausalGraph& graph() const { return graph_; }
  CausalGraph& mutable_graph() { return graph_; }

  /// Replaces a CPT. Shape must match the current parents.
  void set_cpt(const std::string& node, Eigen::MatrixXd table);
  void set_cpt(int node, Eigen::MatrixXd table);
  const Eigen::MatrixXd& cpt(int node) const { return cpts_.at(static_cast<std::size_t>(node)); }
  const Eigen::MatrixXd& cpt(const std::string& node) const { return cpt(graph_.index_of(node)); }

  /// Row index of a parent assignment in node's CPT.
  Eigen::Index parent_row(int node, std::span<const int> full_assignment) const;

  /// Throws ValidationError unless every CPT is a row-stochastic matrix of
  /// the right shape (rows sum to 1 within 1e-12).
  void validate() const;

  friend bool operator==(const DiscreteScm&, const DiscreteScm&) = default;

 private:
  CausalGraph graph_;
  std::vector<Eigen::MatrixXd> cpts_;
};

/// Dense distribution over a tuple of variables (mixed radix, first variable
/// most significant).
struct Distribution {
  std::vector<std::string> variables;
  std::vector<int> sizes;
  Eigen::ArrayXd probs;

  Eigen::Index support_size() const { return probs.size(); }
  Eigen::Index flat_index(std::span<const int> assignment) const;
  std::vector<int> assignment(Eigen::Index flat) const;
  double prob(std::span<const int> assignment) const { return probs[flat_index(assignment)]; }
  /// Probability of value `v` for a single-variable distribution.
  double operator[](int v) const;
};

double total_variation(const Distribution& a, const Distribution& b);

constexpr double kMaxJointStates = 1e7;

Distribution joint(const DiscreteScm& scm);
Distribution marginal(const Distribution& dist, const std::vector<std::string>& keep);

using Assignment = std::map<std::string, int>;

Distribution observational_conditional(const DiscreteScm& scm, const std::vector<std::string>& targets,
                                       const Assignment& evidence);
Distribution observational_conditional(const DiscreteScm& scm, const std::string& target, const Assignment& evidence);

/// Graph surgery: intervened nodes lose their parents and get point masses.
DiscreteScm intervene(const DiscreteScm& scm, const Assignment& assignments);

Distribution interventional(const DiscreteScm& scm, const std::string& target, const Assignment& do_assignments);

/// sum_s p(s) P(target | treatment = value, s) over adjustment-set strata.
Distribution backdoor_estimate(const DiscreteScm& scm, const std::string& target, const std::string& treatment,
                               int treatment_value, const std::vector<std::string>& adjustment_set);

enum class FrontdoorCondition {
  interception,      // (i) every directed treatment->outcome path passes the mediator
  mediator_outcome,  // (ii) treatment blocks every back-door path mediator->outcome
  treatment_mediator // (iii) no unblocked back-door path treatment->mediator
};

const char* condition_label(FrontdoorCondition c);  // "i", "ii", "iii"

struct CriterionViolation {
  FrontdoorCondition condition;
  std::vector<std::string> paths;  // offending paths, e.g. "Z <- U -> Y"
};

struct CriterionReport {
  bool passed = true;
  std::vector<CriterionViolation> violations;
  bool violates(FrontdoorCondition c) const;
  std::string summary() const;
};

CriterionReport check_frontdoor_criterion(const CausalGraph& graph, const std::string& treatment,
                                          const std::string& outcome, const std::string& mediator);

/// sum_z p(z|x) sum_x' p(x') P(target | z, x'), from observational quantities
/// only. Throws IdentificationError if the criterion fails and
/// ConditioningError if a required stratum has zero probability.
Distribution frontdoor_estimate(const DiscreteScm& scm, const std::string& target, const std::string& treatment,
                                int treatment_value, const std::string& mediator);

// ---- path machinery --------------------------------------------------------

using Path = std::vector<int>;

std::vector<Path> directed_paths(const CausalGraph& g, int from, int to);
/// Simple paths in the skeleton whose first edge points into `from`.
std::vector<Path> backdoor_paths(const CausalGraph& g, int from, int to);
/// Collider-aware blocking. Unobserved nodes in `conditioning` are ignored.
bool path_blocked(const CausalGraph& g, const Path& path, const std::vector<int>& conditioning);
bool d_separated(const CausalGraph& g, int a, int b, const std::vector<int>& conditioning);
std::string path_string(const CausalGraph& g, const Path& path);

// ---- sampling and plug-in fitting -----------------------------------------

/// Ancestral sampling; row i, column j = value of node j in sample i.
Eigen::MatrixXi sample(const DiscreteScm& scm, Eigen::Index n, Rng& rng);

struct Triple {
  int x = 0;
  int y = 0;
  int z = 0;
};

std::vector<Triple> extract_triples(const DiscreteScm& scm, const Eigen::MatrixXi& samples, const std::string& treatment,
                                    const std::string& outcome, const std::string& mediator);

struct MilFit {
  Eigen::MatrixXd p_y_do_x;     // |X| × |Y|
  Eigen::MatrixXd p_z_given_x;  // |X| × |Z|
  Eigen::VectorXd p_x;          // |X|
  // P(y | z, x') stored as (z * |X| + x') × |Y|
  Eigen::MatrixXd p_y_given_zx;
};

struct MilOptions {
  /// Laplace pseudocount added to every count; 1 = add-one smoothing.
  double pseudocount = 1.0;
};

/// Plug-in maximizer of the interventional log-likelihood within the
/// count-based family: empirical p(z|x), p(x'), P(y|z,x') composed through
/// the front-door formula. Empty cells fall back to uniform.
MilFit mil_fit(std::span<const Triple> samples, int x_size, int y_size, int z_size, MilOptions options = {});

/// sum_i log P(y_i | do(x_i)) for a |X| × |Y| interventional table.
double interventional_log_likelihood(const Eigen::MatrixXd& p_y_do_x, std::span<const Triple> samples);

/// |X| × |Y| table of P(outcome | do(treatment = x)) from the mutilated model.
Eigen::MatrixXd interventional_table(const DiscreteScm& scm, const std::string& outcome, const std::string& treatment);

}  // namespace frontdoor::scm
