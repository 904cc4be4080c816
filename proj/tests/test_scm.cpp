#include "frontdoor/errors.hpp"
#include "frontdoor/scm.hpp"
#include "frontdoor/scm_io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

using namespace frontdoor;
using namespace frontdoor::scm;
using fdtest::reference_scm;

namespace {

constexpr double kExact = 1e-10;

Eigen::MatrixXd row(std::initializer_list<double> v) {
  Eigen::MatrixXd m(1, static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

// Truncated factorization: prod of non-intervened CPTs, summed over the
// assignments consistent with do(X = x), marginalized to `target`.
Distribution truncated_product(const DiscreteScm& m, const std::string& target, const std::string& x, int xv) {
  const auto& g = m.graph();
  const int xi = g.index_of(x), ti = g.index_of(target);
  std::vector<int> sizes;
  for (const auto& n : g.nodes()) sizes.push_back(n.domain_size);
  Distribution out;
  out.variables = {target};
  out.sizes = {sizes[static_cast<std::size_t>(ti)]};
  out.probs = Eigen::ArrayXd::Zero(out.sizes[0]);
  const long total = std::accumulate(sizes.begin(), sizes.end(), 1L, std::multiplies<>());
  std::vector<int> a(sizes.size());
  for (long flat = 0; flat < total; ++flat) {
    long rest = flat;
    for (std::size_t k = sizes.size(); k-- > 0;) {
      a[k] = static_cast<int>(rest % sizes[k]);
      rest /= sizes[k];
    }
    if (a[static_cast<std::size_t>(xi)] != xv) continue;
    double p = 1.0;
    for (int i = 0; i < g.size(); ++i) {
      if (i != xi) p *= m.cpt(i)(m.parent_row(i, a), a[static_cast<std::size_t>(i)]);
    }
    out.probs[a[static_cast<std::size_t>(ti)]] += p;
  }
  return out;
}

std::vector<Triple> reference_triples(Index n, std::uint64_t seed) {
  const auto m = reference_scm();
  Rng rng(seed, "scm-samples");
  return extract_triples(m, sample(m, n, rng), "X", "Y", "Z");
}

}  // namespace

// ---- joint -------------------------------------------------------------------

TEST(Joint, SingleBernoulli) {
  CausalGraph g;
  g.add_node("A", 2);
  DiscreteScm m(g);
  m.set_cpt("A", row({0.7, 0.3}));
  const auto j = joint(m);
  EXPECT_DOUBLE_EQ(j.probs[0], 0.7);
  EXPECT_DOUBLE_EQ(j.probs[1], 0.3);
}

TEST(Joint, IndependentCoins) {
  CausalGraph g;
  g.add_node("A", 2);
  g.add_node("B", 2);
  DiscreteScm m(g);
  m.set_cpt("A", row({0.5, 0.5}));
  m.set_cpt("B", row({0.5, 0.5}));
  const auto j = joint(m);
  ASSERT_EQ(j.support_size(), 4);
  EXPECT_TRUE((j.probs == 0.25).all());
}

TEST(Joint, ChainMarginalsMatchMatrixProducts) {
  CausalGraph g;
  g.add_node("U", 2);
  g.add_node("X", 3);
  g.add_node("Z", 2);
  g.add_edge("U", "X");
  g.add_edge("X", "Z");
  DiscreteScm m(g);
  Eigen::MatrixXd pu = row({0.4, 0.6});
  Eigen::MatrixXd px(2, 3);
  px << 0.2, 0.5, 0.3, 0.6, 0.1, 0.3;
  Eigen::MatrixXd pz(3, 2);
  pz << 0.9, 0.1, 0.5, 0.5, 0.2, 0.8;
  m.set_cpt("U", pu);
  m.set_cpt("X", px);
  m.set_cpt("Z", pz);
  const auto j = joint(m);
  EXPECT_NEAR(j.probs.sum(), 1.0, 1e-15);
  const Eigen::RowVectorXd mx = pu * px, mz = pu * px * pz;
  const auto jx = marginal(j, {"X"}), jz = marginal(j, {"Z"});
  for (int v = 0; v < 3; ++v) EXPECT_NEAR(jx[v], mx[v], 1e-15);
  for (int v = 0; v < 2; ++v) EXPECT_NEAR(jz[v], mz[v], 1e-15);
}

TEST(Joint, CapacityGuard) {
  CausalGraph g;
  for (int i = 0; i < 6; ++i) g.add_node("N" + std::to_string(i), 20);
  DiscreteScm m(g);
  for (int i = 0; i < 6; ++i) m.set_cpt(i, Eigen::MatrixXd::Constant(1, 20, 0.05));
  EXPECT_THROW(joint(m), CapacityError);
}

TEST(DiscreteScm, ValidatesCpts) {
  CausalGraph g;
  g.add_node("A", 2);
  DiscreteScm m(g);
  EXPECT_THROW(m.set_cpt("A", row({0.5, 0.5, 0.0})), ValidationError);
  m.set_cpt("A", row({0.6, 0.5}));
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(CausalGraph, RejectsCyclesAndUnknownNodes) {
  CausalGraph g;
  g.add_node("A", 2);
  g.add_node("B", 2);
  g.add_edge("A", "B");
  EXPECT_THROW(g.add_edge("B", "A"), ValidationError);
  EXPECT_THROW(g.add_edge("A", "C"), ValidationError);
  EXPECT_THROW(g.add_edge("A", "B"), ValidationError);
}

// ---- observational conditioning -------------------------------------------

TEST(Observational, ReferenceValue) {
  const auto d = observational_conditional(reference_scm(), "Y", {{"X", 1}});
  EXPECT_NEAR(d[1], 0.76364, 1e-5);
  EXPECT_NEAR(d[1], 0.84 / 1.1, 1e-15);
}

TEST(Observational, MarkovBlanketGivesCptRow) {
  Rng rng(1);
  const auto m = fdtest::random_frontdoor_scm(rng, true);
  const auto& g = m.graph();
  // Y's Markov blanket is its parents here: Y has no children.
  Assignment ev{{"U", 1}, {"D", 0}, {"X", 1}, {"Z", 1}};
  const auto d = observational_conditional(m, "Y", ev);
  std::vector<int> a(static_cast<std::size_t>(g.size()), 0);
  for (auto& [k, v] : ev) a[static_cast<std::size_t>(g.index_of(k))] = v;
  const int y = g.index_of("Y");
  for (int v = 0; v < g.node(y).domain_size; ++v) EXPECT_NEAR(d[v], m.cpt(y)(m.parent_row(y, a), v), 1e-12);
}

TEST(Observational, SelfEvidenceIsPointMass) {
  const auto d = observational_conditional(reference_scm(), "Y", {{"Y", 1}});
  EXPECT_DOUBLE_EQ(d[0], 0.0);
  EXPECT_DOUBLE_EQ(d[1], 1.0);
}

TEST(Observational, ZeroProbabilityEvidence) {
  CausalGraph g;
  g.add_node("A", 2);
  g.add_node("B", 2);
  g.add_edge("A", "B");
  DiscreteScm m(g);
  m.set_cpt("A", row({1.0, 0.0}));
  m.set_cpt("B", (Eigen::MatrixXd(2, 2) << 0.5, 0.5, 0.5, 0.5).finished());
  EXPECT_THROW(observational_conditional(m, "B", {{"A", 1}}), ConditioningError);
}

// ---- interventions ---------------------------------------------------------

TEST(Intervene, RootBecomesPointMass) {
  const auto m = reference_scm();
  const auto d = intervene(m, {{"U", 0}});
  EXPECT_EQ(d.graph().parents(d.graph().index_of("U")).size(), 0u);
  EXPECT_EQ(d.cpt("U"), row({1.0, 0.0}));
  for (const char* n : {"X", "Z", "Y"}) EXPECT_EQ(d.cpt(n), m.cpt(n));
}

TEST(Intervene, RemovesIncomingEdges) {
  const auto d = intervene(reference_scm(), {{"X", 1}});
  const auto& g = d.graph();
  EXPECT_FALSE(g.has_edge(g.index_of("U"), g.index_of("X")));
  EXPECT_TRUE(g.has_edge(g.index_of("U"), g.index_of("Y")));
  EXPECT_EQ(d.cpt("X"), row({0.0, 1.0}));
}

TEST(Intervene, UnknownNode) { EXPECT_THROW(intervene(reference_scm(), {{"W", 0}}), ValidationError); }

TEST(Intervene, Idempotent) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto m = fdtest::random_frontdoor_scm(rng, t % 2 == 0);
    const Assignment a{{"X", 1}, {"Z", 0}};
    EXPECT_EQ(intervene(intervene(m, a), a), intervene(m, a));
  }
}

TEST(Intervene, MatchesTruncatedFactorization) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto m = fdtest::random_frontdoor_scm(rng, true);
    const int xs = m.graph().node(m.graph().index_of("X")).domain_size;
    for (int x = 0; x < xs; ++x) {
      EXPECT_LT(total_variation(interventional(m, "Y", {{"X", x}}), truncated_product(m, "Y", "X", x)), kExact);
    }
  }
}

TEST(Interventional, ReferenceValue) {
  const auto d = interventional(reference_scm(), "Y", {{"X", 1}});
  EXPECT_NEAR(d[1], 0.7, kExact);
  const auto obs = observational_conditional(reference_scm(), "Y", {{"X", 1}});
  EXPECT_GT(std::abs(obs[1] - d[1]), 0.06);
}

TEST(Interventional, ExogenousTreatmentEqualsObservational) {
  CausalGraph g;
  g.add_node("X", 3);
  g.add_node("W", 2);
  g.add_node("Y", 2);
  g.add_edge("X", "Y");
  g.add_edge("W", "Y");
  DiscreteScm m(g);
  Rng rng(4);
  fdtest::fill_random_cpts(m, rng);
  for (int x = 0; x < 3; ++x) {
    EXPECT_LT(total_variation(interventional(m, "Y", {{"X", x}}), observational_conditional(m, "Y", {{"X", x}})),
              kExact);
  }
}

TEST(Interventional, StatisticalDiffersFromCausalInMostDraws) {
  Rng rng(5);
  int differ = 0;
  const int draws = 200;
  for (int t = 0; t < draws; ++t) {
    const auto m = fdtest::random_frontdoor_scm(rng, t % 2 == 0);
    if (total_variation(interventional(m, "Y", {{"X", 0}}), observational_conditional(m, "Y", {{"X", 0}})) > 1e-6) {
      ++differ;
    }
  }
  EXPECT_GT(differ, draws / 2);
}

// ---- back-door ---------------------------------------------------------------

TEST(Backdoor, ReferenceWithObservedU) {
  auto m = reference_scm();
  m.mutable_graph().set_observed("U", true);
  const auto d = backdoor_estimate(m, "Y", "X", 1, {"U"});
  EXPECT_NEAR(d[1], 0.7, kExact);
}

TEST(Backdoor, RefusesUnobservedAdjustment) {
  EXPECT_THROW(backdoor_estimate(reference_scm(), "Y", "X", 1, {"U"}), ValidationError);
}

TEST(Backdoor, EmptySetOnExogenousTreatment) {
  CausalGraph g;
  g.add_node("X", 2);
  g.add_node("Y", 3);
  g.add_edge("X", "Y");
  DiscreteScm m(g);
  Rng rng(6);
  fdtest::fill_random_cpts(m, rng);
  EXPECT_LT(total_variation(backdoor_estimate(m, "Y", "X", 1, {}), observational_conditional(m, "Y", {{"X", 1}})),
            kExact);
}

TEST(Backdoor, OmittingConfounderIsBiased) {
  auto m = reference_scm();
  m.mutable_graph().set_observed("U", true);
  const auto naive = backdoor_estimate(m, "Y", "X", 1, {});
  EXPECT_GT(std::abs(naive[1] - 0.7), 0.05);
}

TEST(Backdoor, RandomObservedConfounders) {
  Rng rng(7);
  for (int t = 0; t < 120; ++t) {
    const auto m = fdtest::random_backdoor_scm(rng);
    const int xs = m.graph().node(m.graph().index_of("X")).domain_size;
    for (int x = 0; x < xs; ++x) {
      EXPECT_LT(total_variation(backdoor_estimate(m, "Y", "X", x, {"C1", "C2"}), interventional(m, "Y", {{"X", x}})),
                kExact);
    }
  }
}

// ---- front-door ----------------------------------------------------------------

TEST(Frontdoor, ReferenceValue) {
  const auto d = frontdoor_estimate(reference_scm(), "Y", "X", 1, "Z");
  EXPECT_NEAR(d[1], 0.7, kExact);
  EXPECT_LT(total_variation(d, interventional(reference_scm(), "Y", {{"X", 1}})), kExact);
}

TEST(Frontdoor, RandomCriterionSatisfyingScms) {
  Rng rng(8);
  int checked = 0;
  for (int t = 0; t < 150; ++t) {
    const auto m = fdtest::random_frontdoor_scm(rng, t % 3 == 0);
    ASSERT_TRUE(check_frontdoor_criterion(m.graph(), "X", "Y", "Z").passed);
    const int xs = m.graph().node(m.graph().index_of("X")).domain_size;
    for (int x = 0; x < xs; ++x) {
      EXPECT_LT(total_variation(frontdoor_estimate(m, "Y", "X", x, "Z"), interventional(m, "Y", {{"X", x}})), kExact);
      ++checked;
    }
  }
  EXPECT_GE(checked, 300);
}

TEST(Frontdoor, MediatorIndependentOfTreatment) {
  CausalGraph g;
  g.add_node("U", 2, false);
  g.add_node("X", 2);
  g.add_node("Z", 2);
  g.add_node("Y", 2);
  g.add_edge("U", "X");
  g.add_edge("Z", "Y");
  g.add_edge("U", "Y");
  g.add_edge("X", "Y");
  DiscreteScm m(g);
  Rng rng(9);
  fdtest::fill_random_cpts(m, rng);
  try {
    frontdoor_estimate(m, "Y", "X", 1, "Z");
    FAIL() << "expected IdentificationError";
  } catch (const IdentificationError& e) {
    EXPECT_NE(std::string(e.what()).find("condition (i)"), std::string::npos) << e.what();
  }
}

TEST(Frontdoor, DeterministicCopyViolatesPositivity) {
  // Z = X exactly: P(Y | z, x') is undefined for x' != z, so the formula as
  // written has no value even though no X -> Y edge bypasses Z.
  CausalGraph g;
  g.add_node("X", 2);
  g.add_node("Z", 2);
  g.add_node("Y", 2);
  g.add_edge("X", "Z");
  g.add_edge("Z", "Y");
  DiscreteScm m(g);
  m.set_cpt("X", row({0.4, 0.6}));
  m.set_cpt("Z", (Eigen::MatrixXd(2, 2) << 1, 0, 0, 1).finished());
  m.set_cpt("Y", (Eigen::MatrixXd(2, 2) << 0.8, 0.2, 0.3, 0.7).finished());
  ASSERT_TRUE(check_frontdoor_criterion(m.graph(), "X", "Y", "Z").passed);
  EXPECT_THROW(frontdoor_estimate(m, "Y", "X", 1, "Z"), ConditioningError);
  // Smoothed plug-in still returns a distribution.
  Rng rng(10);
  const auto triples = extract_triples(m, sample(m, 2000, rng), "X", "Y", "Z");
  const auto fit = mil_fit(triples, 2, 2, 2);
  EXPECT_TRUE((fit.p_y_do_x.array() >= 0.0).all());
  EXPECT_LT((fit.p_y_do_x.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

// ---- criterion checker ------------------------------------------------------------

TEST(Criterion, FigureGraphPasses) {
  const auto r = check_frontdoor_criterion(fdtest::figure_graph(), "X", "Y", "Z");
  EXPECT_TRUE(r.passed) << r.summary();
}

TEST(Criterion, DirectEdgeFailsInterception) {
  auto g = fdtest::figure_graph();
  g.add_edge("X", "Y");
  const auto r = check_frontdoor_criterion(g, "X", "Y", "Z");
  EXPECT_FALSE(r.passed);
  EXPECT_TRUE(r.violates(FrontdoorCondition::interception));
  EXPECT_NE(r.summary().find("condition (i)"), std::string::npos);
}

TEST(Criterion, ConfounderIntoMediatorFailsTreatmentMediator) {
  auto g = fdtest::figure_graph();
  g.add_edge("U", "Z");
  const auto r = check_frontdoor_criterion(g, "X", "Y", "Z");
  EXPECT_FALSE(r.passed);
  EXPECT_TRUE(r.violates(FrontdoorCondition::treatment_mediator));
  EXPECT_FALSE(r.violates(FrontdoorCondition::interception));
  // The path witnessing (iii) is the back-door Z <- U -> X.
  bool found = false;
  for (const auto& v : r.violations) {
    if (v.condition != FrontdoorCondition::treatment_mediator) continue;
    for (const auto& p : v.paths) found |= p.find("U") != std::string::npos;
  }
  EXPECT_TRUE(found);
}

TEST(Criterion, MediatorOutcomeConfounding) {
  auto g = fdtest::figure_graph();
  g.add_node("W", 2, false);
  g.add_edge("W", "Z");
  g.add_edge("W", "Y");
  const auto r = check_frontdoor_criterion(g, "X", "Y", "Z");
  EXPECT_TRUE(r.violates(FrontdoorCondition::mediator_outcome));
  EXPECT_FALSE(r.violates(FrontdoorCondition::treatment_mediator));
}

TEST(DSeparation, ColliderLogic) {
  CausalGraph g;
  g.add_node("A", 2);
  g.add_node("B", 2);
  g.add_node("C", 2);
  g.add_node("D", 2);
  g.add_edge("A", "C");
  g.add_edge("B", "C");
  g.add_edge("C", "D");
  const int a = 0, b = 1, d = 3;
  EXPECT_TRUE(d_separated(g, a, b, {}));
  EXPECT_FALSE(d_separated(g, a, b, {2}));
  EXPECT_FALSE(d_separated(g, a, b, {d}));  // conditioning on a collider descendant
}

// ---- MIL -----------------------------------------------------------------------

TEST(Mil, RecoversReferenceFromSamples) {
  const auto triples = reference_triples(1000000, 11);
  const auto fit = mil_fit(triples, 2, 2, 2);
  const Eigen::MatrixXd truth = interventional_table(reference_scm(), "Y", "X");
  for (int x = 0; x < 2; ++x) EXPECT_LT(0.5 * (fit.p_y_do_x.row(x) - truth.row(x)).cwiseAbs().sum(), 0.01);
  EXPECT_NEAR(fit.p_y_do_x(1, 1), 0.7, 0.01);
  const double fitted = interventional_log_likelihood(fit.p_y_do_x, triples);
  const double oracle = interventional_log_likelihood(truth, triples);
  EXPECT_LT(std::abs(fitted - oracle) / std::abs(oracle), 0.005);
}

TEST(Mil, EmptyCellFallsBackToUniform) {
  std::vector<Triple> s{{0, 0, 0}, {1, 1, 1}};
  const auto fit = mil_fit(s, 2, 2, 3);
  // z = 2 never observed: every P(y | z=2, x') is uniform.
  for (int xp = 0; xp < 2; ++xp) {
    EXPECT_NEAR(fit.p_y_given_zx(2 * 2 + xp, 0), 0.5, 1e-15);
  }
  EXPECT_LT((fit.p_y_do_x.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Mil, DeterministicMechanismsRecoveredExactly) {
  // Counts only: Z = 1 - X, Y = Z, observed once per cell.
  std::vector<Triple> s{{0, 1, 1}, {1, 0, 0}};
  const auto fit = mil_fit(s, 2, 2, 2, MilOptions{0.0});
  EXPECT_EQ(fit.p_z_given_x(0, 1), 1.0);
  EXPECT_EQ(fit.p_z_given_x(1, 0), 1.0);
  EXPECT_EQ(fit.p_y_given_zx(1 * 2 + 0, 1), 1.0);
  EXPECT_EQ(fit.p_y_given_zx(0 * 2 + 1, 0), 1.0);
}

TEST(Mil, Errors) {
  std::vector<Triple> none;
  EXPECT_THROW(mil_fit(none, 2, 2, 2), ValidationError);
  std::vector<Triple> only_zero{{0, 0, 0}};
  EXPECT_THROW(mil_fit(only_zero, 2, 2, 2), ValidationError);
}

TEST(Mil, LogLikelihoodIsAdditive) {
  const auto triples = reference_triples(5000, 12);
  const Eigen::MatrixXd table = interventional_table(reference_scm(), "Y", "X");
  const std::span<const Triple> all(triples);
  double parts = 0.0;
  for (std::size_t i = 0; i < triples.size(); i += 700) {
    parts += interventional_log_likelihood(table, all.subspan(i, std::min<std::size_t>(700, triples.size() - i)));
  }
  EXPECT_NEAR(parts, interventional_log_likelihood(table, all), 1e-9 * std::abs(parts));
  double singles = 0.0;
  for (const auto& t : triples) singles += std::log(table(t.x, t.y));
  EXPECT_NEAR(singles, interventional_log_likelihood(table, all), 1e-9 * std::abs(singles));
}

// ---- file format --------------------------------------------------------------------

TEST(ScmIo, RoundTrip) {
  Rng rng(13);
  const auto m = fdtest::random_frontdoor_scm(rng, true);
  const auto back = parse_scm_string(format_scm(m));
  EXPECT_EQ(back.graph(), m.graph());
  for (int i = 0; i < m.graph().size(); ++i) EXPECT_LT((back.cpt(i) - m.cpt(i)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ScmIo, ParsesReferenceText) {
  const std::string text =
      "node U 2 unobserved\nnode X 2\nnode Z 2\nnode Y 2\n"
      "edge U X\nedge X Z\nedge Z Y\nedge U Y\n"
      "cpt U 0.5 0.5\ncpt X 0 0.8 0.2\ncpt X 1 0.1 0.9\ncpt Z 0 0.75 0.25\ncpt Z 1 0.25 0.75\n"
      "cpt Y 0 0 0.7 0.3\ncpt Y 0 1 0.5 0.5\ncpt Y 1 0 0.3 0.7\ncpt Y 1 1 0.1 0.9\n";
  const auto m = parse_scm_string(text);
  EXPECT_EQ(m, reference_scm());
}

TEST(ScmIo, ErrorsNameTheLine) {
  try {
    parse_scm_string("node A 2\nnode A 3\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_scm_string("node A 2\ncpt A 0.5\n"), ValidationError);
  EXPECT_THROW(parse_scm_string("node A 2\n"), ValidationError);
  EXPECT_THROW(parse_scm_string("bogus\n"), ValidationError);
}
