#include "frontdoor/scm_io.hpp"

#include "frontdoor/errors.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace frontdoor::scm {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ValidationError("scm file line " + std::to_string(line) + ": " + msg);
}

int parse_int(const std::string& tok, int line) {
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) fail(line, "expected integer, got '" + tok + "'");
  return v;
}

double parse_double(const std::string& tok, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) fail(line, "expected number, got '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    fail(line, "expected number, got '" + tok + "'");
  }
}

struct PendingRow {
  int line;
  std::string node;
  std::vector<int> parent_values;
  std::vector<double> probs;
};

}  // namespace

DiscreteScm parse_scm(std::istream& in) {
  CausalGraph graph;
  std::vector<PendingRow> rows;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string& kw = tok[0];
    try {
      if (kw == "node") {
        if (tok.size() != 3 && tok.size() != 4) fail(line, "usage: node <name> <domain_size> [unobserved]");
        bool observed = true;
        if (tok.size() == 4) {
          if (tok[3] != "unobserved") fail(line, "unknown node flag '" + tok[3] + "'");
          observed = false;
        }
        graph.add_node(tok[1], parse_int(tok[2], line), observed);
      } else if (kw == "edge") {
        if (tok.size() != 3) fail(line, "usage: edge <parent> <child>");
        graph.add_edge(tok[1], tok[2]);
      } else if (kw == "cpt") {
        if (tok.size() < 3) fail(line, "usage: cpt <name> <parent values...> <probs...>");
        PendingRow r{line, tok[1], {}, {}};
        for (std::size_t i = 2; i < tok.size(); ++i) r.probs.push_back(parse_double(tok[i], line));
        rows.push_back(std::move(r));
      } else {
        fail(line, "unknown directive '" + kw + "'");
      }
    } catch (const ValidationError& e) {
      const std::string what = e.what();
      if (what.rfind("scm file line", 0) == 0) throw;
      fail(line, what);
    }
  }

  DiscreteScm scm(graph);
  std::vector<std::vector<char>> filled(static_cast<std::size_t>(graph.size()));
  std::vector<Eigen::MatrixXd> tables(static_cast<std::size_t>(graph.size()));
  for (int i = 0; i < graph.size(); ++i) {
    tables[static_cast<std::size_t>(i)] = scm.cpt(i);
    filled[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(scm.cpt(i).rows()), 0);
  }
  for (auto& r : rows) {
    if (!graph.contains(r.node)) fail(r.line, "cpt for unknown node " + r.node);
    const int n = graph.index_of(r.node);
    const auto& parents = graph.parents(n);
    const int k = graph.node(n).domain_size;
    const std::size_t expected = parents.size() + static_cast<std::size_t>(k);
    if (r.probs.size() != expected) {
      fail(r.line, "cpt " + r.node + " needs " + std::to_string(parents.size()) + " parent values and " +
                       std::to_string(k) + " probabilities");
    }
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < parents.size(); ++i) {
      const double v = r.probs[i];
      const int pv = static_cast<int>(v);
      const int ps = graph.node(parents[i]).domain_size;
      if (pv != v || pv < 0 || pv >= ps) fail(r.line, "parent value out of range for " + graph.node(parents[i]).name);
      row = row * ps + pv;
    }
    auto& seen = filled[static_cast<std::size_t>(n)][static_cast<std::size_t>(row)];
    if (seen) fail(r.line, "duplicate cpt row for " + r.node);
    seen = 1;
    for (int v = 0; v < k; ++v) tables[static_cast<std::size_t>(n)](row, v) = r.probs[parents.size() + static_cast<std::size_t>(v)];
  }
  for (int i = 0; i < graph.size(); ++i) {
    for (std::size_t r = 0; r < filled[static_cast<std::size_t>(i)].size(); ++r) {
      if (!filled[static_cast<std::size_t>(i)][r]) {
        throw ValidationError("scm file: missing cpt row " + std::to_string(r) + " for " + graph.node(i).name);
      }
    }
    scm.set_cpt(i, tables[static_cast<std::size_t>(i)]);
  }
  scm.validate();
  return scm;
}

DiscreteScm parse_scm_string(const std::string& text) {
  std::istringstream in(text);
  return parse_scm(in);
}

DiscreteScm load_scm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scm file " + path.string());
  return parse_scm(in);
}

std::string format_scm(const DiscreteScm& scm) {
  const auto& g = scm.graph();
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& v : g.nodes()) os << "node " << v.name << ' ' << v.domain_size << (v.observed ? "" : " unobserved") << '\n';
  for (int c = 0; c < g.size(); ++c)
    for (int p : g.parents(c)) os << "edge " << g.node(p).name << ' ' << g.node(c).name << '\n';
  for (int n = 0; n < g.size(); ++n) {
    const auto& t = scm.cpt(n);
    const auto& parents = g.parents(n);
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      os << "cpt " << g.node(n).name;
      std::vector<int> pv(parents.size());
      Eigen::Index rem = r;
      for (std::size_t i = parents.size(); i-- > 0;) {
        const int s = g.node(parents[i]).domain_size;
        pv[i] = static_cast<int>(rem % s);
        rem /= s;
      }
      for (int v : pv) os << ' ' << v;
      for (Eigen::Index v = 0; v < t.cols(); ++v) os << ' ' << t(r, v);
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace frontdoor::scm
