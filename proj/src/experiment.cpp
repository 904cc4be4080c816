#include "frontdoor/experiment.hpp"

#include "frontdoor/errors.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace frontdoor {

namespace {

using json = nlohmann::ordered_json;

json probs_json(const scm::Distribution& d) {
  json out = json::array();
  for (Index i = 0; i < d.probs.size(); ++i) out.push_back(d.probs[i]);
  return out;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

/// Config text restricted to the fields that determine an NST model.
std::string nst_key(const ExperimentConfig& c, const bench::Dataset& data, int heldout) {
  const auto b = data.config;
  std::ostringstream k;
  k << "seed=" << c.seed << ";data=" << b.num_domains << ',' << b.num_classes << ',' << b.image_size << ','
    << b.samples_per_class << ',' << b.test_per_class << ',' << json(b.val_fraction).dump() << ','
    << json(b.rho).dump() << ',' << b.seed << ";nst=" << c.nst_base_channels << ',' << c.nst.ae_epochs << ','
    << c.nst.style_epochs << ',' << json(c.nst.lr).dump() << ',' << c.nst.batch_size << ','
    << json(c.nst.recon_weight).dump() << ',' << json(c.nst.content_weight).dump() << ','
    << json(c.nst.style_weight).dump() << ',' << c.nst.samples_per_epoch << ";fold=" << heldout;
  return k.str();
}

std::string data_key(const ExperimentConfig& c) {
  const auto b = dataset_config(c);
  std::ostringstream k;
  k << b.num_domains << ',' << b.num_classes << ',' << b.image_size << ',' << b.samples_per_class << ','
    << b.test_per_class << ',' << json(b.val_fraction).dump() << ',' << json(b.rho).dump() << ',' << b.seed;
  return k.str();
}

}  // namespace

std::string cmd_scm_verify(const scm::DiscreteScm& model, const ScmVerifyOptions& o) {
  model.validate();
  const auto& g = model.graph();
  for (const auto* name : {&o.treatment, &o.outcome, &o.mediator}) {
    if (!g.contains(*name)) throw ValidationError("scm-verify: unknown variable '" + *name + "'");
  }
  json out;
  out["nodes"] = json::array();
  for (const auto& v : g.nodes()) {
    out["nodes"].push_back({{"name", v.name}, {"domain_size", v.domain_size}, {"observed", v.observed}});
  }
  out["treatment"] = o.treatment;
  out["outcome"] = o.outcome;
  out["mediator"] = o.mediator;
  const auto report = scm::check_frontdoor_criterion(g, o.treatment, o.outcome, o.mediator);
  json crit{{"passed", report.passed}, {"violations", json::array()}};
  for (const auto& v : report.violations) {
    crit["violations"].push_back({{"condition", scm::condition_label(v.condition)}, {"paths", v.paths}});
  }
  out["criterion"] = crit;
  out["queries"] = json::array();
  const int x_size = g.node(g.index_of(o.treatment)).domain_size;
  for (int x = 0; x < x_size; ++x) {
    json q{{"treatment_value", x}};
    const auto truth = scm::interventional(model, o.outcome, {{o.treatment, x}});
    q["interventional"] = probs_json(truth);
    try {
      q["observational"] = probs_json(scm::observational_conditional(model, o.outcome, {{o.treatment, x}}));
    } catch (const Error& e) {
      q["observational"] = {{"error", e.kind()}, {"message", e.what()}};
    }
    try {
      const auto fd = scm::frontdoor_estimate(model, o.outcome, o.treatment, x, o.mediator);
      q["frontdoor"] = probs_json(fd);
      q["frontdoor_tv"] = scm::total_variation(fd, truth);
    } catch (const Error& e) {
      q["frontdoor"] = {{"error", e.kind()}, {"message", e.what()}};
    }
    if (!o.adjust.empty()) {
      try {
        const auto bd = scm::backdoor_estimate(model, o.outcome, o.treatment, x, o.adjust);
        q["backdoor"] = probs_json(bd);
        q["backdoor_tv"] = scm::total_variation(bd, truth);
      } catch (const Error& e) {
        q["backdoor"] = {{"error", e.kind()}, {"message", e.what()}};
      }
    }
    out["queries"].push_back(q);
  }
  return out.dump(2) + "\n";
}

// ---- caches -----------------------------------------------------------------

NstCache::NstCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path NstCache::path_for(const ExperimentConfig& config, const bench::Dataset& data,
                                         int heldout) const {
  const auto& name = data.domains.at(static_cast<std::size_t>(heldout)).name;
  return dir_ / ("nst-" + name + "-" + hex64(fnv1a(nst_key(config, data, heldout))) + ".fdt");
}

const NstModel& NstCache::get(const ExperimentConfig& config, const bench::Dataset& data, int heldout) {
  const std::string key = nst_key(config, data, heldout);
  Entry* entry;
  {
    std::lock_guard lock(mutex_);
    auto& slot = entries_[key];
    if (!slot) slot = std::make_unique<Entry>();
    entry = slot.get();
  }
  std::lock_guard lock(entry->mutex);
  if (!entry->model) {
    const auto path = dir_.empty() ? std::filesystem::path() : path_for(config, data, heldout);
    if (!path.empty() && std::filesystem::exists(path)) {
      entry->model = std::make_unique<NstModel>(NstModel::load(path));
    } else {
      entry->model = std::make_unique<NstModel>(train_fold_nst(config, make_fold(data, heldout)));
      if (!path.empty()) {
        std::filesystem::create_directories(dir_);
        entry->model->save(path);
      }
    }
  }
  return *entry->model;
}

NstProvider NstCache::provider(const ExperimentConfig& config, const bench::Dataset& data) {
  return [this, config, &data](int heldout) -> const NstModel& { return get(config, data, heldout); };
}

const bench::Dataset& DatasetCache::get(const ExperimentConfig& config) {
  std::lock_guard lock(mutex_);
  auto& slot = entries_[data_key(config)];
  if (!slot) slot = std::make_unique<bench::Dataset>(bench::generate(dataset_config(config)));
  return *slot;
}

// ---- run / ablate / gridsearch ---------------------------------------------

RunReport cmd_run(const ExperimentConfig& config, const bench::Dataset& data, int jobs, NstCache& nst) {
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  report.result = evaluate_lodo(config, data, jobs, nst.provider(config, data));
  report.summary = summary_json(config, report.result);
  std::ostringstream csv;
  write_metrics_csv(csv, report.result);
  report.metrics_csv = csv.str();
  report.config_echo = echo_config(config);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void write_run_report(const std::filesystem::path& dir, const RunReport& report) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name);
    if (!out) throw IoError("run: cannot write " + (dir / name).string());
    out << text;
  };
  write("summary.json", report.summary);
  write("metrics.csv", report.metrics_csv);
  write("config.txt", report.config_echo);
  json meta{{"metrics_csv", "metrics.csv"},
            {"summary_json", "summary.json"},
            {"config", "config.txt"},
            {"wall_clock_seconds", report.wall_seconds}};
  write("run_report.json", meta.dump(2) + "\n");
}

std::vector<AblationRow> cmd_ablate(const ExperimentConfig& config, const std::string& sweep,
                                    const std::vector<double>& values, int repeats, int jobs, NstCache& nst,
                                    DatasetCache& data) {
  if (sweep != "k" && sweep != "alpha") throw ValidationError("ablate: sweep must be k or alpha");
  if (values.empty()) throw ValidationError("ablate: no values");
  if (repeats < 1) throw ValidationError("ablate: repeats must be >= 1");
  if (config.method == Method::erm) throw ValidationError("ablate: erm has no style parameters to sweep");
  std::vector<AblationRow> rows;
  const std::vector<Sampling> strategies =
      sweep == "k" ? std::vector<Sampling>{Sampling::random, Sampling::domain_balance}
                   : std::vector<Sampling>{config.sampling};
  for (double v : values) {
    for (Sampling s : strategies) {
      for (int r = 0; r < repeats; ++r) {
        ExperimentConfig c = config;
        c.seed = config.seed + static_cast<std::uint64_t>(r);
        c.sampling = s;
        if (sweep == "k") {
          if (v < 1 || v != std::floor(v)) throw ValidationError("ablate: k values must be positive integers");
          c.k = static_cast<int>(v);
        } else {
          if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("ablate: alpha values must lie in [0, 1]");
          c.alpha = v;
        }
        const auto& dataset = data.get(c);
        const auto result = evaluate_lodo(c, dataset, jobs, nst.provider(c, dataset));
        rows.push_back({sweep, v, sampling_name(s), r, c.seed, result.mean_test_acc, result.mean_val_acc});
      }
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "sweep,value,sampling,repeat,seed,mean_test_acc,mean_val_acc\n";
  for (const auto& r : rows) {
    out << r.sweep << ',' << json(r.value).dump() << ',' << r.sampling << ',' << r.repeat << ',' << r.seed << ','
        << json(r.mean_test_acc).dump() << ',' << json(r.mean_val_acc).dump() << '\n';
  }
  return out.str();
}

GridCell select_best(const std::vector<GridCell>& cells) {
  if (cells.empty()) throw ValidationError("gridsearch: empty grid");
  GridCell best = cells.front();
  for (const auto& c : cells) {
    const bool better = c.val_acc > best.val_acc ||
                        (c.val_acc == best.val_acc &&
                         (c.alpha < best.alpha || (c.alpha == best.alpha && c.beta < best.beta)));
    if (better) best = c;
  }
  return best;
}

GridResult cmd_gridsearch(const ExperimentConfig& config, const std::vector<double>& alphas,
                          const std::vector<double>& betas, int jobs, NstCache& nst, DatasetCache& data) {
  if (alphas.empty() || betas.empty()) throw ValidationError("gridsearch: grids must be nonempty");
  if (config.method == Method::erm) throw ValidationError("gridsearch: erm has no style parameters");
  GridResult out;
  const auto& dataset = data.get(config);
  for (double a : alphas) {
    for (double b : betas) {
      ExperimentConfig c = config;
      if (!(a >= 0.0 && a <= 1.0) || !(b >= 0.0 && b <= 1.0)) {
        throw ValidationError("gridsearch: alpha and beta must lie in [0, 1]");
      }
      c.alpha = a;
      c.beta = b;
      const auto result = evaluate_lodo(c, dataset, jobs, nst.provider(c, dataset));
      out.cells.push_back({a, b, result.mean_val_acc, result.mean_test_acc});
    }
  }
  out.best = select_best(out.cells);
  return out;
}

std::string grid_csv(const GridResult& result) {
  std::ostringstream out;
  out << "alpha,beta,mean_val_acc,mean_test_acc,selected\n";
  for (const auto& c : result.cells) {
    const bool sel = c.alpha == result.best.alpha && c.beta == result.best.beta;
    out << json(c.alpha).dump() << ',' << json(c.beta).dump() << ',' << json(c.val_acc).dump() << ','
        << json(c.test_acc).dump() << ',' << (sel ? 1 : 0) << '\n';
  }
  return out.str();
}

std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw ValidationError("grid: need step > 0 and hi >= lo");
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double v = lo + i * step;
    if (v > hi + 1e-9) break;
    out.push_back(std::round(v * 1e9) / 1e9);
  }
  return out;
}

}  // namespace frontdoor
