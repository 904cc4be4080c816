#include "frontdoor/bench.hpp"
#include "frontdoor/config.hpp"
#include "frontdoor/errors.hpp"
#include "frontdoor/experiment.hpp"
#include "frontdoor/image_io.hpp"
#include "frontdoor/nst.hpp"
#include "frontdoor/scm_io.hpp"
#include "frontdoor/spectral.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace frontdoor;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config file (key = value)");
  cmd->add_option("--seed", c.seed, "Master seed (overrides the config)");
  cmd->add_option("--out", c.out, "Output path");
  cmd->add_option("--jobs", c.jobs, "Parallel workers")->check(CLI::PositiveNumber);
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  validate_config(cfg);
  return cfg;
}

bench::Dataset dataset_for(const ExperimentConfig& cfg, const std::string& data_dir) {
  return data_dir.empty() ? bench::generate(dataset_config(cfg)) : bench::read_dataset(data_dir);
}

int domain_index(const bench::Dataset& data, const std::string& name) {
  for (std::size_t i = 0; i < data.domains.size(); ++i)
    if (data.domains[i].name == name) return static_cast<int>(i);
  throw ValidationError("unknown domain '" + name + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("bad number '" + item + "' in list");
    }
  }
  return out;
}

int fail(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
  return kind == "usage" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  frontdoor::tune_allocator();
  CLI::App app{"Front-door adjusted style transfer toolkit"};
  app.require_subcommand(1);

  Common common;

  auto* verify = app.add_subcommand("scm-verify", "Check the front-door criterion and estimates on an SCM file");
  std::string scm_file;
  ScmVerifyOptions vopts;
  std::string adjust;
  verify->add_option("scm", scm_file, "SCM text file")->required();
  verify->add_option("--treatment", vopts.treatment, "Treatment variable");
  verify->add_option("--outcome", vopts.outcome, "Outcome variable");
  verify->add_option("--mediator", vopts.mediator, "Mediator variable");
  verify->add_option("--adjust", adjust, "Comma-separated back-door adjustment set");
  verify->add_option("--out", common.out, "Write JSON here instead of stdout");

  auto* dataset = app.add_subcommand("dataset", "Synthetic benchmark");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "Generate the benchmark to a directory");
  add_common(gen, common);

  auto* train_nst_cmd = app.add_subcommand("train-nst", "Train the NST model of one held-out fold");
  add_common(train_nst_cmd, common);
  std::string heldout, data_dir;
  train_nst_cmd->add_option("--heldout", heldout, "Held-out domain name")->required();
  train_nst_cmd->add_option("--data", data_dir, "Dataset directory (default: generate from config)");

  auto* stylize = app.add_subcommand("stylize", "Stylize one image");
  std::string content, style, stylize_method = "adain", nst_path, image_out;
  double mix = 1.0;
  stylize->add_option("--content", content, "Content image (PPM)")->required();
  stylize->add_option("--style", style, "Style image (PPM)")->required();
  stylize->add_option("--method", stylize_method, "adain|fourier")->check(CLI::IsMember({"adain", "fourier"}));
  stylize->add_option("--alpha,--lambda", mix, "alpha (adain) or lambda (fourier)");
  stylize->add_option("--nst", nst_path, "NST checkpoint (adain)");
  stylize->add_option("--out", image_out, "Output PPM")->required();

  auto* run = app.add_subcommand("run", "Leave-one-domain-out evaluation");
  add_common(run, common);
  std::string nst_dir;
  run->add_option("--data", data_dir, "Dataset directory (default: generate from config)");
  run->add_option("--nst-dir", nst_dir, "Directory of cached NST checkpoints");

  auto* ablate = app.add_subcommand("ablate", "Sweep K or alpha");
  add_common(ablate, common);
  std::string sweep, values;
  int repeats = 1;
  ablate->add_option("--sweep", sweep, "k|alpha")->required()->check(CLI::IsMember({"k", "alpha"}));
  ablate->add_option("--values", values, "Comma-separated values")->required();
  ablate->add_option("--repeats", repeats, "Seeds per value")->check(CLI::PositiveNumber);
  ablate->add_option("--nst-dir", nst_dir, "Directory of cached NST checkpoints");

  auto* grid = app.add_subcommand("gridsearch", "Grid search alpha and beta on validation accuracy");
  add_common(grid, common);
  std::string alphas = "0.6,0.65,0.7,0.75,0.8", betas = "0.25,0.3,0.35,0.4,0.45";
  grid->add_option("--alphas", alphas, "Comma-separated alpha grid");
  grid->add_option("--betas", betas, "Comma-separated beta grid");
  grid->add_option("--nst-dir", nst_dir, "Directory of cached NST checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (*verify) {
      if (!adjust.empty()) {
        std::stringstream ss(adjust);
        std::string item;
        while (std::getline(ss, item, ',')) vopts.adjust.push_back(item);
      }
      const std::string text = cmd_scm_verify(scm::load_scm(scm_file), vopts);
      if (common.out.empty()) {
        std::cout << text;
      } else {
        write_text(common.out, text);
      }
    } else if (*gen) {
      const auto cfg = resolve(common);
      if (common.out.empty()) throw ValidationError("dataset gen: --out is required");
      bench::write_dataset(common.out, bench::generate(dataset_config(cfg)));
      std::cout << "wrote " << common.out << "\n";
    } else if (*train_nst_cmd) {
      const auto cfg = resolve(common);
      const auto data = dataset_for(cfg, data_dir);
      const int h = domain_index(data, heldout);
      const fs::path dir = common.out.empty() ? fs::path("nst") : fs::path(common.out);
      NstCache cache(dir);
      cache.get(cfg, data, h);
      std::cout << cache.path_for(cfg, data, h).string() << "\n";
    } else if (*stylize) {
      const Image c = read_ppm(content);
      const Image s = read_ppm(style);
      Image outimg;
      if (stylize_method == "fourier") {
        outimg = amplitude_mix(c, s, mix);
      } else {
        if (nst_path.empty()) throw ValidationError("stylize: --nst is required for method adain");
        outimg = nst_stylize(NstModel::load(nst_path), c, s, mix);
      }
      write_ppm(image_out, outimg);
    } else if (*run) {
      const auto cfg = resolve(common);
      const auto data = dataset_for(cfg, data_dir);
      NstCache cache(nst_dir);
      const auto report = cmd_run(cfg, data, common.jobs, cache);
      if (common.out.empty()) {
        std::cout << report.summary;
      } else {
        write_run_report(common.out, report);
        std::cout << report.summary;
      }
    } else if (*ablate) {
      const auto cfg = resolve(common);
      NstCache cache(nst_dir);
      DatasetCache data;
      const auto rows = cmd_ablate(cfg, sweep, parse_list(values), repeats, common.jobs, cache, data);
      const auto csv = ablation_csv(rows);
      common.out.empty() ? void(std::cout << csv) : write_text(common.out, csv);
    } else if (*grid) {
      const auto cfg = resolve(common);
      NstCache cache(nst_dir);
      DatasetCache data;
      const auto result = cmd_gridsearch(cfg, parse_list(alphas), parse_list(betas), common.jobs, cache, data);
      const auto csv = grid_csv(result);
      if (!common.out.empty()) write_text(common.out, csv);
      std::cout << nlohmann::json{{"alpha", result.best.alpha}, {"beta", result.best.beta},
                                  {"mean_val_acc", result.best.val_acc}}.dump()
                << "\n";
    }
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
