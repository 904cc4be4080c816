#pragma once

#include "frontdoor/bench.hpp"
#include "frontdoor/nn.hpp"
#include "frontdoor/nst.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace frontdoor {

enum class Method { erm, fast, faft, fagt };
enum class Sampling { random, domain_balance };

const char* method_name(Method m);
Method parse_method(const std::string& s);
const char* sampling_name(Sampling s);
Sampling parse_sampling(const std::string& s);
bool uses_nst(Method m);

/// Every knob of one experiment. Defaults follow the digit-scale protocol:
/// SGD momentum 0.9, weight decay 5e-4, lr 0.03 decayed by 0.1 on a step
/// schedule, batch 64, K = 3 domain-balanced styles.
struct ExperimentConfig {
  Method method = Method::fast;
  double alpha = 0.7;
  double beta = 0.35;
  double eta = 1.0;
  int k = 3;
  Sampling sampling = Sampling::domain_balance;

  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LrSchedule schedule = LrSchedule::step;
  int epochs = 6;
  int step_size = 4;
  double gamma = 0.1;
  int batch_size = 64;
  /// Classifier conv width (channels w, 2w, 4w).
  int width = 8;
  /// Evaluate val/test every N epochs; 0 = final epoch only.
  int eval_every = 0;
  /// Held-out domains to run (names); empty = all.
  std::vector<std::string> folds;

  bench::BenchConfig data;

  int nst_base_channels = 4;
  NstTrainOptions nst;

  std::uint64_t seed = 0;

  /// Keys explicitly present in the parsed file.
  std::set<std::string> explicit_keys;
};

/// Seeds derived from the master seed by named stream.
std::uint64_t data_seed(const ExperimentConfig& c);
std::uint64_t nst_seed(const ExperimentConfig& c, const std::string& fold);
std::uint64_t classifier_seed(const ExperimentConfig& c, const std::string& fold);
std::uint64_t style_seed(const ExperimentConfig& c, const std::string& fold);

/// Dataset config with the derived data seed filled in.
bench::BenchConfig dataset_config(const ExperimentConfig& c);

/// `key = value` lines; '#' starts a comment. Unknown keys, bad values and
/// out-of-range values raise ValidationError naming the line.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig parse_config_string(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `key = value` assignment (used for CLI overrides too).
void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value);

/// Checks cross-field constraints; throws ValidationError.
void validate_config(const ExperimentConfig& c);

/// Canonical config text; parses back to the same config.
std::string echo_config(const ExperimentConfig& c);

/// Every accepted key in echo order.
const std::vector<std::string>& config_keys();

}  // namespace frontdoor
