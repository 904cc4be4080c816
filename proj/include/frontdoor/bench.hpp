#pragma once

#include "frontdoor/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace frontdoor::bench {

enum class Shape { square = 0, circle = 1, triangle = 2, cross = 3 };
inline constexpr int kNumShapes = 4;
const char* shape_name(int label);

using Rgb = std::array<double, 3>;

struct PalettePair {
  Rgb background;
  Rgb foreground;
};

struct DomainSpec {
  std::string name;
  /// One background/foreground pair per palette index.
  std::vector<PalettePair> palette;
  /// Sinusoidal background texture, cycles per image.
  double texture_freq = 3.0;
  double texture_amplitude = 0.15;
  /// Additive Gaussian pixel noise sigma.
  double noise_level = 0.03;
};

struct SampleRecipe {
  int label = 0;
  const DomainSpec* domain = nullptr;
  int palette_index = 0;
  /// Brightness tint in [0, 1].
  double nuisance = 0.0;
  std::uint64_t seed = 0;
};

/// Brightness offset applied per unit of nuisance around 0.5.
inline constexpr double kTintScale = 0.3;

/// Binary shape mask (size×size, row-major), a function of (label, seed).
std::vector<std::uint8_t> shape_mask(int label, std::uint64_t seed, int size);

/// 3×size×size image, quantized to 8-bit levels.
Image render(const SampleRecipe& recipe, int size);

struct BenchConfig {
  int num_domains = 4;
  int num_classes = 4;
  int image_size = 32;
  int samples_per_class = 600;
  /// Per-class count of each domain's held-out evaluation split.
  int test_per_class = 600;
  double val_fraction = 0.2;
  /// Probability that palette index and tint both align with the label.
  double rho = 0.9;
  std::uint64_t seed = 0;
};

/// Built-in domain family; palettes are distinct across domains.
std::vector<DomainSpec> default_domains(int num_domains, int num_classes);

struct Sample {
  Image image;
  int label = 0;
  int domain = 0;
  /// -1 when unknown (loaded from disk).
  int palette_index = -1;
  double nuisance = -1.0;
};

struct DomainData {
  std::string name;
  /// Confounded source splits (cue alignment rho).
  std::vector<Sample> train;
  std::vector<Sample> val;
  /// Evaluation split used when the domain is held out; cues are
  /// independent of the label.
  std::vector<Sample> test;
};

struct Dataset {
  BenchConfig config;
  std::vector<DomainData> domains;
  int num_classes() const { return config.num_classes; }
};

/// Pure function of the config (including its seed).
Dataset generate(const BenchConfig& config);
Dataset generate(const BenchConfig& config, const std::vector<DomainSpec>& domains);

void write_split(std::ostream& out, const std::vector<Sample>& samples);
std::vector<Sample> read_split(std::istream& in, int domain);

/// Writes <dir>/manifest.json and <dir>/<domain>/{train,val,test}.fdd.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace frontdoor::bench
