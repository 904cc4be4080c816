#include "frontdoor/bench.hpp"

#include "frontdoor/errors.hpp"
#include "frontdoor/image_io.hpp"
#include "frontdoor/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace frontdoor::bench {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'D', '1'};

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Rgb rgb{};
  switch (static_cast<int>(hp)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (double& ch : rgb) ch += m;
  return rgb;
}

bool inside(int label, double u, double v, double r) {
  switch (static_cast<Shape>(label)) {
    case Shape::square:
      return std::abs(u) <= 0.8 * r && std::abs(v) <= 0.8 * r;
    case Shape::circle:
      return u * u + v * v <= r * r;
    case Shape::triangle: {
      // Equilateral, circumradius r, apex at -v.
      const double k = std::sqrt(3.0);
      return v <= 0.5 * r && k * std::abs(u) <= v + r;
    }
    case Shape::cross:
      return (std::abs(u) <= r && std::abs(v) <= 0.3 * r) || (std::abs(v) <= r && std::abs(u) <= 0.3 * r);
  }
  return false;
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_le(std::istream& in, int bytes, const char* what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), bytes)) throw IoError(std::string("fdd: truncated ") + what);
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void validate(const BenchConfig& c) {
  if (c.num_domains < 2) throw ValidationError("bench: num_domains must be >= 2");
  if (c.num_classes < 2 || c.num_classes > kNumShapes) {
    throw ValidationError("bench: num_classes must lie in [2, " + std::to_string(kNumShapes) + "]");
  }
  if (c.image_size < 16) throw ValidationError("bench: image_size must be >= 16");
  if (c.samples_per_class < 2 || c.test_per_class < 1) throw ValidationError("bench: sample counts too small");
  if (!(c.rho >= 0.0 && c.rho <= 1.0)) throw ValidationError("bench: rho must lie in [0, 1]");
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) throw ValidationError("bench: val_fraction must lie in (0, 1)");
}

}  // namespace

const char* shape_name(int label) {
  static const char* names[] = {"square", "circle", "triangle", "cross"};
  if (label < 0 || label >= kNumShapes) throw ValidationError("bench: unknown shape " + std::to_string(label));
  return names[label];
}

std::vector<std::uint8_t> shape_mask(int label, std::uint64_t seed, int size) {
  if (label < 0 || label >= kNumShapes) throw ValidationError("bench: unknown shape " + std::to_string(label));
  Rng rng(seed, "shape");
  const double r = size * rng.uniform(0.26, 0.36);
  const double cx = 0.5 * size + rng.uniform(-2.0, 2.0);
  const double cy = 0.5 * size + rng.uniform(-2.0, 2.0);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ct = std::cos(theta), st = std::sin(theta);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(size * size));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
      mask[static_cast<std::size_t>(y * size + x)] = inside(label, u, v, r) ? 1 : 0;
    }
  }
  return mask;
}

Image render(const SampleRecipe& recipe, int size) {
  if (recipe.domain == nullptr) throw ValidationError("render: recipe has no domain");
  const DomainSpec& dom = *recipe.domain;
  if (recipe.palette_index < 0 || recipe.palette_index >= static_cast<int>(dom.palette.size())) {
    throw ValidationError("render: palette index outside domain " + dom.name);
  }
  if (!(recipe.nuisance >= 0.0 && recipe.nuisance <= 1.0)) throw ValidationError("render: nuisance must lie in [0, 1]");
  if (size < 16) throw ValidationError("render: size must be >= 16");
  const auto mask = shape_mask(recipe.label, recipe.seed, size);
  const PalettePair& pp = dom.palette[static_cast<std::size_t>(recipe.palette_index)];
  Rng tex_rng(recipe.seed, "texture");
  const double phi = tex_rng.uniform(0.0, std::numbers::pi);
  const double offset = tex_rng.uniform(0.0, 2.0 * std::numbers::pi);
  Rng noise_rng(recipe.seed, "noise");
  const double tint = kTintScale * (recipe.nuisance - 0.5);
  const double k = 2.0 * std::numbers::pi * dom.texture_freq / size;
  Image img(3, size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool fg = mask[static_cast<std::size_t>(y * size + x)] != 0;
      const double wave =
          fg ? 1.0
             : 1.0 + dom.texture_amplitude * std::sin(k * (x * std::cos(phi) + y * std::sin(phi)) + offset);
      for (int c = 0; c < 3; ++c) {
        const double base = fg ? pp.foreground[static_cast<std::size_t>(c)] : pp.background[static_cast<std::size_t>(c)];
        double v = base * wave + tint;
        if (dom.noise_level > 0.0) v += dom.noise_level * noise_rng.normal();
        img(c, y, x) = quantize_u8(v) / 255.0;
      }
    }
  }
  return img;
}

std::vector<DomainSpec> default_domains(int num_domains, int num_classes) {
  std::vector<DomainSpec> out;
  for (int d = 0; d < num_domains; ++d) {
    DomainSpec spec;
    spec.name = "domain" + std::to_string(d);
    for (int p = 0; p < num_classes; ++p) {
      const double hue = (p + static_cast<double>(d) / num_domains) / num_classes;
      spec.palette.push_back({hsv(hue, 0.6, 0.8), hsv(hue + 0.5, 0.6, 0.3)});
    }
    spec.texture_freq = 2.0 + d;
    spec.texture_amplitude = 0.15;
    spec.noise_level = 0.02 + 0.01 * d;
    out.push_back(std::move(spec));
  }
  return out;
}

Dataset generate(const BenchConfig& config) {
  return generate(config, default_domains(config.num_domains, config.num_classes));
}

Dataset generate(const BenchConfig& config, const std::vector<DomainSpec>& domains) {
  validate(config);
  if (static_cast<int>(domains.size()) != config.num_domains) throw ValidationError("bench: domain spec count differs");
  std::set<std::string> names;
  for (const auto& d : domains) {
    if (!names.insert(d.name).second) throw ValidationError("bench: duplicate domain name " + d.name);
    if (static_cast<int>(d.palette.size()) < config.num_classes) {
      throw ValidationError("bench: domain " + d.name + " needs one palette pair per class");
    }
    if (!(d.texture_freq > 0.0)) throw ValidationError("bench: texture_freq must be > 0");
  }
  const int n_val = static_cast<int>(std::lround(config.val_fraction * config.samples_per_class));
  if (n_val < 1 || n_val >= config.samples_per_class) throw ValidationError("bench: val_fraction leaves an empty split");
  const int C = config.num_classes;

  Dataset data;
  data.config = config;
  for (int d = 0; d < config.num_domains; ++d) {
    const DomainSpec* spec = &domains[static_cast<std::size_t>(d)];
    DomainData dd;
    dd.name = spec->name;
    auto draw = [&](Rng& rng, int label, double rho) {
      SampleRecipe r;
      r.label = label;
      r.domain = spec;
      if (rng.uniform() < rho) {
        r.palette_index = label;
        r.nuisance = static_cast<double>(label) / (C - 1);
      } else {
        r.palette_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(C)));
        r.nuisance = rng.uniform();
      }
      r.seed = rng.next_u64();
      Sample s{render(r, config.image_size), label, d, r.palette_index, r.nuisance};
      return s;
    };
    Rng src(config.seed, "bench/" + spec->name + "/source");
    Rng tst(config.seed, "bench/" + spec->name + "/test");
    for (int label = 0; label < C; ++label) {
      for (int i = 0; i < config.samples_per_class; ++i) {
        (i < config.samples_per_class - n_val ? dd.train : dd.val).push_back(draw(src, label, config.rho));
      }
      for (int i = 0; i < config.test_per_class; ++i) dd.test.push_back(draw(tst, label, 0.0));
    }
    data.domains.push_back(std::move(dd));
  }
  return data;
}

void write_split(std::ostream& out, const std::vector<Sample>& samples) {
  out.write(kMagic, 4);
  put_u64(out, samples.size());
  for (const auto& s : samples) {
    const Image& img = s.image;
    put_u16(out, static_cast<std::uint16_t>(s.label));
    put_u16(out, static_cast<std::uint16_t>(img.height));
    put_u16(out, static_cast<std::uint16_t>(img.width));
    put_u16(out, static_cast<std::uint16_t>(img.channels));
    std::string bytes(static_cast<std::size_t>(img.data.size()), '\0');
    std::size_t k = 0;
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x)
        for (Index c = 0; c < img.channels; ++c) bytes[k++] = static_cast<char>(quantize_u8(img(c, y, x)));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError("fdd: write failed");
}

std::vector<Sample> read_split(std::istream& in, int domain) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) throw IoError("fdd: bad magic");
  const auto count = get_le(in, 8, "record count");
  std::vector<Sample> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    Sample s;
    s.label = static_cast<int>(get_le(in, 2, "label"));
    const auto h = static_cast<Index>(get_le(in, 2, "height"));
    const auto w = static_cast<Index>(get_le(in, 2, "width"));
    const auto c = static_cast<Index>(get_le(in, 2, "channels"));
    s.domain = domain;
    s.image = Image(c, h, w);
    std::string bytes(static_cast<std::size_t>(c * h * w), '\0');
    if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) throw IoError("fdd: truncated pixels");
    std::size_t k = 0;
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x)
        for (Index ch = 0; ch < c; ++ch) s.image(ch, y, x) = static_cast<unsigned char>(bytes[k++]) / 255.0;
    out.push_back(std::move(s));
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  const auto& c = data.config;
  manifest["format"] = "FDD1";
  manifest["config"] = {{"num_domains", c.num_domains},     {"num_classes", c.num_classes},
                        {"image_size", c.image_size},       {"samples_per_class", c.samples_per_class},
                        {"test_per_class", c.test_per_class}, {"val_fraction", c.val_fraction},
                        {"rho", c.rho},                     {"seed", c.seed}};
  manifest["domains"] = nlohmann::ordered_json::array();
  for (const auto& d : data.domains) {
    std::filesystem::create_directories(dir / d.name);
    const std::pair<const char*, const std::vector<Sample>*> splits[] = {
        {"train", &d.train}, {"val", &d.val}, {"test", &d.test}};
    nlohmann::ordered_json entry{{"name", d.name}};
    for (const auto& [split, samples] : splits) {
      std::ofstream out(dir / d.name / (std::string(split) + ".fdd"), std::ios::binary);
      if (!out) throw IoError("fdd: cannot write " + (dir / d.name).string());
      write_split(out, *samples);
      entry[split] = samples->size();
    }
    manifest["domains"].push_back(entry);
  }
  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw IoError("fdd: cannot write manifest");
  mf << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("fdd: missing " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("fdd: malformed manifest: ") + e.what());
  }
  Dataset data;
  try {
    const auto& c = manifest.at("config");
    data.config.num_domains = c.at("num_domains").get<int>();
    data.config.num_classes = c.at("num_classes").get<int>();
    data.config.image_size = c.at("image_size").get<int>();
    data.config.samples_per_class = c.at("samples_per_class").get<int>();
    data.config.test_per_class = c.at("test_per_class").get<int>();
    data.config.val_fraction = c.at("val_fraction").get<double>();
    data.config.rho = c.at("rho").get<double>();
    data.config.seed = c.at("seed").get<std::uint64_t>();
    int d = 0;
    for (const auto& entry : manifest.at("domains")) {
      DomainData dd;
      dd.name = entry.at("name").get<std::string>();
      for (const char* split : {"train", "val", "test"}) {
        std::ifstream in(dir / dd.name / (std::string(split) + ".fdd"), std::ios::binary);
        if (!in) throw IoError("fdd: missing split " + dd.name + "/" + split);
        auto samples = read_split(in, d);
        (std::string(split) == "train" ? dd.train : std::string(split) == "val" ? dd.val : dd.test) = std::move(samples);
      }
      data.domains.push_back(std::move(dd));
      ++d;
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("fdd: manifest field error: ") + e.what());
  }
  return data;
}

}  // namespace frontdoor::bench
