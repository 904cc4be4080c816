#include "frontdoor/config.hpp"

#include "frontdoor/errors.hpp"
#include "frontdoor/rng.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace frontdoor {

const char* method_name(Method m) {
  switch (m) {
    case Method::erm: return "erm";
    case Method::fast: return "fast";
    case Method::faft: return "faft";
    case Method::fagt: return "fagt";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "erm") return Method::erm;
  if (s == "fast") return Method::fast;
  if (s == "faft") return Method::faft;
  if (s == "fagt") return Method::fagt;
  throw ValidationError("unknown method '" + s + "' (expected erm|fast|faft|fagt)");
}

const char* sampling_name(Sampling s) { return s == Sampling::random ? "random" : "domain-balance"; }

Sampling parse_sampling(const std::string& s) {
  if (s == "random") return Sampling::random;
  if (s == "domain-balance") return Sampling::domain_balance;
  throw ValidationError("unknown sampling '" + s + "' (expected random|domain-balance)");
}

bool uses_nst(Method m) { return m == Method::fast || m == Method::fagt; }

std::uint64_t data_seed(const ExperimentConfig& c) { return stream_seed(c.seed, "data"); }
std::uint64_t nst_seed(const ExperimentConfig& c, const std::string& fold) { return stream_seed(c.seed, "nst/" + fold); }
std::uint64_t classifier_seed(const ExperimentConfig& c, const std::string& fold) {
  return stream_seed(c.seed, "classifier/" + fold);
}
std::uint64_t style_seed(const ExperimentConfig& c, const std::string& fold) {
  return stream_seed(c.seed, "styles/" + fold);
}

bench::BenchConfig dataset_config(const ExperimentConfig& c) {
  bench::BenchConfig b = c.data;
  b.seed = data_seed(c);
  return b;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ValidationError(key + ": '" + v + "' is not a number");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ValidationError(key + ": '" + v + "' is not an integer");
  }
  return out;
}

double in_range(const std::string& key, const std::string& v, double lo, double hi) {
  const double x = to_double(key, v);
  if (!(x >= lo && x <= hi)) throw ValidationError(key + " = " + v + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
  return x;
}


double nonneg(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (!(x >= 0.0)) throw ValidationError(key + " = " + v + " must be >= 0");
  return x;
}

int int_at_least(const std::string& key, const std::string& v, long long lo) {
  const long long x = to_int(key, v);
  if (x < lo || x > 1'000'000'000) throw ValidationError(key + " = " + v + " must be >= " + std::to_string(lo));
  return static_cast<int>(x);
}

struct Key {
  std::string name;
  bool style_param;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Key>& key_table() {
  using C = ExperimentConfig;
  using S = const std::string&;
  static const std::vector<Key> keys = {
      {"method", false, [](C& c, S v) { c.method = parse_method(v); }, [](const C& c) { return std::string(method_name(c.method)); }},
      {"alpha", true, [](C& c, S v) { c.alpha = in_range("alpha", v, 0, 1); }, [](const C& c) { return fmt(c.alpha); }},
      {"beta", true, [](C& c, S v) { c.beta = in_range("beta", v, 0, 1); }, [](const C& c) { return fmt(c.beta); }},
      {"eta", true, [](C& c, S v) { c.eta = in_range("eta", v, 0, 1); }, [](const C& c) { return fmt(c.eta); }},
      {"k", true, [](C& c, S v) { c.k = int_at_least("k", v, 1); }, [](const C& c) { return std::to_string(c.k); }},
      {"sampling", true, [](C& c, S v) { c.sampling = parse_sampling(v); }, [](const C& c) { return std::string(sampling_name(c.sampling)); }},
      {"lr", false, [](C& c, S v) { c.lr = nonneg("lr", v); }, [](const C& c) { return fmt(c.lr); }},
      {"momentum", false, [](C& c, S v) {
         c.momentum = to_double("momentum", v);
         if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ValidationError("momentum = " + v + " outside [0, 1)");
       }, [](const C& c) { return fmt(c.momentum); }},
      {"weight_decay", false, [](C& c, S v) { c.weight_decay = nonneg("weight_decay", v); }, [](const C& c) { return fmt(c.weight_decay); }},
      {"schedule", false, [](C& c, S v) {
         if (v == "step") c.schedule = LrSchedule::step;
         else if (v == "cosine") c.schedule = LrSchedule::cosine;
         else throw ValidationError("unknown schedule '" + v + "' (expected step|cosine)");
       }, [](const C& c) { return std::string(c.schedule == LrSchedule::step ? "step" : "cosine"); }},
      {"epochs", false, [](C& c, S v) { c.epochs = int_at_least("epochs", v, 1); }, [](const C& c) { return std::to_string(c.epochs); }},
      {"step_size", false, [](C& c, S v) { c.step_size = int_at_least("step_size", v, 1); }, [](const C& c) { return std::to_string(c.step_size); }},
      {"gamma", false, [](C& c, S v) { c.gamma = in_range("gamma", v, 0, 1); }, [](const C& c) { return fmt(c.gamma); }},
      {"batch_size", false, [](C& c, S v) { c.batch_size = int_at_least("batch_size", v, 1); }, [](const C& c) { return std::to_string(c.batch_size); }},
      {"width", false, [](C& c, S v) { c.width = int_at_least("width", v, 1); }, [](const C& c) { return std::to_string(c.width); }},
      {"eval_every", false, [](C& c, S v) { c.eval_every = int_at_least("eval_every", v, 0); }, [](const C& c) { return std::to_string(c.eval_every); }},
      {"folds", false, [](C& c, S v) {
         c.folds.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) {
           item = trim(item);
           if (!item.empty()) c.folds.push_back(item);
         }
       }, [](const C& c) {
         std::string out;
         for (std::size_t i = 0; i < c.folds.size(); ++i) out += (i ? "," : "") + c.folds[i];
         return out;
       }},
      {"rho", false, [](C& c, S v) { c.data.rho = in_range("rho", v, 0, 1); }, [](const C& c) { return fmt(c.data.rho); }},
      {"num_domains", false, [](C& c, S v) { c.data.num_domains = int_at_least("num_domains", v, 2); }, [](const C& c) { return std::to_string(c.data.num_domains); }},
      {"num_classes", false, [](C& c, S v) {
         c.data.num_classes = int_at_least("num_classes", v, 2);
         if (c.data.num_classes > bench::kNumShapes) throw ValidationError("num_classes = " + v + " outside [2, 4]");
       }, [](const C& c) { return std::to_string(c.data.num_classes); }},
      {"image_size", false, [](C& c, S v) {
         c.data.image_size = int_at_least("image_size", v, 16);
         if (c.data.image_size % 8 != 0) throw ValidationError("image_size = " + v + " must be a multiple of 8");
       }, [](const C& c) { return std::to_string(c.data.image_size); }},
      {"samples_per_class", false, [](C& c, S v) { c.data.samples_per_class = int_at_least("samples_per_class", v, 2); }, [](const C& c) { return std::to_string(c.data.samples_per_class); }},
      {"test_per_class", false, [](C& c, S v) { c.data.test_per_class = int_at_least("test_per_class", v, 1); }, [](const C& c) { return std::to_string(c.data.test_per_class); }},
      {"val_fraction", false, [](C& c, S v) {
         c.data.val_fraction = to_double("val_fraction", v);
         if (!(c.data.val_fraction > 0.0 && c.data.val_fraction < 1.0)) throw ValidationError("val_fraction = " + v + " outside (0, 1)");
       }, [](const C& c) { return fmt(c.data.val_fraction); }},
      {"nst_base_channels", false, [](C& c, S v) { c.nst_base_channels = int_at_least("nst_base_channels", v, 1); }, [](const C& c) { return std::to_string(c.nst_base_channels); }},
      {"nst_ae_epochs", false, [](C& c, S v) { c.nst.ae_epochs = int_at_least("nst_ae_epochs", v, 0); }, [](const C& c) { return std::to_string(c.nst.ae_epochs); }},
      {"nst_style_epochs", false, [](C& c, S v) { c.nst.style_epochs = int_at_least("nst_style_epochs", v, 0); }, [](const C& c) { return std::to_string(c.nst.style_epochs); }},
      {"nst_lr", false, [](C& c, S v) { c.nst.lr = nonneg("nst_lr", v); }, [](const C& c) { return fmt(c.nst.lr); }},
      {"nst_batch_size", false, [](C& c, S v) { c.nst.batch_size = int_at_least("nst_batch_size", v, 1); }, [](const C& c) { return std::to_string(c.nst.batch_size); }},
      {"nst_samples_per_epoch", false, [](C& c, S v) { c.nst.samples_per_epoch = int_at_least("nst_samples_per_epoch", v, 0); }, [](const C& c) { return std::to_string(c.nst.samples_per_epoch); }},
      {"nst_recon_weight", false, [](C& c, S v) { c.nst.recon_weight = nonneg("nst_recon_weight", v); }, [](const C& c) { return fmt(c.nst.recon_weight); }},
      {"nst_content_weight", false, [](C& c, S v) { c.nst.content_weight = nonneg("nst_content_weight", v); }, [](const C& c) { return fmt(c.nst.content_weight); }},
      {"nst_style_weight", false, [](C& c, S v) { c.nst.style_weight = nonneg("nst_style_weight", v); }, [](const C& c) { return fmt(c.nst.style_weight); }},
      {"seed", false, [](C& c, S v) {
         std::uint64_t out = 0;
         const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
         if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ValidationError("seed: '" + v + "' is not an unsigned integer");
         c.seed = out;
       }, [](const C& c) { return std::to_string(c.seed); }},
  };
  return keys;
}

const Key& find_key(const std::string& name) {
  for (const auto& k : key_table())
    if (k.name == name) return k;
  throw ValidationError("unknown key '" + name + "'");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name);
    return out;
  }();
  return names;
}

void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  find_key(key).set(c, value);
  c.explicit_keys.insert(key);
}

void validate_config(const ExperimentConfig& c) {
  if (c.method == Method::erm) {
    for (const auto& k : key_table()) {
      if (k.style_param && c.explicit_keys.count(k.name)) {
        throw ValidationError("method = erm forbids style parameter '" + k.name + "'");
      }
    }
  }
  if (c.data.image_size % 8 != 0) throw ValidationError("image_size must be a multiple of 8");
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig c;
  std::map<std::string, int> lines;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ValidationError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (lines.count(key)) throw ValidationError(where + "duplicate key '" + key + "'");
    try {
      set_config_value(c, key, value);
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    lines[key] = lineno;
  }
  try {
    validate_config(c);
  } catch (const ValidationError& e) {
    int first = 0;
    if (c.method == Method::erm) {
      for (const auto& k : key_table())
        if (k.style_param && lines.count(k.name) && (first == 0 || lines[k.name] < first)) first = lines[k.name];
    }
    throw ValidationError(source + ":" + std::to_string(first) + ": " + e.what());
  }
  return c;
}

ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  return parse_config(in, path.string());
}

std::string echo_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& k : key_table()) {
    if (c.method == Method::erm && k.style_param) continue;
    out += k.name + " = " + k.get(c) + "\n";
  }
  return out;
}

}  // namespace frontdoor
