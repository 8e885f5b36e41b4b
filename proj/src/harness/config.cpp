#include "subnet_walk/harness/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "subnet_walk/error.hpp"

namespace subnet_walk::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Parse failures throw std::invalid_argument; resolve_config attaches the
// field path.
double parse_real(const std::string& s) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
    throw std::invalid_argument("expected a finite real number, got \"" + s + "\"");
  return v;
}

long long parse_int(const std::string& s) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw std::invalid_argument("expected an integer, got \"" + s + "\"");
  return v;
}

int parse_int_in(const std::string& s, long long lo, long long hi) {
  const long long v = parse_int(s);
  if (v < lo || v > hi)
    throw std::invalid_argument("value " + s + " outside [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "]");
  return static_cast<int>(v);
}

std::vector<int> parse_int_list(const std::string& s, long long lo, bool allow_empty = false) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(parse_int_in(item, lo, 1 << 20));
  if (out.empty() && !allow_empty) throw std::invalid_argument("expected a non-empty list");
  return out;
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += fmt_real(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

struct Key {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> parse;
  std::function<std::string(const ExperimentConfig&)> format;
};

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      {"seeds",
       [](ExperimentConfig& c, const std::string& s) {
         c.seeds.clear();
         for (const auto& item : split_list(s)) {
           const long long v = parse_int(item);
           if (v < 0) throw std::invalid_argument("seeds must be non-negative");
           c.seeds.push_back(static_cast<std::uint64_t>(v));
         }
         if (c.seeds.empty()) throw std::invalid_argument("expected at least one seed");
       },
       [](const ExperimentConfig& c) { return join(c.seeds); }},
      {"retain_p",
       [](ExperimentConfig& c, const std::string& s) {
         c.retain_p = parse_real(s);
         if (!(c.retain_p > 0.0 && c.retain_p <= 1.0))
           throw std::invalid_argument("retain_p must lie in (0, 1]");
       },
       [](const ExperimentConfig& c) { return fmt_real(c.retain_p); }},
      {"eps", [](ExperimentConfig& c, const std::string& s) { c.eps = parse_real(s); },
       [](const ExperimentConfig& c) { return fmt_real(c.eps); }},
      {"learning_rate",
       [](ExperimentConfig& c, const std::string& s) {
         c.learning_rate = parse_real(s);
         if (!(c.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
       },
       [](const ExperimentConfig& c) { return fmt_real(c.learning_rate); }},
      {"batch_size",
       [](ExperimentConfig& c, const std::string& s) { c.batch_size = parse_int_in(s, 1, 1 << 24); },
       [](const ExperimentConfig& c) { return std::to_string(c.batch_size); }},
      {"epochs",
       [](ExperimentConfig& c, const std::string& s) { c.epochs = parse_int_in(s, 0, 100000); },
       [](const ExperimentConfig& c) { return std::to_string(c.epochs); }},
      {"hidden",
       [](ExperimentConfig& c, const std::string& s) { c.hidden = parse_int_list(s, 1, true); },
       [](const ExperimentConfig& c) { return join(c.hidden); }},
      {"activation",
       [](ExperimentConfig& c, const std::string& s) {
         if (s == "linear")
           c.activation = Activation::Linear;
         else if (s == "rectified" || s == "relu")
           c.activation = Activation::Rectified;
         else
           throw std::invalid_argument("expected linear or rectified, got \"" + s + "\"");
       },
       [](const ExperimentConfig& c) {
         return std::string(c.activation == Activation::Linear ? "linear" : "rectified");
       }},
      {"loss",
       [](ExperimentConfig& c, const std::string& s) {
         if (s == "cross_entropy")
           c.loss = LossKind::CrossEntropy;
         else if (s == "squared_error")
           c.loss = LossKind::SquaredError;
         else
           throw std::invalid_argument("expected cross_entropy or squared_error");
       },
       [](const ExperimentConfig& c) {
         return std::string(c.loss == LossKind::CrossEntropy ? "cross_entropy" : "squared_error");
       }},
      {"n_per_class",
       [](ExperimentConfig& c, const std::string& s) { c.n_per_class = parse_int_in(s, 1, 1 << 24); },
       [](const ExperimentConfig& c) { return std::to_string(c.n_per_class); }},
      {"num_classes",
       [](ExperimentConfig& c, const std::string& s) { c.num_classes = parse_int_in(s, 2, 1 << 16); },
       [](const ExperimentConfig& c) { return std::to_string(c.num_classes); }},
      {"dim", [](ExperimentConfig& c, const std::string& s) { c.dim = parse_int_in(s, 1, 1 << 20); },
       [](const ExperimentConfig& c) { return std::to_string(c.dim); }},
      {"separation",
       [](ExperimentConfig& c, const std::string& s) {
         c.separation = parse_real(s);
         if (!(c.separation > 0.0)) throw std::invalid_argument("separation must be > 0");
       },
       [](const ExperimentConfig& c) { return fmt_real(c.separation); }},
      {"label_noise",
       [](ExperimentConfig& c, const std::string& s) {
         c.label_noise = parse_real(s);
         if (!(c.label_noise >= 0.0 && c.label_noise <= 1.0))
           throw std::invalid_argument("label_noise must lie in [0, 1]");
       },
       [](const ExperimentConfig& c) { return fmt_real(c.label_noise); }},
      {"mnist_images", [](ExperimentConfig& c, const std::string& s) { c.mnist_images = s; },
       [](const ExperimentConfig& c) { return c.mnist_images; }},
      {"mnist_labels", [](ExperimentConfig& c, const std::string& s) { c.mnist_labels = s; },
       [](const ExperimentConfig& c) { return c.mnist_labels; }},
      {"mnist_limit",
       [](ExperimentConfig& c, const std::string& s) { c.mnist_limit = parse_int_in(s, 2, 1 << 24); },
       [](const ExperimentConfig& c) { return std::to_string(c.mnist_limit); }},
      {"n_masks",
       [](ExperimentConfig& c, const std::string& s) { c.n_masks = parse_int_in(s, 1, 1 << 24); },
       [](const ExperimentConfig& c) { return std::to_string(c.n_masks); }},
      {"masks_large",
       [](ExperimentConfig& c, const std::string& s) { c.masks_large = parse_int_in(s, 1, 1 << 24); },
       [](const ExperimentConfig& c) { return std::to_string(c.masks_large); }},
      {"exact_layers",
       [](ExperimentConfig& c, const std::string& s) {
         c.exact_layers = parse_int_list(s, 1);
         if (c.exact_layers.size() < 2) throw std::invalid_argument("need at least two layer sizes");
       },
       [](const ExperimentConfig& c) { return join(c.exact_layers); }},
      {"d", [](ExperimentConfig& c, const std::string& s) { c.d = parse_int_in(s, 1, 1 << 26); },
       [](const ExperimentConfig& c) { return std::to_string(c.d); }},
      {"n_inputs",
       [](ExperimentConfig& c, const std::string& s) { c.n_inputs = parse_int_in(s, 1, 1 << 24); },
       [](const ExperimentConfig& c) { return std::to_string(c.n_inputs); }},
      {"delta",
       [](ExperimentConfig& c, const std::string& s) {
         c.delta = parse_real(s);
         if (!(c.delta > 0.0 && c.delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
       },
       [](const ExperimentConfig& c) { return fmt_real(c.delta); }},
      {"prior",
       [](ExperimentConfig& c, const std::string& s) {
         if (s == "bernoulli_p")
           c.prior = PriorKind::BernoulliP;
         else if (s == "uniform")
           c.prior = PriorKind::Uniform;
         else
           throw std::invalid_argument("expected bernoulli_p or uniform");
       },
       [](const ExperimentConfig& c) {
         return std::string(c.prior == PriorKind::BernoulliP ? "bernoulli_p" : "uniform");
       }},
      {"flip_bits",
       [](ExperimentConfig& c, const std::string& s) {
         if (s != "1" && s != "2" && s != "1-2")
           throw std::invalid_argument("expected 1, 2 or 1-2");
         c.flip_bits = s;
       },
       [](const ExperimentConfig& c) { return c.flip_bits; }},
      {"n_neighbors",
       [](ExperimentConfig& c, const std::string& s) { c.n_neighbors = parse_int_in(s, 1, 1 << 16); },
       [](const ExperimentConfig& c) { return std::to_string(c.n_neighbors); }},
      {"r_neighbors",
       [](ExperimentConfig& c, const std::string& s) { c.r_neighbors = parse_int_in(s, 1, 1 << 16); },
       [](const ExperimentConfig& c) { return std::to_string(c.r_neighbors); }},
      {"eps_grid",
       [](ExperimentConfig& c, const std::string& s) {
         c.eps_grid.clear();
         for (const auto& item : split_list(s)) c.eps_grid.push_back(parse_real(item));
         if (c.eps_grid.empty()) throw std::invalid_argument("expected a non-empty list");
         if (!std::is_sorted(c.eps_grid.begin(), c.eps_grid.end()))
           throw std::invalid_argument("eps_grid must be ascending");
       },
       [](const ExperimentConfig& c) { return join(c.eps_grid); }},
      {"widths",
       [](ExperimentConfig& c, const std::string& s) { c.widths = parse_int_list(s, 1); },
       [](const ExperimentConfig& c) { return join(c.widths); }},
      {"depths",
       [](ExperimentConfig& c, const std::string& s) { c.depths = parse_int_list(s, 0); },
       [](const ExperimentConfig& c) { return join(c.depths); }},
      {"max_pairs",
       [](ExperimentConfig& c, const std::string& s) { c.max_pairs = parse_int_in(s, 3, 1 << 24); },
       [](const ExperimentConfig& c) { return std::to_string(c.max_pairs); }},
  };
  return keys;
}

const Key& find_key(const std::string& name) {
  for (const auto& k : key_table())
    if (k.name == name) return k;
  throw std::logic_error("unknown schema key " + name);
}

const std::vector<std::string> kTrainingKeys = {
    "learning_rate", "batch_size", "epochs",     "hidden",       "activation",
    "loss",          "n_per_class", "num_classes", "dim",        "separation",
    "label_noise",   "mnist_images", "mnist_labels", "mnist_limit"};

std::vector<std::string> with_training(std::vector<std::string> keys) {
  keys.insert(keys.end(), kTrainingKeys.begin(), kTrainingKeys.end());
  return keys;
}

void apply_defaults(ExperimentConfig& c) {
  switch (c.id) {
    case ExperimentId::Lemma1:
      // The gap is measured in output units, so the input scale stays small.
      c.activation = Activation::Linear;
      c.n_per_class = 500;
      c.separation = 4.0;
      c.n_masks = 1000;
      break;
    case ExperimentId::Lemma2:
      c.n_masks = 10000;
      break;
    case ExperimentId::Theorem1:
      c.activation = Activation::Linear;
      c.n_masks = 1000;
      break;
    case ExperimentId::Theorem2:
      c.n_masks = 1000;
      break;
    case ExperimentId::Theorem3:
    case ExperimentId::Corollary31:
    case ExperimentId::Theorem5:
      c.n_neighbors = 100;
      break;
    case ExperimentId::Lemma3:
      c.label_noise = 0.1;
      c.num_classes = 3;
      c.n_per_class = 500;
      c.separation = 3.0;
      c.n_masks = 100;
      break;
    case ExperimentId::Theorem4:
      c.n_masks = 200;
      break;
    case ExperimentId::Theorem6:
      // Width-4 cells need the larger sample to resolve scores against eps.
      c.n_per_class = 8000;
      c.n_masks = 200;
      break;
  }
}

}  // namespace

const std::vector<ExperimentId>& all_experiments() {
  static const std::vector<ExperimentId> ids = {
      ExperimentId::Lemma1,   ExperimentId::Lemma2,      ExperimentId::Theorem1,
      ExperimentId::Theorem2, ExperimentId::Theorem3,    ExperimentId::Corollary31,
      ExperimentId::Lemma3,   ExperimentId::Theorem4,    ExperimentId::Theorem5,
      ExperimentId::Theorem6};
  return ids;
}

std::string to_string(ExperimentId id) {
  switch (id) {
    case ExperimentId::Lemma1: return "lemma1";
    case ExperimentId::Lemma2: return "lemma2";
    case ExperimentId::Theorem1: return "theorem1";
    case ExperimentId::Theorem2: return "theorem2";
    case ExperimentId::Theorem3: return "theorem3";
    case ExperimentId::Corollary31: return "corollary31";
    case ExperimentId::Lemma3: return "lemma3";
    case ExperimentId::Theorem4: return "theorem4";
    case ExperimentId::Theorem5: return "theorem5";
    case ExperimentId::Theorem6: return "theorem6";
  }
  return "unknown";
}

ExperimentId parse_experiment_id(std::string_view name) {
  for (auto id : all_experiments())
    if (to_string(id) == name) return id;
  std::string valid;
  for (auto id : all_experiments()) valid += (valid.empty() ? "" : ", ") + to_string(id);
  throw UsageError("unknown experiment id \"" + std::string(name) + "\"; valid ids: " + valid);
}

RawConfig RawConfig::parse(std::string_view text, std::string_view origin) {
  RawConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no),
                        "expected \"key = value\"");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty())
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no), "empty key");
    cfg.entries_[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return cfg;
}

RawConfig RawConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void RawConfig::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw UsageError("override must look like key=value: " + std::string(assignment));
  entries_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::vector<std::string> config_keys(ExperimentId id) {
  switch (id) {
    case ExperimentId::Lemma2:
      return {"seeds", "retain_p", "d", "n_masks"};
    case ExperimentId::Lemma1:
      return with_training({"seeds", "retain_p", "n_masks", "masks_large", "exact_layers"});
    case ExperimentId::Theorem1:
      return with_training({"seeds", "retain_p", "n_masks"});
    case ExperimentId::Theorem2:
      return with_training({"seeds", "retain_p", "eps", "n_masks", "r_neighbors", "eps_grid"});
    case ExperimentId::Theorem3:
    case ExperimentId::Corollary31:
      return with_training({"seeds", "retain_p", "eps", "n_neighbors", "flip_bits"});
    case ExperimentId::Lemma3:
      return with_training({"seeds", "retain_p", "n_masks", "n_inputs"});
    case ExperimentId::Theorem4:
      return with_training({"seeds", "retain_p", "n_masks", "delta", "prior"});
    case ExperimentId::Theorem5:
      return with_training({"seeds", "retain_p", "n_neighbors", "flip_bits", "max_pairs"});
    case ExperimentId::Theorem6:
      return with_training({"seeds", "retain_p", "eps", "n_masks", "widths", "depths"});
  }
  return {};
}

ExperimentConfig resolve_config(ExperimentId id, const RawConfig& raw) {
  ExperimentConfig cfg;
  cfg.id = id;
  apply_defaults(cfg);
  const auto keys = config_keys(id);
  const std::string prefix = to_string(id) + ".";
  // IDX runs default to a single 64-unit hidden layer unless set explicitly.
  if (raw.entries().count("mnist_images") && !raw.entries().count("hidden")) cfg.hidden = {64};
  for (const auto& [key, value] : raw.entries()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError(prefix + key, "unknown key for this experiment");
    try {
      find_key(key).parse(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(prefix + key, e.what());
    }
  }
  if (cfg.uses_mnist() != !cfg.mnist_labels.empty())
    throw ConfigError(prefix + "mnist_labels", "IDX images and labels must be given together");
  if (id == ExperimentId::Lemma1 && cfg.activation != Activation::Linear)
    throw ConfigError(prefix + "activation",
                      "the mask-average identity holds only for linear activations");
  if (id == ExperimentId::Lemma1 && cfg.masks_large <= cfg.n_masks)
    throw ConfigError(prefix + "masks_large", "must exceed n_masks");
  return cfg;
}

std::map<std::string, std::string> echo_config(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& key : config_keys(cfg.id)) out[key] = find_key(key).format(cfg);
  return out;
}

TrainConfig ExperimentConfig::train_config(std::uint64_t seed) const {
  TrainConfig t;
  t.learning_rate = learning_rate;
  t.batch_size = batch_size;
  t.epochs = epochs;
  t.retain_p = retain_p;
  t.seed = seed;
  t.loss = loss;
  return t;
}

}  // namespace subnet_walk::harness
