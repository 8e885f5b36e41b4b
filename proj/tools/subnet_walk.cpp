// subnet-walk: runs experiments and writes their reports.
//
// Exit status: 0 when every requested experiment passes, 1 when any fails,
// 2 on a usage, configuration or I/O error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "subnet_walk/error.hpp"
#include "subnet_walk/harness/config.hpp"
#include "subnet_walk/harness/experiments.hpp"
#include "subnet_walk/harness/report.hpp"

namespace sw = subnet_walk;
namespace h = subnet_walk::harness;

namespace {

std::vector<h::ExperimentId> parse_ids(const std::string& list) {
  if (list == "all") return h::all_experiments();
  std::vector<h::ExperimentId> ids;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) ids.push_back(h::parse_experiment_id(item));
  if (ids.empty()) throw sw::UsageError("no experiment id given");
  return ids;
}

// With several experiments sharing one config, each gets only the keys its
// schema accepts. A key no requested experiment accepts is still an error.
h::RawConfig restrict_to(const h::RawConfig& raw, h::ExperimentId id) {
  const auto keys = h::config_keys(id);
  h::RawConfig out;
  for (const auto& [k, v] : raw.entries())
    if (std::find(keys.begin(), keys.end(), k) != keys.end()) out.set(k, v);
  return out;
}

void check_known(const h::RawConfig& raw, const std::vector<h::ExperimentId>& ids) {
  for (const auto& [k, v] : raw.entries()) {
    bool known = false;
    for (auto id : ids) {
      const auto keys = h::config_keys(id);
      known = known || std::find(keys.begin(), keys.end(), k) != keys.end();
    }
    if (!known) throw sw::ConfigError(k, "key is not accepted by any requested experiment");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dropout subnetwork experiments"};
  std::string id_list, config_path, out_dir, seeds, formats = "csv,json", images, labels;
  std::vector<std::string> overrides;
  app.add_option("experiment", id_list, "experiment id, comma-separated ids, or 'all'")
      ->required();
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--out", out_dir, "output directory; each experiment writes to <out>/<id>/")
      ->required();
  app.add_option("--seeds", seeds, "comma-separated seeds (default 0,1,2,3,4)");
  app.add_option("--format", formats, "csv, json or csv,json");
  auto* img = app.add_option("--mnist-images", images, "IDX image file");
  auto* lab = app.add_option("--mnist-labels", labels, "IDX label file");
  img->needs(lab);
  lab->needs(img);
  app.add_option("--set", overrides, "override one config key (key=value), repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto ids = parse_ids(id_list);
    const auto fmt = h::parse_formats(formats);
    h::RawConfig raw = config_path.empty() ? h::RawConfig{} : h::RawConfig::load(config_path);
    if (!seeds.empty()) raw.set("seeds", seeds);
    if (!images.empty()) {
      raw.set("mnist_images", images);
      raw.set("mnist_labels", labels);
    }
    for (const auto& o : overrides) raw.set_assignment(o);

    std::vector<h::ExperimentConfig> configs;
    if (ids.size() == 1) {
      configs.push_back(h::resolve_config(ids.front(), raw));
    } else {
      check_known(raw, ids);
      for (auto id : ids) configs.push_back(h::resolve_config(id, restrict_to(raw, id)));
    }

    bool all_pass = true;
    for (const auto& cfg : configs) {
      const auto name = h::to_string(cfg.id);
      const auto report = h::run_experiment(cfg, std::filesystem::path(out_dir) / name, fmt);
      std::printf("%-12s %s\n", name.c_str(), report.pass ? "PASS" : "FAIL");
      all_pass = all_pass && report.pass;
    }
    return all_pass ? 0 : 1;
  } catch (const sw::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
  } catch (const sw::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
  } catch (const sw::IoError& e) {
    std::fprintf(stderr, "i/o error [%s]: %s\n", e.path().c_str(), e.what());
  } catch (const sw::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
  }
  return 2;
}
