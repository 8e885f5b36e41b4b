#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "subnet_walk/error.hpp"
#include "subnet_walk/harness/experiments.hpp"

using namespace subnet_walk;
using namespace subnet_walk::harness;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("subnet_walk_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig config(ExperimentId id, std::initializer_list<std::pair<const char*, const char*>> kv) {
  RawConfig raw;
  for (const auto& [k, v] : kv) raw.set(k, v);
  return resolve_config(id, raw);
}

// Small enough to run in a few seconds.
ExperimentConfig small_theorem3() {
  return config(ExperimentId::Theorem3,
                {{"seeds", "0,1"}, {"n_per_class", "200"}, {"epochs", "3"}, {"n_neighbors", "20"}});
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SUBNET_WALK_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config documents parse") {
  const auto raw = RawConfig::parse("# comment\n\nseeds = 1, 2\n d=50 \nd = 60\n");
  CHECK(raw.entries().at("seeds") == "1, 2");
  CHECK(raw.entries().at("d") == "60");
  const auto cfg = resolve_config(ExperimentId::Lemma2, raw);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(cfg.d == 60);
  CHECK(cfg.n_masks == 10000);
  CHECK_THROWS_AS(RawConfig::parse("no equals sign"), ConfigError);

  RawConfig over = raw;
  over.set_assignment("d = 7");
  CHECK(resolve_config(ExperimentId::Lemma2, over).d == 7);
  CHECK_THROWS_AS(over.set_assignment("novalue"), UsageError);
}

TEST_CASE("schema violations name the field") {
  try {
    config(ExperimentId::Lemma2, {{"hidden", "8"}});
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "lemma2.hidden");
  }
  try {
    config(ExperimentId::Theorem2, {{"retain_p", "1.5"}});
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "theorem2.retain_p");
  }
  try {
    config(ExperimentId::Lemma1, {{"activation", "rectified"}});
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "lemma1.activation");
  }
  CHECK_THROWS_AS(config(ExperimentId::Theorem6, {{"widths", "4,x"}}), ConfigError);
  CHECK_THROWS_AS(config(ExperimentId::Lemma1, {{"mnist_images", "a"}}), ConfigError);
}

TEST_CASE("experiment ids") {
  for (auto id : all_experiments()) CHECK(parse_experiment_id(to_string(id)) == id);
  try {
    parse_experiment_id("theorem9");
    FAIL("expected a usage error");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    for (auto id : all_experiments()) CHECK(msg.find(to_string(id)) != std::string::npos);
  }
}

TEST_CASE("config echo round-trips through the parser") {
  for (auto id : all_experiments()) {
    const auto cfg = resolve_config(id, RawConfig{});
    RawConfig raw;
    for (const auto& [k, v] : echo_config(cfg)) raw.set(k, v);
    CHECK(echo_config(resolve_config(id, raw)) == echo_config(cfg));
  }
}

TEST_CASE("lemma2 passes with defaults") {
  const auto report = run_experiment(resolve_config(ExperimentId::Lemma2, RawConfig{}));
  CHECK(report.pass);
  CHECK(report.per_seed.size() == 5);
  CHECK(report.aggregates.at("rel_error").mean < 0.01);
  CHECK(report.experiment_id == "lemma2");
  CHECK_FALSE(report.claim.empty());
}

TEST_CASE("aggregate JSON round trip") {
  const std::vector<double> v{0.1, 0.25, 1.0 / 3.0};
  const auto a = aggregate_seeds(v);
  const auto b = aggregate_from_json(json::parse(to_json(a).dump()));
  CHECK(b.values == a.values);
  CHECK(b.mean == a.mean);
  CHECK(b.std == a.std);
  CHECK(b.ci95 == a.ci95);
  const auto single = aggregate_from_json(to_json(aggregate_seeds(std::vector<double>{2.0})));
  CHECK_FALSE(single.std);
}

TEST_CASE("format helpers") {
  CHECK(format_real(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_real(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_optional(std::nullopt).empty());
  CHECK(parse_formats("csv,json") == std::set<Format>{Format::Csv, Format::Json});
  CHECK(parse_formats("json") == std::set<Format>{Format::Json});
  CHECK_THROWS_AS(parse_formats("xml"), UsageError);
  CHECK_THROWS_AS(parse_formats(""), UsageError);
  const Table t{"x.csv", {"a", "b"}, {{"1", ""}, {"2", "3"}}};
  CHECK(csv_text(t) == "a,b\n1,\n2,3\n");
}

TEST_CASE("emitted reports") {
  TempDir dir("emit");
  auto cfg = small_theorem3();
  const auto report = run_experiment(cfg, dir.path, {Format::Csv, Format::Json});

  const auto j = json::parse(slurp(dir.path / "report.json"));
  CHECK(j.at("experiment_id") == "theorem3");
  CHECK(j.at("pass").get<bool>() == report.pass);
  CHECK(j.at("per_seed").size() == 2);
  CHECK(j.contains("metadata"));
  auto without_meta = j;
  without_meta.erase("metadata");
  CHECK(without_meta == json::parse(to_json(report, false).dump()));
  CHECK(j.at("per_seed") == json(report.per_seed));
  CHECK(j.at("claim") == report.claim);

  // Aggregates recomputed from per-seed values.
  for (const auto& [name, agg] : j.at("aggregates").items()) {
    std::vector<double> values;
    for (const auto& m : j.at("per_seed"))
      if (m.contains(name) && m[name].is_number()) values.push_back(m[name].get<double>());
    const auto again = aggregate_seeds(values);
    const auto stored = aggregate_from_json(agg);
    CHECK(std::abs(again.mean - stored.mean) <= 1e-12 * std::max(1.0, std::abs(again.mean)));
    if (again.std) CHECK(std::abs(*again.std - *stored.std) <= 1e-12 * std::max(1.0, *again.std));
  }

  for (const auto& a : j.at("artifacts")) CHECK(fs::exists(dir.path / a.get<std::string>()));
  const auto contributions = slurp(dir.path / "contributions_seed0.csv");
  CHECK(contributions.rfind("mask,train_loss,test_loss,score\n", 0) == 0);
  CHECK(contributions.find("\nd=") != std::string::npos);
  const auto energy = json::parse(slurp(dir.path / "energy_seed1.json"));
  for (const char* k : {"raw", "per_edge", "n_nodes", "n_edges"}) CHECK(energy.contains(k));

  TempDir json_only("emit_json");
  run_experiment(cfg, json_only.path, {Format::Json});
  CHECK(fs::exists(json_only.path / "report.json"));
  CHECK_FALSE(fs::exists(json_only.path / "contributions_seed0.csv"));
}

TEST_CASE("artifact headers per type") {
  TempDir dir("headers");
  run_experiment(config(ExperimentId::Theorem5, {{"seeds", "0"}, {"n_per_class", "200"},
                                                 {"epochs", "2"}, {"n_neighbors", "10"}}),
                 dir.path, {Format::Csv});
  CHECK(slurp(dir.path / "resistance_seed0.csv").rfind("node_i,node_j,rho,score_gap\n", 0) == 0);
  run_experiment(config(ExperimentId::Theorem6, {{"seeds", "0"}, {"n_per_class", "50"},
                                                 {"epochs", "1"}, {"n_masks", "2"},
                                                 {"widths", "2"}, {"depths", "1"}}),
                 dir.path, {Format::Csv});
  CHECK(slurp(dir.path / "sweep_seed0.csv")
            .rfind("width,depth,d,n_sampled,n_generalizing,fraction,seed\n", 0) == 0);
}

TEST_CASE("reruns are byte-identical outside metadata") {
  TempDir a("det_a"), b("det_b");
  const auto cfg = small_theorem3();
  run_experiment(cfg, a.path, {Format::Csv, Format::Json});
  run_experiment(cfg, b.path, {Format::Csv, Format::Json});
  auto ja = json::parse(slurp(a.path / "report.json"));
  auto jb = json::parse(slurp(b.path / "report.json"));
  ja.erase("metadata");
  jb.erase("metadata");
  CHECK(ja.dump() == jb.dump());
  for (const auto& entry : fs::directory_iterator(a.path)) {
    if (entry.path().filename() == "report.json") continue;
    CHECK(slurp(entry.path()) == slurp(b.path / entry.path().filename()));
  }
}

TEST_CASE("seed concurrency does not change results") {
  const auto cfg = small_theorem3();
  ::setenv("SUBNET_WALK_THREADS", "1", 1);
  CHECK(worker_threads() == 1);
  const auto serial = to_json(run_experiment(cfg), false);
  ::setenv("SUBNET_WALK_THREADS", "2", 1);
  CHECK(worker_threads() == 2);
  const auto parallel = to_json(run_experiment(cfg), false);
  ::unsetenv("SUBNET_WALK_THREADS");
  CHECK(serial.dump() == parallel.dump());
}

TEST_CASE("training divergence is recorded per seed") {
  const auto report = run_experiment(config(
      ExperimentId::Theorem1,
      {{"seeds", "0"}, {"n_per_class", "50"}, {"learning_rate", "1e8"}, {"n_masks", "5"}}));
  CHECK_FALSE(report.pass);
  REQUIRE(report.per_seed.size() == 1);
  CHECK(report.per_seed[0].contains("training_error"));
  CHECK(report.per_seed[0]["pass"] == false);
}

TEST_CASE("command line exit codes") {
  TempDir dir("cli");
  const std::string out = " --out " + dir.path.string();
  CHECK(run_cli("lemma2 --seeds 0 --set n_masks=2000" + out) == 0);
  CHECK(fs::exists(dir.path / "lemma2" / "report.json"));
  CHECK(run_cli("theorem2 --seeds 0 --set eps=-1 --set n_per_class=50 --set epochs=1 "
                "--set n_masks=5 --set r_neighbors=1" + out) == 1);
  CHECK(run_cli("lemma2 --set bogus=1" + out) == 2);
  CHECK(run_cli("nonsense" + out) == 2);
  CHECK(run_cli("lemma2 --mnist-images x" + out) == 2);
  CHECK(run_cli("lemma2") == 2);

  {
    std::ofstream cfg(dir.path / "c.cfg");
    cfg << "d = 200\nn_masks = 3000\n";
  }
  CHECK(run_cli("lemma2 --seeds 1 --config " + (dir.path / "c.cfg").string() + out) == 0);
  const auto echo = json::parse(slurp(dir.path / "lemma2" / "report.json")).at("config");
  CHECK(echo.at("d") == "200");
  CHECK(echo.at("seeds") == "1");
  CHECK(run_cli("lemma2 --config " + (dir.path / "missing.cfg").string() + out) == 2);

  {
    std::ofstream blocker(dir.path / "file");
  }
  CHECK(run_cli("lemma2 --seeds 0 --out " + (dir.path / "file").string()) == 2);
}
