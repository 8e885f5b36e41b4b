#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "subnet_walk/stats.hpp"

namespace subnet_walk::harness {

/// One CSV artifact. Cells are stored pre-formatted; an empty cell means the
/// value is absent.
struct Table {
  std::string file_name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

/// One standalone JSON artifact.
struct Document {
  std::string file_name;
  nlohmann::json body;
};

struct ExperimentReport {
  std::string experiment_id;
  std::string claim;
  std::map<std::string, std::string> config_echo;
  std::vector<nlohmann::json> per_seed;  // one metric object per seed
  std::map<std::string, SeedAggregate> aggregates;
  bool pass = false;
  std::vector<std::string> notes;
  std::vector<std::string> artifacts;  // relative to the output directory

  std::vector<Table> tables;
  std::vector<Document> documents;
};

enum class Format { Csv, Json };

std::set<Format> parse_formats(const std::string& list);

/// Fixed-width text for a real: 17 significant digits.
std::string format_real(double v);
std::string format_optional(const std::optional<double>& v);

/// Header line of each CSV artifact type, in the documented column order.
namespace columns {
inline const std::vector<std::string> kContribution = {"mask", "train_loss", "test_loss", "score"};
inline const std::vector<std::string> kResistance = {"node_i", "node_j", "rho", "score_gap"};
inline const std::vector<std::string> kSweep = {"width",          "depth",    "d",   "n_sampled",
                                                "n_generalizing", "fraction", "seed"};
}  // namespace columns

nlohmann::json to_json(const SeedAggregate& a);
SeedAggregate aggregate_from_json(const nlohmann::json& j);

/// Report as a JSON document (keys sorted). The "metadata" member holds the
/// only run-dependent values (timestamp, host).
nlohmann::json to_json(const ExperimentReport& report, bool with_metadata = true);

/// Writes the requested artifacts into `out_dir` and returns their paths.
/// JSON emission writes report.json plus every Document; CSV emission writes
/// every Table. `report.artifacts` is filled in before report.json is written.
std::vector<std::filesystem::path> emit_report(ExperimentReport& report,
                                               const std::filesystem::path& out_dir,
                                               const std::set<Format>& formats);

std::string csv_text(const Table& table);

}  // namespace subnet_walk::harness
