#include "subnet_walk/harness/report.hpp"

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "subnet_walk/error.hpp"

namespace subnet_walk::harness {

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string host_name() {
  char buf[256] = {};
  if (gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace

std::set<Format> parse_formats(const std::string& list) {
  std::set<Format> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "csv")
      out.insert(Format::Csv);
    else if (item == "json")
      out.insert(Format::Json);
    else if (!item.empty())
      throw UsageError("unknown format \"" + item + "\" (expected csv and/or json)");
  }
  if (out.empty()) throw UsageError("at least one output format is required");
  return out;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

nlohmann::json to_json(const SeedAggregate& a) {
  nlohmann::json j;
  j["values"] = a.values;
  j["mean"] = a.mean;
  j["std"] = a.std ? nlohmann::json(*a.std) : nlohmann::json(nullptr);
  j["ci95"] = a.ci95 ? nlohmann::json(*a.ci95) : nlohmann::json(nullptr);
  return j;
}

SeedAggregate aggregate_from_json(const nlohmann::json& j) {
  SeedAggregate a;
  a.values = j.at("values").get<std::vector<double>>();
  a.mean = j.at("mean").get<double>();
  if (!j.at("std").is_null()) a.std = j.at("std").get<double>();
  if (!j.at("ci95").is_null()) a.ci95 = j.at("ci95").get<double>();
  return a;
}

nlohmann::json to_json(const ExperimentReport& report, bool with_metadata) {
  nlohmann::json j;
  j["experiment_id"] = report.experiment_id;
  j["claim"] = report.claim;
  j["config"] = report.config_echo;
  j["per_seed"] = report.per_seed;
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& [name, a] : report.aggregates) agg[name] = to_json(a);
  j["aggregates"] = agg;
  j["pass"] = report.pass;
  j["notes"] = report.notes;
  j["artifacts"] = report.artifacts;
  if (with_metadata) j["metadata"] = {{"generated_at", utc_timestamp()}, {"host", host_name()}};
  return j;
}

std::string csv_text(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c)
    out += (c ? "," : "") + csv_escape(table.columns[c]);
  out += "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size())
      throw ShapeError("CSV row width does not match header of " + table.file_name);
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + csv_escape(row[c]);
    out += "\n";
  }
  return out;
}

std::vector<std::filesystem::path> emit_report(ExperimentReport& report,
                                               const std::filesystem::path& out_dir,
                                               const std::set<Format>& formats) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string(), "cannot create output directory: " + ec.message());

  const bool csv = formats.count(Format::Csv) > 0;
  const bool json = formats.count(Format::Json) > 0;
  report.artifacts.clear();
  if (csv)
    for (const auto& t : report.tables) report.artifacts.push_back(t.file_name);
  if (json) {
    for (const auto& d : report.documents) report.artifacts.push_back(d.file_name);
    report.artifacts.push_back("report.json");
  }

  std::vector<std::filesystem::path> written;
  if (csv)
    for (const auto& t : report.tables) {
      write_file(out_dir / t.file_name, csv_text(t));
      written.push_back(out_dir / t.file_name);
    }
  if (json) {
    for (const auto& d : report.documents) {
      write_file(out_dir / d.file_name, d.body.dump(2) + "\n");
      written.push_back(out_dir / d.file_name);
    }
    write_file(out_dir / "report.json", to_json(report).dump(2) + "\n");
    written.push_back(out_dir / "report.json");
  }
  return written;
}

}  // namespace subnet_walk::harness
