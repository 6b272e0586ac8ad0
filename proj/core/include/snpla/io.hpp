#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "snpla/flows.hpp"
#include "snpla/inference.hpp"

namespace snpla::io {

/// Config validation failure; `field_path` points at the offending entry
/// (e.g. "snpla.rounds").
struct ConfigError : std::runtime_error {
  ConfigError(std::string path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), field_path(std::move(path)) {}
  std::string field_path;
};

/// One experiment x one method, plus run bookkeeping.
struct ExperimentConfig {
  std::string experiment;  // mvg_five | mvg_summary | mvg_learned | two_moons | lotka_volterra
  std::string method;      // snpla | snl | smcabc
  int n_seeds = 1;
  std::uint64_t data_seed = 0;
  std::string output_dir = "out";
  bool two_moons_radial_first = true;

  inference::SnplaConfig snpla;
  inference::SnlConfig snl;
  inference::SmcAbcConfig smcabc;
};

inline const std::vector<std::string> kExperiments = {
    "mvg_five", "mvg_summary", "mvg_learned", "two_moons", "lotka_volterra"};
inline const std::vector<std::string> kMethods = {"snpla", "snl", "smcabc"};

/// Fill method blocks with the published per-experiment defaults; JSON
/// overrides are applied on top by parse_config.
void apply_experiment_defaults(ExperimentConfig& cfg);

/// Parse + validate. Unknown keys, wrong types, and invariant violations
/// raise ConfigError with the field path.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// FNV-1a hash (hex) of the canonical serialized config.
std::string config_hash(const ExperimentConfig& cfg);

/// Deterministic shortest round-trip formatting for CSV cells.
std::string format_double(double v);

/// Strict CSV: fixed header, '\n' rows, no ragged rows, '.' decimals.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::ofstream out_;
  std::size_t n_cols_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
/// Throws std::runtime_error on ragged rows or an empty file.
CsvTable read_csv_strict(const std::filesystem::path& path);

/// N x d sample matrix as CSV with columns theta_1..theta_d.
void write_samples_csv(const std::filesystem::path& path, const ad::Matrix& samples,
                       const std::string& col_prefix = "theta_");
ad::Matrix read_samples_csv(const std::filesystem::path& path);

nlohmann::json round_record_to_json(const inference::RoundRecord& rec,
                                    const std::string& run_id, std::uint64_t seed);
void append_jsonl(std::ofstream& out, const nlohmann::json& j);

void save_flow_checkpoint(const std::filesystem::path& path,
                          const flow::ConditionalFlow& flow);
flow::ConditionalFlow load_flow_checkpoint(const std::filesystem::path& path);

/// Per-run output directory layout under <output_dir>/<run_id>/.
struct RunArtifacts {
  std::filesystem::path dir;
  std::string run_id;
  std::string config_hash;

  static RunArtifacts create(const ExperimentConfig& cfg, const std::string& run_id);
  std::filesystem::path rounds_jsonl() const { return dir / "rounds.jsonl"; }
  std::filesystem::path posterior_csv(int round) const {
    return dir / ("posterior_round" + std::to_string(round) + ".csv");
  }
  std::filesystem::path checkpoint(const std::string& name) const {
    return dir / (name + ".json");
  }
};

}  // namespace snpla::io
