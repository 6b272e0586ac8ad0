#include "snpla/io.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <sstream>

namespace snpla::io {

namespace fs = std::filesystem;
using nlohmann::json;

void apply_experiment_defaults(ExperimentConfig& cfg) {
  auto& s = cfg.snpla;
  s.rounds = 10;
  s.n_sim_per_round = 2500;
  s.n_post = 10000;
  s.lr_like = 0.001;
  s.lr_post = 0.002;
  s.gamma_post = 0.95;
  s.lambda = 0.7;
  if (cfg.experiment == "mvg_learned") {
    s.use_summary_net = true;
    s.summary_dim = 5;
    s.set_size = 5;
  } else if (cfg.experiment == "two_moons") {
    s.n_sim_per_round = 1000;
    s.n_post = 60000;
    s.lr_post = 0.001;
    s.gamma_post = 0.9;
  } else if (cfg.experiment == "lotka_volterra") {
    s.rounds = 5;
    s.n_sim_per_round = 1000;
    s.lr_post = 0.001;
    s.gamma_post = 0.9;
    s.lambda = 0.9;
  }
  cfg.snl.rounds = s.rounds;
  cfg.snl.n_sim_per_round = s.n_sim_per_round;
  cfg.snl.lr = 0.0005;
  cfg.smcabc.max_sims = static_cast<long>(s.rounds) * s.n_sim_per_round * 10;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path, msg);
}

void check_keys(const json& obj, const std::string& path,
                const std::vector<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      fail(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
  }
}

template <typename T>
void read_field(const json& obj, const std::string& path, const std::string& key,
                T& dst) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  std::string fp = path.empty() ? key : path + "." + key;
  try {
    dst = v.get<T>();
  } catch (const json::exception&) {
    fail(fp, "wrong type");
  }
}

void read_train(const json& obj, const std::string& path,
                inference::TrainOptions& t) {
  check_keys(obj, path,
             {"batch_size", "patience", "min_delta", "max_epochs", "clip_norm"});
  read_field(obj, path, "batch_size", t.batch_size);
  read_field(obj, path, "patience", t.patience);
  read_field(obj, path, "min_delta", t.min_delta);
  read_field(obj, path, "max_epochs", t.max_epochs);
  read_field(obj, path, "clip_norm", t.clip_norm);
}

void read_snpla(const json& obj, inference::SnplaConfig& s) {
  const std::string p = "snpla";
  check_keys(obj, p,
             {"rounds", "n_sim_per_round", "n_post", "n_mini", "lambda", "lr_like",
              "lr_post", "gamma_post", "val_frac", "use_summary_net", "summary_dim",
              "set_size", "flow_layers", "hidden", "n_test_post", "step2_patience",
              "train"});
  read_field(obj, p, "rounds", s.rounds);
  read_field(obj, p, "n_sim_per_round", s.n_sim_per_round);
  read_field(obj, p, "n_post", s.n_post);
  read_field(obj, p, "n_mini", s.n_mini);
  read_field(obj, p, "lambda", s.lambda);
  read_field(obj, p, "lr_like", s.lr_like);
  read_field(obj, p, "lr_post", s.lr_post);
  read_field(obj, p, "gamma_post", s.gamma_post);
  read_field(obj, p, "val_frac", s.val_frac);
  read_field(obj, p, "use_summary_net", s.use_summary_net);
  read_field(obj, p, "summary_dim", s.summary_dim);
  read_field(obj, p, "set_size", s.set_size);
  read_field(obj, p, "flow_layers", s.flow_layers);
  read_field(obj, p, "hidden", s.hidden);
  read_field(obj, p, "n_test_post", s.n_test_post);
  read_field(obj, p, "step2_patience", s.step2_patience);
  if (obj.contains("train")) read_train(obj.at("train"), p + ".train", s.train);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    fail(p, e.what());
  }
}

void read_snl(const json& obj, inference::SnlConfig& s) {
  const std::string p = "snl";
  check_keys(obj, p,
             {"rounds", "n_sim_per_round", "lr", "val_frac", "flow_layers", "hidden",
              "n_test_post", "train", "mcmc"});
  read_field(obj, p, "rounds", s.rounds);
  read_field(obj, p, "n_sim_per_round", s.n_sim_per_round);
  read_field(obj, p, "lr", s.lr);
  read_field(obj, p, "val_frac", s.val_frac);
  read_field(obj, p, "flow_layers", s.flow_layers);
  read_field(obj, p, "hidden", s.hidden);
  read_field(obj, p, "n_test_post", s.n_test_post);
  if (obj.contains("train")) read_train(obj.at("train"), p + ".train", s.train);
  if (obj.contains("mcmc")) {
    const json& m = obj.at("mcmc");
    check_keys(m, p + ".mcmc", {"n_chains", "burn_in", "thinning", "initial_scale"});
    read_field(m, p + ".mcmc", "n_chains", s.mcmc.n_chains);
    read_field(m, p + ".mcmc", "burn_in", s.mcmc.burn_in);
    read_field(m, p + ".mcmc", "thinning", s.mcmc.thinning);
    read_field(m, p + ".mcmc", "initial_scale", s.mcmc.initial_scale);
  }
  if (s.rounds < 1) fail(p + ".rounds", "must be >= 1");
  if (s.mcmc.burn_in < 0) fail(p + ".mcmc.burn_in", "must be >= 0");
  if (s.mcmc.thinning < 1) fail(p + ".mcmc.thinning", "must be >= 1");
}

void read_smcabc(const json& obj, inference::SmcAbcConfig& s) {
  const std::string p = "smcabc";
  check_keys(obj, p, {"n_particles", "max_sims", "epsilon_quantile"});
  long max_sims = s.max_sims;
  read_field(obj, p, "n_particles", s.n_particles);
  read_field(obj, p, "max_sims", max_sims);
  read_field(obj, p, "epsilon_quantile", s.epsilon_quantile);
  s.max_sims = max_sims;
  if (s.n_particles < 1) fail(p + ".n_particles", "must be >= 1");
  if (s.epsilon_quantile <= 0 || s.epsilon_quantile >= 1)
    fail(p + ".epsilon_quantile", "must be in (0,1)");
}

std::string list_join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) fail("", "config root must be a JSON object");
  check_keys(j, "",
             {"experiment", "method", "n_seeds", "data_seed", "output_dir",
              "two_moons_radial_first", "snpla", "snl", "smcabc"});

  ExperimentConfig cfg;
  if (!j.contains("experiment")) fail("experiment", "required");
  if (!j.contains("method")) fail("method", "required");
  read_field(j, "", "experiment", cfg.experiment);
  read_field(j, "", "method", cfg.method);
  if (std::find(kExperiments.begin(), kExperiments.end(), cfg.experiment) ==
      kExperiments.end())
    fail("experiment", "unknown experiment '" + cfg.experiment +
                           "'; valid: " + list_join(kExperiments));
  if (std::find(kMethods.begin(), kMethods.end(), cfg.method) == kMethods.end())
    fail("method",
         "unknown method '" + cfg.method + "'; valid: " + list_join(kMethods));

  apply_experiment_defaults(cfg);

  read_field(j, "", "n_seeds", cfg.n_seeds);
  read_field(j, "", "data_seed", cfg.data_seed);
  read_field(j, "", "output_dir", cfg.output_dir);
  read_field(j, "", "two_moons_radial_first", cfg.two_moons_radial_first);
  if (cfg.n_seeds < 1) fail("n_seeds", "must be >= 1");

  if (cfg.method == "snpla" && j.contains("snpla")) read_snpla(j.at("snpla"), cfg.snpla);
  if (cfg.method == "snl" && j.contains("snl")) read_snl(j.at("snl"), cfg.snl);
  if (cfg.method == "smcabc" && j.contains("smcabc"))
    read_smcabc(j.at("smcabc"), cfg.smcabc);
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail("", "cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("", std::string("JSON parse error: ") + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = cfg.experiment;
  j["method"] = cfg.method;
  j["n_seeds"] = cfg.n_seeds;
  j["data_seed"] = cfg.data_seed;
  j["output_dir"] = cfg.output_dir;
  j["two_moons_radial_first"] = cfg.two_moons_radial_first;

  const auto& s = cfg.snpla;
  j["snpla"] = {{"rounds", s.rounds},
                {"n_sim_per_round", s.n_sim_per_round},
                {"n_post", s.n_post},
                {"n_mini", s.n_mini},
                {"lambda", s.lambda},
                {"lr_like", s.lr_like},
                {"lr_post", s.lr_post},
                {"gamma_post", s.gamma_post},
                {"val_frac", s.val_frac},
                {"use_summary_net", s.use_summary_net},
                {"summary_dim", s.summary_dim},
                {"set_size", s.set_size},
                {"flow_layers", s.flow_layers},
                {"hidden", s.hidden},
                {"n_test_post", s.n_test_post},
                {"step2_patience", s.step2_patience},
                {"train",
                 {{"batch_size", s.train.batch_size},
                  {"patience", s.train.patience},
                  {"min_delta", s.train.min_delta},
                  {"max_epochs", s.train.max_epochs},
                  {"clip_norm", s.train.clip_norm}}}};
  const auto& l = cfg.snl;
  j["snl"] = {{"rounds", l.rounds},
              {"n_sim_per_round", l.n_sim_per_round},
              {"lr", l.lr},
              {"val_frac", l.val_frac},
              {"flow_layers", l.flow_layers},
              {"hidden", l.hidden},
              {"n_test_post", l.n_test_post},
              {"train",
               {{"batch_size", l.train.batch_size},
                {"patience", l.train.patience},
                {"min_delta", l.train.min_delta},
                {"max_epochs", l.train.max_epochs},
                {"clip_norm", l.train.clip_norm}}},
              {"mcmc",
               {{"n_chains", l.mcmc.n_chains},
                {"burn_in", l.mcmc.burn_in},
                {"thinning", l.mcmc.thinning},
                {"initial_scale", l.mcmc.initial_scale}}}};
  const auto& a = cfg.smcabc;
  j["smcabc"] = {{"n_particles", a.n_particles},
                 {"max_sims", a.max_sims},
                 {"epsilon_quantile", a.epsilon_quantile}};
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::string s = config_to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const fs::path& path, std::vector<std::string> header)
    : out_(path, std::ios::binary), n_cols_(header.size()) {
  if (!out_) throw std::runtime_error("cannot open " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i)
    out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != n_cols_)
    throw std::runtime_error("CSV row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i)
    out_ << (i ? "," : "") << cells[i];
  out_ << '\n';
}

void CsvWriter::close() { out_.close(); }

CsvTable read_csv_strict(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    cells.push_back(cur);
    return cells;
  };
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV " + path.string());
  if (!line.empty() && line.back() == '\r')
    throw std::runtime_error("CRLF line endings in " + path.string());
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) throw std::runtime_error("blank line in " + path.string());
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw std::runtime_error("ragged row in " + path.string());
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void write_samples_csv(const fs::path& path, const ad::Matrix& samples,
                       const std::string& col_prefix) {
  std::vector<std::string> header;
  for (long j = 0; j < samples.cols(); ++j)
    header.push_back(col_prefix + std::to_string(j + 1));
  CsvWriter w(path, header);
  std::vector<std::string> cells(samples.cols());
  for (long i = 0; i < samples.rows(); ++i) {
    for (long j = 0; j < samples.cols(); ++j) cells[j] = format_double(samples(i, j));
    w.row(cells);
  }
}

ad::Matrix read_samples_csv(const fs::path& path) {
  CsvTable t = read_csv_strict(path);
  ad::Matrix m(t.rows.size(), t.header.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.header.size(); ++j)
      m(i, j) = std::stod(t.rows[i][j]);
  return m;
}

json round_record_to_json(const inference::RoundRecord& rec,
                          const std::string& run_id, std::uint64_t seed) {
  json j;
  j["run_id"] = run_id;
  j["seed"] = seed;
  j["round"] = rec.round;
  j["alpha"] = rec.alpha;
  j["dataset_size"] = rec.dataset_size;
  j["like_train_losses"] = rec.like_train_losses;
  j["like_val_losses"] = rec.like_val_losses;
  j["post_loss_trace"] = rec.post_loss_trace;
  j["post_val_trace"] = rec.post_val_trace;
  j["t_simulate"] = rec.t_simulate;
  j["t_train_like"] = rec.t_train_like;
  j["t_train_post"] = rec.t_train_post;
  j["t_sample"] = rec.t_sample;
  j["degraded"] = rec.degraded;
  j["failed"] = rec.failed;
  j["metrics"] = rec.metrics;
  return j;
}

void append_jsonl(std::ofstream& out, const json& j) { out << j.dump() << '\n'; }

void save_flow_checkpoint(const fs::path& path, const flow::ConditionalFlow& flow) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << flow.to_json().dump(2) << '\n';
}

flow::ConditionalFlow load_flow_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing checkpoint " + path.string());
  json j;
  in >> j;
  return flow::ConditionalFlow::from_json(j);
}

RunArtifacts RunArtifacts::create(const ExperimentConfig& cfg,
                                  const std::string& run_id) {
  RunArtifacts a;
  a.run_id = run_id;
  a.config_hash = io::config_hash(cfg);
  a.dir = fs::path(cfg.output_dir) / run_id;
  fs::create_directories(a.dir);
  json snap = config_to_json(cfg);
  snap["run_id"] = run_id;
  snap["config_hash"] = a.config_hash;
  std::ofstream out(a.dir / "config.json", std::ios::binary);
  out << snap.dump(2) << '\n';
  return a;
}

}  // namespace snpla::io
