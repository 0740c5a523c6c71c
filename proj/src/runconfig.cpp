#include "scorebeam/runconfig.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace scorebeam {

using nlohmann::json;

namespace {

json to_json(const RunConfig& c) {
  json j;
  j["system"] = {{"users", c.system.users},
                 {"tx_antennas", c.system.tx_antennas},
                 {"rf_chains", c.system.rf_chains},
                 {"power_budget", c.system.power_budget},
                 {"noise_power", c.system.noise_power},
                 {"paths", c.system.paths},
                 {"seed", c.system.seed}};
  j["hmgat"] = {{"layers", c.hmgat.layers},
                {"heads", c.hmgat.heads},
                {"node_dim", c.hmgat.node_dim},
                {"edge_dim", c.hmgat.edge_dim},
                {"mlp_hidden", c.hmgat.mlp_hidden},
                {"mlp_layers", c.hmgat.mlp_layers}};
  j["ncsn"] = {{"dim", c.ncsn.dim},
               {"ffn_dim", c.ncsn.ffn_dim},
               {"heads", c.ncsn.heads},
               {"blocks", c.ncsn.blocks}};
  j["dsn"] = {{"dim", c.dsn.dim},
              {"ffn_dim", c.dsn.ffn_dim},
              {"heads", c.dsn.heads},
              {"blocks", c.dsn.blocks},
              {"lambda", c.dsn.lambda},
              {"levels_db", c.dsn_levels_db}};
  j["schedule"] = {{"delta2_max", c.delta2_max},
                   {"delta2_min", c.delta2_min},
                   {"levels", c.noise_levels},
                   {"epsilon", c.langevin_epsilon},
                   {"iterations", c.langevin_iterations}};
  j["train"] = {{"lr", c.train.lr},
                {"weight_decay", c.train.weight_decay},
                {"batch", c.train.batch},
                {"epochs", c.train.epochs},
                {"dropout", c.train.dropout},
                {"seed", c.train.seed},
                {"workers", c.train.workers}};
  j["radio"] = {{"bandwidth_ghz", c.bandwidth_ghz},
                {"carrier_ghz", c.carrier_ghz},
                {"noise_psd_dbm_hz", c.noise_psd_dbm_hz}};
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig parse(const json& j) {
  RunConfig c;
  if (j.contains("system")) {
    const auto& s = j.at("system");
    maybe(s, "users", c.system.users);
    maybe(s, "tx_antennas", c.system.tx_antennas);
    maybe(s, "rf_chains", c.system.rf_chains);
    maybe(s, "power_budget", c.system.power_budget);
    maybe(s, "noise_power", c.system.noise_power);
    maybe(s, "paths", c.system.paths);
    maybe(s, "seed", c.system.seed);
  }
  if (j.contains("hmgat")) {
    const auto& s = j.at("hmgat");
    maybe(s, "layers", c.hmgat.layers);
    maybe(s, "heads", c.hmgat.heads);
    maybe(s, "node_dim", c.hmgat.node_dim);
    maybe(s, "edge_dim", c.hmgat.edge_dim);
    maybe(s, "mlp_hidden", c.hmgat.mlp_hidden);
    maybe(s, "mlp_layers", c.hmgat.mlp_layers);
  }
  if (j.contains("ncsn")) {
    const auto& s = j.at("ncsn");
    maybe(s, "dim", c.ncsn.dim);
    maybe(s, "ffn_dim", c.ncsn.ffn_dim);
    maybe(s, "heads", c.ncsn.heads);
    maybe(s, "blocks", c.ncsn.blocks);
  }
  if (j.contains("dsn")) {
    const auto& s = j.at("dsn");
    maybe(s, "dim", c.dsn.dim);
    maybe(s, "ffn_dim", c.dsn.ffn_dim);
    maybe(s, "heads", c.dsn.heads);
    maybe(s, "blocks", c.dsn.blocks);
    maybe(s, "lambda", c.dsn.lambda);
    maybe(s, "levels_db", c.dsn_levels_db);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    maybe(s, "delta2_max", c.delta2_max);
    maybe(s, "delta2_min", c.delta2_min);
    maybe(s, "levels", c.noise_levels);
    maybe(s, "epsilon", c.langevin_epsilon);
    maybe(s, "iterations", c.langevin_iterations);
  }
  if (j.contains("train")) {
    const auto& s = j.at("train");
    maybe(s, "lr", c.train.lr);
    maybe(s, "weight_decay", c.train.weight_decay);
    maybe(s, "batch", c.train.batch);
    maybe(s, "epochs", c.train.epochs);
    maybe(s, "dropout", c.train.dropout);
    maybe(s, "seed", c.train.seed);
    maybe(s, "workers", c.train.workers);
  }
  if (j.contains("radio")) {
    const auto& s = j.at("radio");
    maybe(s, "bandwidth_ghz", c.bandwidth_ghz);
    maybe(s, "carrier_ghz", c.carrier_ghz);
    maybe(s, "noise_psd_dbm_hz", c.noise_psd_dbm_hz);
  }
  return c;
}

}  // namespace

NoiseSchedule RunConfig::schedule() const {
  return make_schedule(delta2_max, delta2_min, noise_levels, langevin_epsilon,
                       langevin_iterations);
}

std::vector<ErrorLevel> RunConfig::dsn_levels() const {
  std::vector<ErrorLevel> out;
  for (double db : dsn_levels_db) out.push_back(ErrorLevel::from_db(db));
  return out;
}

std::string RunConfig::to_json_text() const { return to_json(*this).dump(2); }

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  try {
    return parse(j);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config field error: ") + e.what());
  }
}

void RunConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write config: " + path);
  os << to_json_text() << "\n";
  if (!os) throw std::runtime_error("write failed: " + path);
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json_text(ss.str());
}

std::string RunConfig::hash() const {
  const std::string text = to_json_text();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(const std::string& dataset_path, const CsiDataset& ds) {
  json j;
  j["count"] = ds.samples.size();
  j["users"] = ds.config.users;
  j["tx_antennas"] = ds.config.tx_antennas;
  j["split"] = {{"train", {ds.split.train_begin, ds.split.train_end}},
                {"val", {ds.split.val_begin, ds.split.val_end}},
                {"test", {ds.split.test_begin, ds.split.test_end}}};
  std::ofstream os(dataset_path + ".manifest.json");
  if (!os) throw std::runtime_error("cannot write manifest for " + dataset_path);
  os << j.dump(2) << "\n";
}

std::optional<SplitRanges> read_manifest(const std::string& dataset_path) {
  std::ifstream is(dataset_path + ".manifest.json");
  if (!is) return std::nullopt;
  json j;
  try {
    is >> j;
    SplitRanges s;
    s.train_begin = j.at("split").at("train").at(0).get<int64_t>();
    s.train_end = j.at("split").at("train").at(1).get<int64_t>();
    s.val_begin = j.at("split").at("val").at(0).get<int64_t>();
    s.val_end = j.at("split").at("val").at(1).get<int64_t>();
    s.test_begin = j.at("split").at("test").at(0).get<int64_t>();
    s.test_end = j.at("split").at("test").at(1).get<int64_t>();
    return s;
  } catch (const json::exception& e) {
    throw std::runtime_error("bad manifest next to " + dataset_path + ": " + e.what());
  }
}

CsiDataset load_dataset(const std::string& path,
                        const std::optional<SystemConfig>& expected) {
  return read_dataset(path, expected, read_manifest(path));
}

}  // namespace scorebeam
