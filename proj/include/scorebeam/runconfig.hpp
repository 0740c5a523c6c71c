#pragma once

#include <string>
#include <vector>

#include "scorebeam/channel.hpp"
#include "scorebeam/dsn.hpp"
#include "scorebeam/hmgat.hpp"
#include "scorebeam/ncsn.hpp"

namespace scorebeam {

/// Full experiment configuration; serializable so any run can be replayed
/// from (config, seed) alone.
struct RunConfig {
  SystemConfig system;
  HmgatConfig hmgat;
  NcsnConfig ncsn;
  DsnConfig dsn;
  TrainConfig train;

  // noise schedule
  double delta2_max = 1.0;
  double delta2_min = 0.01;
  int64_t noise_levels = 10;
  double langevin_epsilon = 2e-5;
  int64_t langevin_iterations = 100;

  // recorded but not applied as absolute pathloss: channels stay on the
  // normalized scale where per-entry power is 1
  double bandwidth_ghz = 0.5;
  double carrier_ghz = 28.0;
  double noise_psd_dbm_hz = -174.0;

  std::vector<double> dsn_levels_db{-10.0, -5.0, 0.0, 5.0, 10.0};

  NoiseSchedule schedule() const;
  std::vector<ErrorLevel> dsn_levels() const;

  std::string to_json_text() const;
  static RunConfig from_json_text(const std::string& text);

  void save(const std::string& path) const;
  static RunConfig load(const std::string& path);

  /// FNV-1a hash of the canonical JSON form, for tagging metric outputs.
  std::string hash() const;
};

/// Sidecar manifest carrying explicit split ranges for a dataset file.
void write_manifest(const std::string& dataset_path, const CsiDataset& ds);
/// Split from "<dataset>.manifest.json" when present.
std::optional<SplitRanges> read_manifest(const std::string& dataset_path);

/// Dataset load honoring a manifest sidecar if one exists.
CsiDataset load_dataset(const std::string& path,
                        const std::optional<SystemConfig>& expected = std::nullopt);

}  // namespace scorebeam
