#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scorebeam/complexm.hpp"
#include "scorebeam/rng.hpp"

namespace scorebeam {

/// Downlink MU-MISO system description. Channels are normalized so the
/// average per-entry power is 1 and the per-user noise power defaults to
/// 1 W; the power budget is interpreted on that scale.
struct SystemConfig {
  int64_t users = 4;         // K
  int64_t tx_antennas = 8;   // N_T
  int64_t rf_chains = 4;     // N_F
  double power_budget = 1.0; // watts
  double noise_power = 1.0;  // per-user, watts
  int64_t paths = 10;
  uint64_t seed = 0;

  void validate() const;  // enforces N_T >= N_F >= K >= 1 etc.
};

/// Channel estimation error magnitude; `variance` is the total complex
/// per-entry variance on linear scale.
struct ErrorLevel {
  double variance = 0.0;
  static ErrorLevel from_db(double db);
  double to_db() const;
};

struct SplitRanges {
  // half-open [start, end) index ranges
  int64_t train_begin = 0, train_end = 0;
  int64_t val_begin = 0, val_end = 0;
  int64_t test_begin = 0, test_end = 0;

  int64_t train_count() const { return train_end - train_begin; }
  int64_t val_count() const { return val_end - val_begin; }
  int64_t test_count() const { return test_end - test_begin; }
};

struct CsiDataset {
  SystemConfig config;
  std::vector<ComplexMatrix> samples;
  SplitRanges split;
};

/// Half-wavelength ULA steering vector a(theta)_t = exp(j*pi*(t-1)*sin(theta)).
std::vector<std::complex<double>> steering_vector(int64_t tx_antennas, double theta);

/// One multipath channel draw: column k is
/// h_k = (1/sqrt(P)) * sum_p alpha_{k,p} a(theta_{k,p}) with alpha ~ CN(0,1)
/// and theta uniform on [-pi/2, pi/2].
ComplexMatrix synth_channel(const SystemConfig& config, Rng& rng);

/// H + E with E entries i.i.d. CN(0, level.variance).
ComplexMatrix perturb_csi(const ComplexMatrix& h, ErrorLevel level, Rng& rng);

/// 8:1:1 floor allocation with the remainder assigned to train; needs n >= 10.
SplitRanges split_dataset(int64_t n);

/// Generates `count` samples on per-sample derived RNG streams, so the
/// result depends only on (config, count).
CsiDataset make_dataset(const SystemConfig& config, int64_t count);

/// Dataset file, layout (little-endian): magic "CSID", version u32, K u32,
/// N_T u32, count u64, then per sample the real part (row-major f32,
/// N_T x K) followed by the imaginary part.
void write_dataset(const CsiDataset& ds, const std::string& path);

/// Reads a dataset; when `expected` is given its K/N_T must match the file.
/// The split is recomputed by the 8:1:1 rule unless `explicit_split` is set.
CsiDataset read_dataset(const std::string& path,
                        const std::optional<SystemConfig>& expected = std::nullopt,
                        const std::optional<SplitRanges>& explicit_split = std::nullopt);

double db_to_linear(double db);
double linear_to_db(double linear);

}  // namespace scorebeam
