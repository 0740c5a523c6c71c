#include "scorebeam/channel.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace scorebeam {

void SystemConfig::validate() const {
  if (users < 1 || rf_chains < users || tx_antennas < rf_chains) {
    throw std::invalid_argument("system config must satisfy N_T >= N_F >= K >= 1");
  }
  if (power_budget <= 0.0) throw std::invalid_argument("power budget must be positive");
  if (noise_power <= 0.0) throw std::invalid_argument("noise power must be positive");
  if (paths < 1) throw std::invalid_argument("need at least one path");
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double linear_to_db(double linear) { return 10.0 * std::log10(linear); }

ErrorLevel ErrorLevel::from_db(double db) { return {db_to_linear(db)}; }
double ErrorLevel::to_db() const { return linear_to_db(variance); }

std::vector<std::complex<double>> steering_vector(int64_t tx_antennas, double theta) {
  std::vector<std::complex<double>> a(tx_antennas);
  const double phase_step = M_PI * std::sin(theta);
  for (int64_t t = 0; t < tx_antennas; ++t) {
    const double ph = phase_step * static_cast<double>(t);
    a[t] = {std::cos(ph), std::sin(ph)};
  }
  return a;
}

ComplexMatrix synth_channel(const SystemConfig& config, Rng& rng) {
  config.validate();
  const int64_t nt = config.tx_antennas;
  const int64_t k = config.users;
  ComplexMatrix h(nt, k);
  const double norm = 1.0 / std::sqrt(static_cast<double>(config.paths));
  for (int64_t u = 0; u < k; ++u) {
    for (int64_t p = 0; p < config.paths; ++p) {
      const std::complex<double> gain = rng.cnormal(1.0);
      const double theta = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
      const auto steer = steering_vector(nt, theta);
      for (int64_t t = 0; t < nt; ++t) {
        h.set(t, u, h.at(t, u) + norm * gain * steer[t]);
      }
    }
  }
  return h;
}

ComplexMatrix perturb_csi(const ComplexMatrix& h, ErrorLevel level, Rng& rng) {
  if (level.variance < 0.0) throw std::invalid_argument("error variance must be >= 0");
  ComplexMatrix out = h;
  if (level.variance == 0.0) return out;
  for (int64_t i = 0; i < h.n_rows; ++i) {
    for (int64_t j = 0; j < h.n_cols; ++j) {
      out.set(i, j, out.at(i, j) + rng.cnormal(level.variance));
    }
  }
  return out;
}

SplitRanges split_dataset(int64_t n) {
  if (n < 10) throw std::invalid_argument("dataset split needs at least 10 samples");
  const int64_t val = n / 10;
  const int64_t test = n / 10;
  const int64_t train = n - val - test;  // remainder goes to train
  SplitRanges s;
  s.train_begin = 0;
  s.train_end = train;
  s.val_begin = train;
  s.val_end = train + val;
  s.test_begin = train + val;
  s.test_end = n;
  return s;
}

CsiDataset make_dataset(const SystemConfig& config, int64_t count) {
  config.validate();
  CsiDataset ds;
  ds.config = config;
  ds.samples.reserve(count);
  Rng base(config.seed);
  for (int64_t i = 0; i < count; ++i) {
    Rng stream = base.derive(static_cast<uint64_t>(i));
    ds.samples.push_back(synth_channel(config, stream));
  }
  ds.split = split_dataset(count);
  return ds;
}

namespace {

constexpr char kMagic[4] = {'C', 'S', 'I', 'D'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u32(os, bits);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("dataset file truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("dataset file truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& is) {
  const uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void write_dataset(const CsiDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open dataset for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(ds.config.users));
  put_u32(os, static_cast<uint32_t>(ds.config.tx_antennas));
  put_u64(os, static_cast<uint64_t>(ds.samples.size()));
  for (const auto& s : ds.samples) {
    if (s.n_rows != ds.config.tx_antennas || s.n_cols != ds.config.users) {
      throw std::runtime_error("dataset sample shape disagrees with config");
    }
    for (double v : s.re.data) put_f32(os, static_cast<float>(v));
    for (double v : s.im.data) put_f32(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

CsiDataset read_dataset(const std::string& path,
                        const std::optional<SystemConfig>& expected,
                        const std::optional<SplitRanges>& explicit_split) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("bad magic in dataset: " + path);
  }
  const uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("unsupported dataset version " + std::to_string(version));
  }
  const int64_t k = get_u32(is);
  const int64_t nt = get_u32(is);
  const uint64_t count = get_u64(is);

  CsiDataset ds;
  if (expected) {
    if (expected->users != k || expected->tx_antennas != nt) {
      throw std::runtime_error("dataset config mismatch: file has K=" + std::to_string(k) +
                               ", N_T=" + std::to_string(nt));
    }
    ds.config = *expected;
  } else {
    ds.config.users = k;
    ds.config.tx_antennas = nt;
    ds.config.rf_chains = k;
  }
  ds.samples.reserve(count);
  for (uint64_t s = 0; s < count; ++s) {
    ComplexMatrix m(nt, k);
    for (double& v : m.re.data) v = get_f32(is);
    for (double& v : m.im.data) v = get_f32(is);
    m.re.check_finite("dataset sample (re)");
    m.im.check_finite("dataset sample (im)");
    ds.samples.push_back(std::move(m));
  }
  if (explicit_split) {
    ds.split = *explicit_split;
  } else if (count >= 10) {
    ds.split = split_dataset(static_cast<int64_t>(count));
  } else {
    ds.split = SplitRanges{};
    ds.split.train_end = static_cast<int64_t>(count);
    ds.split.val_begin = ds.split.val_end = static_cast<int64_t>(count);
    ds.split.test_begin = ds.split.test_end = static_cast<int64_t>(count);
  }
  return ds;
}

}  // namespace scorebeam
