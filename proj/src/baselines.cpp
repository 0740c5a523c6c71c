#include "scorebeam/baselines.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

namespace scorebeam {

namespace {

Eigen::MatrixXcd to_eigen(const ComplexMatrix& m) {
  Eigen::MatrixXcd out(m.n_rows, m.n_cols);
  for (int64_t i = 0; i < m.n_rows; ++i)
    for (int64_t j = 0; j < m.n_cols; ++j) out(i, j) = m.at(i, j);
  return out;
}

ComplexMatrix from_eigen(const Eigen::MatrixXcd& m) {
  ComplexMatrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.set(i, j, m(i, j));
  return out;
}

// SVD pseudo-inverse; singular values below 1e-10 * sigma_max count as zero.
Eigen::MatrixXcd pinv(const Eigen::MatrixXcd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? 1e-10 * sv(0) : 0.0;
  Eigen::VectorXd inv = sv;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    inv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
}

// Normalizes digital columns so ||P_RF p_BB,k|| = 1 and fills the solution.
// A column that came back (numerically) zero falls back to the identity
// column before normalizing, keeping the result feasible.
HbfSolution assemble(const ComplexMatrix& analog, Eigen::MatrixXcd digital,
                     const SystemConfig& config) {
  const Eigen::MatrixXcd a = to_eigen(analog);
  for (Eigen::Index k = 0; k < digital.cols(); ++k) {
    double norm = (a * digital.col(k)).norm();
    if (norm <= 1e-300) {
      digital.col(k).setZero();
      digital(k, k) = 1.0;
      norm = (a * digital.col(k)).norm();
    }
    digital.col(k) /= norm;
  }
  HbfSolution sol;
  sol.analog = analog;
  sol.digital = from_eigen(digital);
  const auto users = static_cast<double>(digital.cols());
  sol.power.assign(digital.cols(), config.power_budget / users);
  return sol;
}

}  // namespace

HbfSolution pzf(const ComplexMatrix& h, const SystemConfig& config) {
  const int64_t nt = h.n_rows;
  const int64_t k = h.n_cols;
  const double mag = 1.0 / std::sqrt(static_cast<double>(nt));
  ComplexMatrix analog(nt, k);
  for (int64_t t = 0; t < nt; ++t) {
    for (int64_t u = 0; u < k; ++u) {
      const std::complex<double> v = h.at(t, u);
      const double a = std::abs(v);
      analog.set(t, u, a > 0.0 ? v / a * mag : std::complex<double>(mag, 0.0));
    }
  }
  const Eigen::MatrixXcd effective = to_eigen(h).adjoint() * to_eigen(analog);  // K x K
  return assemble(analog, pinv(effective), config);
}

HbfSolution equal_power_random(const ComplexMatrix& h, const SystemConfig& config,
                               Rng& rng) {
  const int64_t nt = h.n_rows;
  const int64_t k = h.n_cols;
  const double mag = 1.0 / std::sqrt(static_cast<double>(nt));
  ComplexMatrix analog(nt, k);
  for (int64_t t = 0; t < nt; ++t) {
    for (int64_t u = 0; u < k; ++u) {
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      analog.set(t, u, {mag * std::cos(phase), mag * std::sin(phase)});
    }
  }
  Eigen::MatrixXcd digital(k, k);
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < k; ++j) digital(i, j) = rng.cnormal(1.0);
  return assemble(analog, digital, config);
}

HbfSolution run_baseline(BaselineKind kind, const ComplexMatrix& h,
                         const SystemConfig& config, Rng& rng) {
  switch (kind) {
    case BaselineKind::pzf:
      return pzf(h, config);
    case BaselineKind::equal_power_random:
      return equal_power_random(h, config, rng);
  }
  throw std::invalid_argument("unknown baseline kind");
}

double tiny_grid_oracle(const ComplexMatrix& h, const SystemConfig& config,
                        int phase_bits, int power_grid) {
  const int64_t nt = h.n_rows;
  const int64_t k = h.n_cols;
  if (k > 2 || nt > 2 || phase_bits > 4 || phase_bits < 1 || power_grid < 1) {
    throw std::invalid_argument("tiny_grid_oracle: instance too large");
  }
  const int64_t phases = int64_t{1} << phase_bits;
  const int64_t entries = nt * k;
  const double mag = 1.0 / std::sqrt(static_cast<double>(nt));

  // power splits over a simplex grid including the endpoints
  std::vector<std::vector<double>> power_splits;
  if (k == 1) {
    for (int g = 0; g <= power_grid; ++g) {
      power_splits.push_back({config.power_budget * g / static_cast<double>(power_grid)});
    }
  } else {
    for (int g = 0; g <= power_grid; ++g) {
      const double t = static_cast<double>(g) / static_cast<double>(power_grid);
      power_splits.push_back({config.power_budget * t, config.power_budget * (1.0 - t)});
    }
  }

  double best = 0.0;
  std::vector<int64_t> digit(entries, 0);
  int64_t combos = 1;
  for (int64_t e = 0; e < entries; ++e) combos *= phases;
  ComplexMatrix analog(nt, k);
  for (int64_t c = 0; c < combos; ++c) {
    int64_t rem = c;
    for (int64_t e = 0; e < entries; ++e) {
      digit[e] = rem % phases;
      rem /= phases;
    }
    for (int64_t t = 0; t < nt; ++t) {
      for (int64_t u = 0; u < k; ++u) {
        const double phase = 2.0 * M_PI * digit[t * k + u] / static_cast<double>(phases);
        analog.set(t, u, {mag * std::cos(phase), mag * std::sin(phase)});
      }
    }
    const Eigen::MatrixXcd effective = to_eigen(h).adjoint() * to_eigen(analog);
    HbfSolution sol = assemble(analog, pinv(effective), config);
    for (const auto& split : power_splits) {
      sol.power = split;
      const auto rates = achievable_rate(h, sol, config.noise_power);
      double sum = 0.0;
      for (double r : rates) sum += r;
      best = std::max(best, sum);
    }
  }
  return best;
}

}  // namespace scorebeam
