#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scorebeam/channel.hpp"

namespace scorebeam {

/// ||H - H_hat||_F / ||H||_F.
double nre(const ComplexMatrix& h, const ComplexMatrix& h_hat);

/// Probability-mass histogram over uniform bins spanning the pooled
/// min/max of the data it is built against.
struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<double> mass;

  static Histogram build(const std::vector<double>& values, double lo, double hi, int bins);
};

/// Jensen-Shannon divergence in bits between shared-edge histograms of the
/// two sample sets; 0 for identical data, 1 for disjoint supports.
double js_divergence(const std::vector<double>& a, const std::vector<double>& b,
                     int bins = 50);

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

// Component pools for distribution comparisons.
std::vector<double> pool_real(const std::vector<ComplexMatrix>& samples);
std::vector<double> pool_imag(const std::vector<ComplexMatrix>& samples);
std::vector<double> pool_magnitude(const std::vector<ComplexMatrix>& samples);

struct HbfSolution;  // hmgat.hpp

using Solver = std::function<HbfSolution(const ComplexMatrix&)>;

struct SumRateSummary {
  double mean = 0.0;
  std::vector<double> per_sample;
};

/// Mean sum rate over samples[first, last) under the TRUE channel; the
/// solver may internally consume a perturbed or denoised copy.
SumRateSummary evaluate_sum_rates(const std::vector<ComplexMatrix>& samples,
                                  int64_t first, int64_t last, const Solver& solver,
                                  double noise_power);

}  // namespace scorebeam
