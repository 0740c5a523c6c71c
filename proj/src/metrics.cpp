#include "scorebeam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "scorebeam/hmgat.hpp"

namespace scorebeam {

double nre(const ComplexMatrix& h, const ComplexMatrix& h_hat) {
  if (!same_dims(h, h_hat)) throw std::invalid_argument("nre: shape mismatch");
  const double ref = h.frobenius_norm();
  if (ref == 0.0) throw std::invalid_argument("nre: zero reference channel");
  return (h - h_hat).frobenius_norm() / ref;
}

Histogram Histogram::build(const std::vector<double>& values, double lo, double hi,
                           int bins) {
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.mass.assign(bins, 0.0);
  if (values.empty()) return h;
  const double width = hi - lo;
  int64_t in_range = 0;
  for (double v : values) {
    if (v < lo || v > hi) continue;
    int b = width == 0.0 ? 0 : static_cast<int>((v - lo) / width * bins);
    b = std::min(b, bins - 1);  // pooled max lands in the last bin
    h.mass[b] += 1.0;
    ++in_range;
  }
  if (in_range > 0) {
    for (double& m : h.mass) m /= static_cast<double>(in_range);
  }
  return h;
}

namespace {

double kl_bits(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log2(p[i] / q[i]);
  }
  return s;
}

}  // namespace

double js_divergence(const std::vector<double>& a, const std::vector<double>& b,
                     int bins) {
  if (a.empty() || b.empty()) throw std::invalid_argument("js_divergence: empty input");
  if (bins < 2) throw std::invalid_argument("js_divergence: need at least 2 bins");
  double lo = a[0], hi = a[0];
  for (double v : a) { lo = std::min(lo, v); hi = std::max(hi, v); }
  for (double v : b) { lo = std::min(lo, v); hi = std::max(hi, v); }
  const Histogram pa = Histogram::build(a, lo, hi, bins);
  const Histogram pb = Histogram::build(b, lo, hi, bins);
  std::vector<double> m(bins);
  for (int i = 0; i < bins; ++i) m[i] = 0.5 * (pa.mass[i] + pb.mass[i]);
  return 0.5 * kl_bits(pa.mass, m) + 0.5 * kl_bits(pb.mass, m);
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_statistic: empty input");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  size_t ia = 0, ib = 0;
  double best = 0.0;
  while (ia < a.size() && ib < b.size()) {
    const double x = std::min(a[ia], b[ib]);
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    best = std::max(best, std::abs(static_cast<double>(ia) / na -
                                   static_cast<double>(ib) / nb));
  }
  return best;
}

std::vector<double> pool_real(const std::vector<ComplexMatrix>& samples) {
  std::vector<double> out;
  for (const auto& s : samples) out.insert(out.end(), s.re.data.begin(), s.re.data.end());
  return out;
}

std::vector<double> pool_imag(const std::vector<ComplexMatrix>& samples) {
  std::vector<double> out;
  for (const auto& s : samples) out.insert(out.end(), s.im.data.begin(), s.im.data.end());
  return out;
}

std::vector<double> pool_magnitude(const std::vector<ComplexMatrix>& samples) {
  std::vector<double> out;
  for (const auto& s : samples) {
    for (size_t i = 0; i < s.re.data.size(); ++i) {
      out.push_back(std::hypot(s.re.data[i], s.im.data[i]));
    }
  }
  return out;
}

SumRateSummary evaluate_sum_rates(const std::vector<ComplexMatrix>& samples,
                                  int64_t first, int64_t last, const Solver& solver,
                                  double noise_power) {
  SumRateSummary summary;
  if (first < 0 || last > static_cast<int64_t>(samples.size()) || first > last) {
    throw std::out_of_range("evaluate_sum_rates: bad range");
  }
  summary.per_sample.reserve(last - first);
  double total = 0.0;
  for (int64_t i = first; i < last; ++i) {
    const HbfSolution sol = solver(samples[i]);
    const auto rates = achievable_rate(samples[i], sol, noise_power);
    double sum = 0.0;
    for (double r : rates) sum += r;
    summary.per_sample.push_back(sum);
    total += sum;
  }
  if (!summary.per_sample.empty()) {
    summary.mean = total / static_cast<double>(summary.per_sample.size());
  }
  return summary;
}

}  // namespace scorebeam
