#pragma once

#include <map>

#include "scorebeam/tape.hpp"

namespace scorebeam {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Decoupled weight-decay Adam. Keeps first/second moment state per
/// parameter name; updates are in-place on the store's tensors.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamStore& params, const GradMap& grads);
  void reset() { m_.clear(); v_.clear(); t_ = 0; }

  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamWConfig cfg_;
  std::map<std::string, Tensor> m_, v_;
  int64_t t_ = 0;
};

/// grads[name] += delta[name] (creating zero-initialized slots as needed).
void accumulate(GradMap& grads, const GradMap& delta);
/// Multiplies every gradient by `s`.
void scale(GradMap& grads, double s);

}  // namespace scorebeam
