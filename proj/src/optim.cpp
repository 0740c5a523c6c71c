#include "scorebeam/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace scorebeam {

void AdamW::step(ParamStore& params, const GradMap& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    auto p = params.get(name);
    if (!same_shape(*p, g)) throw std::invalid_argument("gradient shape mismatch for " + name);
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      mit = m_.emplace(name, Tensor::zeros(g.shape)).first;
      v_.emplace(name, Tensor::zeros(g.shape));
    }
    Tensor& m = mit->second;
    Tensor& v = v_.at(name);
    for (size_t i = 0; i < g.data.size(); ++i) {
      const double gi = g.data[i];
      m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
      v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p->data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                               cfg_.weight_decay * p->data[i]);
    }
  }
}

void accumulate(GradMap& grads, const GradMap& delta) {
  for (const auto& [name, g] : delta) {
    auto it = grads.find(name);
    if (it == grads.end()) {
      grads[name] = g;
    } else {
      for (size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
    }
  }
}

void scale(GradMap& grads, double s) {
  for (auto& [name, g] : grads) {
    for (double& v : g.data) v *= s;
  }
}

}  // namespace scorebeam
