#pragma once

#include <functional>

#include "scorebeam/channel.hpp"
#include "scorebeam/encoder.hpp"
#include "scorebeam/hmgat.hpp"  // TrainConfig, EpochStat, DivergenceError

namespace scorebeam {

/// Descending noise-power ladder with per-level Langevin step sizes
/// nu_l = epsilon * var_l / var_L.
struct NoiseSchedule {
  std::vector<double> noise_vars;  // delta^2_l, strictly descending, positive
  double epsilon = 2e-5;
  int64_t iterations = 100;  // T, Langevin iterations per level

  int64_t levels() const { return static_cast<int64_t>(noise_vars.size()); }
  double step_size(int64_t level) const;  // 1-based
  double variance(int64_t level) const { return noise_vars.at(level - 1); }
  void validate() const;
};

/// Geometric interpolation in delta between the endpoint powers; the
/// endpoints themselves are kept exactly.
NoiseSchedule make_schedule(double delta2_max = 1.0, double delta2_min = 0.01,
                            int64_t levels = 10, double epsilon = 2e-5,
                            int64_t iterations = 100);

struct NcsnConfig {
  int64_t dim = 64;       // D
  int64_t ffn_dim = 256;  // D'
  int64_t heads = 4;      // C
  int64_t blocks = 4;     // J
};

/// Noise-conditional score network: level embedding, input projection,
/// J conditioned encoder blocks, output projection back to CSI shape.
class NcsnModel {
 public:
  NcsnModel(NcsnConfig cfg, int64_t tx_antennas, int64_t levels);

  void init(Rng& rng);

  /// Batched score over token rows; level_per_sample[b] is the 1-based
  /// noise level of the b-th block of `users` rows.
  Var score_tokens(Tape& tape, Var tokens, const std::vector<int64_t>& level_per_sample,
                   int64_t users, bool training, Rng* dropout_rng) const;

  /// Score of one perturbed sample at a 1-based level (inference path).
  ComplexMatrix forward(const ComplexMatrix& h_bar, int64_t level) const;

  /// Batched inference (all samples at the same level).
  std::vector<ComplexMatrix> forward_batch(const std::vector<ComplexMatrix>& h_bars,
                                           int64_t level) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const NcsnConfig& config() const { return cfg_; }
  int64_t tx_antennas() const { return tx_antennas_; }
  int64_t levels() const { return levels_; }
  void set_drop_rate(double p) { drop_rate_ = p; }

 private:
  NcsnConfig cfg_;
  int64_t tx_antennas_;
  int64_t levels_;
  double drop_rate_ = 0.1;
  ParamStore params_;
};

/// Pluggable score head for the denoising loss (the model’s
/// score_tokens, or a directly-parameterized test model).
using ScoreTokensFn =
    std::function<Var(Tape&, Var tokens, const std::vector<int64_t>& level_per_sample)>;

/// Denoising score-matching objective: for every sample and level draws
/// H_bar = H + Z, Z ~ CN(0, var_l I), and accumulates
/// var_l * ||S(H_bar, l) + (H_bar - H)/var_l||^2, averaged with the
/// 1/(2L) factor and over the batch.
Var ncsn_loss_var(Tape& tape, const ScoreTokensFn& score,
                  const std::vector<const ComplexMatrix*>& batch,
                  const NoiseSchedule& schedule, Rng& noise_rng);

double ncsn_loss(const NcsnModel& model, const std::vector<const ComplexMatrix*>& batch,
                 const NoiseSchedule& schedule, Rng& noise_rng);

/// Batched score callback, all chains at one 1-based level.
using BatchScoreFn = std::function<std::vector<ComplexMatrix>(
    const std::vector<ComplexMatrix>&, int64_t level)>;

/// Annealed Langevin dynamics: chains start from CN(0, I), run T
/// iterations per level from coarsest to finest, each level warm-starting
/// from the previous one. `inject_noise = false` drops the sqrt(nu) Z term
/// for deterministic tests. Aborts with DivergenceError on non-finite
/// iterates.
std::vector<ComplexMatrix> langevin_sample_batch(const BatchScoreFn& score,
                                                 const NoiseSchedule& schedule,
                                                 int64_t tx_antennas, int64_t users,
                                                 int64_t count, Rng& rng,
                                                 bool inject_noise = true);

ComplexMatrix langevin_sample(const BatchScoreFn& score, const NoiseSchedule& schedule,
                              int64_t tx_antennas, int64_t users, Rng& rng,
                              bool inject_noise = true);

struct NcsnEpochStat {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Trains on the dataset's train split, keeping the best validation-loss
/// checkpoint (validation noise is drawn from a fixed stream so epochs
/// are comparable).
NcsnModel train_ncsn(const CsiDataset& ds, const NcsnConfig& cfg,
                     const NoiseSchedule& schedule, const TrainConfig& train,
                     std::vector<NcsnEpochStat>* trace = nullptr);

}  // namespace scorebeam
