#pragma once

#include "scorebeam/channel.hpp"
#include "scorebeam/encoder.hpp"
#include "scorebeam/hmgat.hpp"  // TrainConfig, DivergenceError
#include "scorebeam/ncsn.hpp"

namespace scorebeam {

struct DsnConfig {
  int64_t dim = 64;       // feature width of the denoising encoder
  int64_t ffn_dim = 256;
  int64_t heads = 4;
  int64_t blocks = 4;     // score blocks before the single denoising block
  double lambda = 1.0;    // weight of the reconstruction term
};

struct DenoiseResult {
  ComplexMatrix score;      // N_T x K noise-conditional score
  ComplexMatrix direction;  // N_T x K update direction
  std::vector<std::complex<double>> step;  // per-user complex step size
  ComplexMatrix refined;    // H_tilde + step (x) direction, column-broadcast
};

/// Denoising score network: error-level embedding, input projection,
/// `blocks` score encoder blocks, one denoising block fed the sum of the
/// input tokens and the score-block output, then three output heads
/// (score, direction, per-user step size).
class DenoiseNet {
 public:
  DenoiseNet(DsnConfig cfg, int64_t tx_antennas);

  void init(Rng& rng);

  struct TokenOutputs {
    Var score_rows;  // (B*K) x 2N_T
    Var delta_rows;  // (B*K) x 2N_T
    Var eta_rows;    // (B*K) x 2, columns are re/im of the step size
  };
  /// Batched forward over token rows; `delta_e` is the error standard
  /// deviation shared by the batch.
  TokenOutputs forward_tokens(Tape& tape, Var tokens, double delta_e, int64_t users,
                              bool training, Rng* dropout_rng) const;

  DenoiseResult forward(const ComplexMatrix& h_tilde, double delta_e) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const DsnConfig& config() const { return cfg_; }
  int64_t tx_antennas() const { return tx_antennas_; }
  void set_drop_rate(double p) { drop_rate_ = p; }

 private:
  DsnConfig cfg_;
  int64_t tx_antennas_;
  double drop_rate_ = 0.1;
  ParamStore params_;
};

/// Multi-task objective
///   var_E ||S + (H_tilde - H)/var_E||^2 + lambda ||H - H_hat||_F / ||H||_F
/// averaged over the batch (one shared error level per call).
Var dsn_loss_var(Tape& tape, const DenoiseNet& model,
                 const std::vector<const ComplexMatrix*>& clean,
                 const std::vector<const ComplexMatrix*>& noisy, double delta_e,
                 double lambda, bool training, Rng* dropout_rng);

double dsn_loss(const DenoiseNet& model, const ComplexMatrix& clean,
                const ComplexMatrix& noisy, double delta_e, double lambda);

/// One-step score-guided refinement of an imperfect CSI observation.
ComplexMatrix denoise(const DenoiseNet& model, const ComplexMatrix& h_tilde,
                      double delta_e);

struct DsnEpochStat {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_nre_ratio = 0.0;  // mean post/pre NRE ratio across configured levels
};

/// Trains on perfect CSI from the train split; each step draws one error
/// level uniformly from `levels`, perturbs the batch and minimizes the
/// multi-task loss. Keeps the checkpoint with the best validation NRE.
DenoiseNet train_dsn(const CsiDataset& ds, const std::vector<ErrorLevel>& levels,
                     const DsnConfig& cfg, const TrainConfig& train,
                     std::vector<DsnEpochStat>* trace = nullptr);

}  // namespace scorebeam
