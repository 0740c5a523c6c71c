#pragma once

#include <utility>
#include <vector>

#include "scorebeam/channel.hpp"
#include "scorebeam/complexm.hpp"
#include "scorebeam/optim.hpp"
#include "scorebeam/tape.hpp"

namespace scorebeam {

/// Thrown when a training loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Directed complete user graph derived from the CSI.
/// node_x row i = [Re(h_i); Im(h_i)] (K x 2N_T). Edge features exist for
/// every ordered pair including (i,i) and are stored row-major by
/// e = i*K + j as [Re(h_i^H h_i), Re(h_i^H h_j), Re(h_j^H h_j),
/// Im(h_i^H h_i), Im(h_i^H h_j), Im(h_j^H h_j)].
struct BeamGraph {
  int64_t users = 0;
  Tensor node_x;  // K x 2N_T
  Tensor edge_e;  // K*K x 6
};

BeamGraph build_graph(const ComplexMatrix& h);

/// Feasible-by-construction hybrid beamforming solution.
struct HbfSolution {
  ComplexMatrix analog;       // P_RF, N_T x K, entries of modulus 1/sqrt(N_T)
  ComplexMatrix digital;      // P_BB, K x K, column k = p_BB,k
  std::vector<double> power;  // beta_k >= 0, sum <= P_max
};

/// Checks the three feasibility invariants (unit-modulus analog entries,
/// power budget, unit effective column norms).
bool feasible(const HbfSolution& sol, const SystemConfig& config,
              double tol_modulus = 1e-6, double tol_power = 1e-9,
              double tol_norm = 1e-6);

/// Per-user SINR rates log2(1 + beta_k |h_k^H P_RF p_BB,k|^2 /
/// (sum_{j != k} beta_j |h_k^H P_RF p_BB,j|^2 + noise)).
std::vector<double> achievable_rate(const ComplexMatrix& h, const HbfSolution& sol,
                                    double noise_power);

struct HmgatConfig {
  int64_t layers = 3;       // L
  int64_t heads = 4;        // M
  int64_t node_dim = 128;   // F per layer
  int64_t edge_dim = 128;   // D per layer
  int64_t mlp_hidden = 256;
  int64_t mlp_layers = 2;   // hidden layers in the decoding MLPs
  double leaky_slope = 0.01;
  double stabilizer = 1e-12;  // additive eps in the constrained-output denominators
};

struct TrainConfig {
  double lr = 5e-4;
  double weight_decay = 1e-4;
  int64_t batch = 32;
  int64_t epochs = 100;
  double dropout = 0.1;
  uint64_t seed = 1;
  int workers = 0;  // 0 = hardware concurrency
};

/// Solution on a tape, plus the effective precoder P_RF * P_BB reused by
/// the rate computation.
struct HbfVars {
  CVar analog;
  CVar digital;
  Var power;  // K x 1
  CVar effective;
};

class HmgatModel {
 public:
  HmgatModel(HmgatConfig cfg, int64_t tx_antennas);

  void init(Rng& rng);

  /// L rounds of node- and edge-level message passing; both updates in a
  /// round consume the same previous-round snapshot.
  std::pair<Var, Var> encode(Tape& tape, const BeamGraph& graph, bool training,
                             Rng* dropout_rng) const;

  struct RawOutputs {
    Var rf;     // K x 2N_T, row i decodes column i of P_RF
    Var power;  // K x 1
    Var bb;     // K*K x 2, row i*K+j decodes entry j of p_BB,i
  };
  RawOutputs decode(Tape& tape, Var node_feats, Var edge_feats, int64_t users,
                    bool training, Rng* dropout_rng) const;

  HbfVars constrain(Tape& tape, const RawOutputs& raw, const SystemConfig& config) const;

  HbfVars forward(Tape& tape, const BeamGraph& graph, const SystemConfig& config,
                  bool training, Rng* dropout_rng) const;

  /// Inference: CSI in, feasible solution out (no dropout).
  HbfSolution solve(const ComplexMatrix& h, const SystemConfig& config) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const HmgatConfig& config() const { return cfg_; }
  int64_t tx_antennas() const { return tx_antennas_; }

  /// Dropout rate used on attention weights and MLP hidden activations
  /// while training; inference never drops.
  void set_drop_rate(double p) { drop_rate_ = p; }
  double drop_rate() const { return drop_rate_; }

 private:
  Var mlp(Tape& tape, Var x, const std::string& prefix, bool training,
          Rng* dropout_rng) const;

  HmgatConfig cfg_;
  int64_t tx_antennas_;
  double drop_rate_ = 0.1;
  ParamStore params_;
};

/// Constrained output layer as a standalone map from raw decoder outputs,
/// using the same path as the model forward.
HbfSolution constrain_outputs(const Tensor& rf_raw, const Tensor& power_raw,
                              const Tensor& bb_raw, const SystemConfig& config,
                              double stabilizer = 1e-12);

/// Scalar sum rate of a solution on the tape, under the true channel.
Var sum_rate_var(Tape& tape, const ComplexMatrix& h_true, const HbfVars& sol,
                 double noise_power);

/// Mean over the batch of the negated sum rate.
Var hmgat_loss_var(Tape& tape, const HmgatModel& model,
                   const std::vector<const ComplexMatrix*>& batch,
                   const SystemConfig& config, bool training, Rng* dropout_rng);

double hmgat_loss(const HmgatModel& model, const std::vector<const ComplexMatrix*>& batch,
                  const SystemConfig& config);

struct EpochStat {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_sum_rate = 0.0;
};

/// Unsupervised training on the dataset's train split; keeps the best
/// validation checkpoint. Aborts with DivergenceError on non-finite loss.
HmgatModel train_hmgat(const CsiDataset& ds, const HmgatConfig& cfg,
                       const TrainConfig& train, std::vector<EpochStat>* trace = nullptr);

/// Mean sum rate of the model solution over samples[first, last), solved
/// from `inputs` but rated under the true channels `truth`.
double mean_sum_rate(const HmgatModel& model, const std::vector<ComplexMatrix>& truth,
                     const std::vector<ComplexMatrix>& inputs, int64_t first,
                     int64_t last, const SystemConfig& config, int workers = 0);

/// Deterministic chunked parallel-for; fn(i) must only touch slot i of any
/// shared output.
void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn);

}  // namespace scorebeam
