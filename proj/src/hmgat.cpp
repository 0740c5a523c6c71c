#include "scorebeam/hmgat.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace scorebeam {

namespace {
constexpr double kLog2e = 1.4426950408889634;  // 1/ln(2)
}

// ---------------------------------------------------------------------
// graph construction
// ---------------------------------------------------------------------

BeamGraph build_graph(const ComplexMatrix& h) {
  const int64_t nt = h.n_rows;
  const int64_t k = h.n_cols;
  BeamGraph g;
  g.users = k;
  g.node_x = Tensor::zeros({k, 2 * nt});
  for (int64_t i = 0; i < k; ++i) {
    for (int64_t t = 0; t < nt; ++t) {
      g.node_x.at(i, t) = h.re.at(t, i);
      g.node_x.at(i, nt + t) = h.im.at(t, i);
    }
  }
  // pairwise inner products h_i^H h_j
  std::vector<std::complex<double>> gram(k * k);
  for (int64_t i = 0; i < k; ++i) {
    for (int64_t j = 0; j < k; ++j) {
      std::complex<double> acc{0.0, 0.0};
      for (int64_t t = 0; t < nt; ++t) acc += std::conj(h.at(t, i)) * h.at(t, j);
      gram[i * k + j] = acc;
    }
  }
  g.edge_e = Tensor::zeros({k * k, 6});
  for (int64_t i = 0; i < k; ++i) {
    for (int64_t j = 0; j < k; ++j) {
      const int64_t e = i * k + j;
      const auto ii = gram[i * k + i];
      const auto ij = gram[i * k + j];
      const auto jj = gram[j * k + j];
      g.edge_e.at(e, 0) = ii.real();
      g.edge_e.at(e, 1) = ij.real();
      g.edge_e.at(e, 2) = jj.real();
      g.edge_e.at(e, 3) = ii.imag();
      g.edge_e.at(e, 4) = ij.imag();
      g.edge_e.at(e, 5) = jj.imag();
    }
  }
  return g;
}

// ---------------------------------------------------------------------
// feasibility and rates
// ---------------------------------------------------------------------

bool feasible(const HbfSolution& sol, const SystemConfig& config, double tol_modulus,
              double tol_power, double tol_norm) {
  const int64_t nt = sol.analog.n_rows;
  const int64_t k = sol.analog.n_cols;
  const double target = 1.0 / std::sqrt(static_cast<double>(nt));
  for (int64_t t = 0; t < nt; ++t) {
    for (int64_t u = 0; u < k; ++u) {
      if (std::abs(std::abs(sol.analog.at(t, u)) - target) > tol_modulus) return false;
    }
  }
  double total = 0.0;
  for (double b : sol.power) {
    if (b < 0.0) return false;
    total += b;
  }
  if (total > config.power_budget + tol_power) return false;
  const ComplexMatrix eff = cmatmul_plain(sol.analog, sol.digital);
  for (int64_t u = 0; u < k; ++u) {
    double n2 = 0.0;
    for (int64_t t = 0; t < nt; ++t) n2 += std::norm(eff.at(t, u));
    if (std::abs(std::sqrt(n2) - 1.0) > tol_norm) return false;
  }
  return true;
}

std::vector<double> achievable_rate(const ComplexMatrix& h, const HbfSolution& sol,
                                    double noise_power) {
  const int64_t k = h.n_cols;
  const ComplexMatrix eff = cmatmul_plain(sol.analog, sol.digital);
  std::vector<double> rates(k);
  for (int64_t u = 0; u < k; ++u) {
    double signal = 0.0, interference = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      std::complex<double> acc{0.0, 0.0};
      for (int64_t t = 0; t < h.n_rows; ++t) acc += std::conj(h.at(t, u)) * eff.at(t, j);
      const double p = sol.power[j] * std::norm(acc);
      if (j == u) {
        signal = p;
      } else {
        interference += p;
      }
    }
    rates[u] = std::log2(1.0 + signal / (interference + noise_power));
  }
  return rates;
}

// ---------------------------------------------------------------------
// model
// ---------------------------------------------------------------------

HmgatModel::HmgatModel(HmgatConfig cfg, int64_t tx_antennas)
    : cfg_(cfg), tx_antennas_(tx_antennas) {}

namespace {

Tensor uniform_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

// Bias-free, like every other map in the network. With LeakyReLU this
// keeps the decoders positively homogeneous, so the constrained phases
// and directions do not depend on the overall scale of the input CSI
// (a denoised channel at low SNR arrives with a much smaller norm).
void init_mlp(ParamStore& params, const std::string& prefix, int64_t in_dim,
              int64_t hidden, int64_t hidden_layers, int64_t out_dim, Rng& rng) {
  int64_t d = in_dim;
  for (int64_t i = 0; i < hidden_layers; ++i) {
    params.add(prefix + ".w" + std::to_string(i), uniform_init({hidden, d}, d, rng));
    d = hidden;
  }
  params.add(prefix + ".w" + std::to_string(hidden_layers),
             uniform_init({out_dim, d}, d, rng));
}

}  // namespace

void HmgatModel::init(Rng& rng) {
  params_ = ParamStore();
  const int64_t f0 = 2 * tx_antennas_;
  const int64_t d0 = 6;
  int64_t f_in = f0, d_in = d0;
  for (int64_t l = 0; l < cfg_.layers; ++l) {
    const int64_t f_out = cfg_.node_dim;
    const int64_t d_out = cfg_.edge_dim;
    const std::string lp = "enc" + std::to_string(l);
    for (int64_t m = 0; m < cfg_.heads; ++m) {
      const std::string hp = lp + ".node.head" + std::to_string(m);
      params_.add(hp + ".theta", uniform_init({f_out, f_in}, f_in, rng));
      params_.add(hp + ".edge_proj", uniform_init({d_out, d_in}, d_in, rng));
      params_.add(hp + ".attn", uniform_init({2 * f_out + d_out}, 2 * f_out + d_out, rng));
    }
    params_.add(lp + ".node.res", uniform_init({f_out, f_in}, f_in, rng));
    for (int64_t m = 0; m < cfg_.heads; ++m) {
      const std::string hp = lp + ".edge.head" + std::to_string(m);
      params_.add(hp + ".proj", uniform_init({d_out, d_in}, d_in, rng));
      params_.add(hp + ".src_proj", uniform_init({f_out, f_in}, f_in, rng));
      params_.add(hp + ".attn", uniform_init({2 * d_out + f_out}, 2 * d_out + f_out, rng));
    }
    params_.add(lp + ".edge.res", uniform_init({d_out, d_in}, d_in, rng));
    params_.add(lp + ".edge.node_pair", uniform_init({d_out, 2 * f_in}, 2 * f_in, rng));
    f_in = f_out;
    d_in = d_out;
  }
  init_mlp(params_, "dec.rf", f_in, cfg_.mlp_hidden, cfg_.mlp_layers, 2 * tx_antennas_, rng);
  init_mlp(params_, "dec.power", f_in, cfg_.mlp_hidden, cfg_.mlp_layers, 1, rng);
  init_mlp(params_, "dec.bb", d_in, cfg_.mlp_hidden, cfg_.mlp_layers, 2, rng);
}

std::pair<Var, Var> HmgatModel::encode(Tape& tape, const BeamGraph& graph, bool training,
                                       Rng* dropout_rng) const {
  const int64_t k = graph.users;
  std::vector<int64_t> src(k * k), dst(k * k);
  for (int64_t e = 0; e < k * k; ++e) {
    src[e] = e / k;
    dst[e] = e % k;
  }
  Var x = tape.constant(graph.node_x);
  Var e = tape.constant(graph.edge_e);
  const double inv_heads = 1.0 / static_cast<double>(cfg_.heads);
  const bool use_drop = training && dropout_rng && drop_rate_ > 0.0;
  for (int64_t l = 0; l < cfg_.layers; ++l) {
    const std::string lp = "enc" + std::to_string(l);
    const int64_t f_out = cfg_.node_dim;
    const int64_t d_out = cfg_.edge_dim;

    // node-level message passing
    Var node_agg{};
    for (int64_t m = 0; m < cfg_.heads; ++m) {
      const std::string hp = lp + ".node.head" + std::to_string(m);
      Var u = tape.matmul(x, tape.transpose(tape.param(params_, hp + ".theta")));
      Var w = tape.matmul(e, tape.transpose(tape.param(params_, hp + ".edge_proj")));
      Var a = tape.param(params_, hp + ".attn");
      Var a1 = tape.reshape(tape.slice_flat(a, 0, f_out), {f_out, 1});
      Var a2 = tape.reshape(tape.slice_flat(a, f_out, f_out), {f_out, 1});
      Var a3 = tape.reshape(tape.slice_flat(a, 2 * f_out, d_out), {d_out, 1});
      Var s_dst = tape.matmul(u, a1);                       // K x 1, source-node term
      Var s_src = tape.reshape(tape.matmul(u, a2), {1, k}); // 1 x K, neighbor term
      Var s_edge = tape.reshape(tape.matmul(w, a3), {k, k});
      Var scores = tape.add(tape.add(s_dst, s_src), s_edge);
      scores = tape.leaky_relu(scores, cfg_.leaky_slope);
      Var attn = tape.softmax_rows(scores);
      if (use_drop) attn = tape.dropout(attn, drop_rate_, *dropout_rng, true);
      Var agg = tape.matmul(attn, u);
      node_agg = m == 0 ? agg : tape.add(node_agg, agg);
    }
    Var x_res = tape.matmul(x, tape.transpose(tape.param(params_, lp + ".node.res")));
    Var x_new = tape.add(tape.mul_scalar(node_agg, inv_heads), x_res);

    // edge-level message passing over edges sharing the source node,
    // consuming the pre-update node features
    Var edge_agg{};
    for (int64_t m = 0; m < cfg_.heads; ++m) {
      const std::string hp = lp + ".edge.head" + std::to_string(m);
      Var v = tape.matmul(e, tape.transpose(tape.param(params_, hp + ".proj")));
      Var y = tape.matmul(x, tape.transpose(tape.param(params_, hp + ".src_proj")));
      Var b = tape.param(params_, hp + ".attn");
      Var b1 = tape.reshape(tape.slice_flat(b, 0, d_out), {d_out, 1});
      Var b2 = tape.reshape(tape.slice_flat(b, d_out, d_out), {d_out, 1});
      Var b3 = tape.reshape(tape.slice_flat(b, 2 * d_out, f_out), {f_out, 1});
      Var t_self = tape.matmul(v, b1);                           // K^2 x 1
      Var t_peer = tape.reshape(tape.matmul(v, b2), {k, k});     // row i: edges (i, n)
      Var t_node = tape.matmul(y, b3);                           // K x 1
      Var scores = tape.add(t_self, tape.gather_rows(t_peer, src));
      scores = tape.add(scores, tape.gather_rows(t_node, src));
      scores = tape.leaky_relu(scores, cfg_.leaky_slope);
      Var attn = tape.softmax_rows(scores);  // K^2 x K over same-source edges
      if (use_drop) attn = tape.dropout(attn, drop_rate_, *dropout_rng, true);
      Var agg = tape.attend_rows(attn, v, src);
      edge_agg = m == 0 ? agg : tape.add(edge_agg, agg);
    }
    Var e_res = tape.matmul(e, tape.transpose(tape.param(params_, lp + ".edge.res")));
    Var pair_feats = tape.concat({tape.gather_rows(x, src), tape.gather_rows(x, dst)}, 1);
    Var pair_term =
        tape.matmul(pair_feats, tape.transpose(tape.param(params_, lp + ".edge.node_pair")));
    Var e_new = tape.add(tape.add(tape.mul_scalar(edge_agg, inv_heads), e_res), pair_term);

    x = x_new;
    e = e_new;
  }
  return {x, e};
}

Var HmgatModel::mlp(Tape& tape, Var x, const std::string& prefix, bool training,
                    Rng* dropout_rng) const {
  Var h = x;
  for (int64_t i = 0;; ++i) {
    Var w = tape.param(params_, prefix + ".w" + std::to_string(i));
    h = tape.matmul(h, tape.transpose(w));
    if (i == cfg_.mlp_layers) break;
    h = tape.leaky_relu(h, cfg_.leaky_slope);
    if (training && dropout_rng) h = tape.dropout(h, drop_rate_, *dropout_rng, true);
  }
  return h;
}

HmgatModel::RawOutputs HmgatModel::decode(Tape& tape, Var node_feats, Var edge_feats,
                                          int64_t /*users*/, bool training,
                                          Rng* dropout_rng) const {
  RawOutputs raw;
  raw.rf = mlp(tape, node_feats, "dec.rf", training, dropout_rng);
  raw.power = mlp(tape, node_feats, "dec.power", training, dropout_rng);
  raw.bb = mlp(tape, edge_feats, "dec.bb", training, dropout_rng);
  return raw;
}

HbfVars HmgatModel::constrain(Tape& tape, const RawOutputs& raw,
                              const SystemConfig& config) const {
  const int64_t nt = tx_antennas_;
  const int64_t k = raw.rf.val().shape[0];
  const double eps = cfg_.stabilizer;

  // power: sigmoid then budget normalization
  Var beta = tape.sigmoid(raw.power);  // K x 1
  Var denom = tape.clamp_min(tape.sum_all(beta), 1.0);
  beta = tape.mul_scalar(tape.div(beta, tape.reshape(denom, {1, 1})), config.power_budget);

  // analog: per-entry modulus 1/sqrt(N_T)
  Var rf_re = tape.transpose(tape.slice_cols(raw.rf, 0, nt));   // N_T x K
  Var rf_im = tape.transpose(tape.slice_cols(raw.rf, nt, nt));  // N_T x K
  Var modulus = tape.sqrt(tape.add(tape.square(rf_re), tape.square(rf_im)));
  Var scale = tape.mul_scalar(tape.add_scalar(modulus, eps),
                              std::sqrt(static_cast<double>(nt)));
  CVar analog{tape.div(rf_re, scale), tape.div(rf_im, scale)};

  // digital: normalize each column against the effective precoder
  Var bb_re = tape.transpose(tape.reshape(tape.slice_cols(raw.bb, 0, 1), {k, k}));
  Var bb_im = tape.transpose(tape.reshape(tape.slice_cols(raw.bb, 1, 1), {k, k}));
  CVar digital_raw{bb_re, bb_im};
  CVar eff_raw = cmatmul(tape, analog, digital_raw);
  Var col_norm = tape.add_scalar(tape.sqrt(tape.col_sum(cabs2(tape, eff_raw))), eps);
  CVar digital{tape.div(digital_raw.re, col_norm), tape.div(digital_raw.im, col_norm)};
  CVar effective{tape.div(eff_raw.re, col_norm), tape.div(eff_raw.im, col_norm)};

  return HbfVars{analog, digital, beta, effective};
}

HbfVars HmgatModel::forward(Tape& tape, const BeamGraph& graph, const SystemConfig& config,
                            bool training, Rng* dropout_rng) const {
  auto [node_feats, edge_feats] = encode(tape, graph, training, dropout_rng);
  RawOutputs raw = decode(tape, node_feats, edge_feats, graph.users, training, dropout_rng);
  return constrain(tape, raw, config);
}

namespace {

HbfSolution extract_solution(const HbfVars& vars) {
  HbfSolution sol;
  sol.analog = cval(vars.analog);
  sol.digital = cval(vars.digital);
  const Tensor& beta = vars.power.val();
  sol.power.assign(beta.data.begin(), beta.data.end());
  return sol;
}

}  // namespace

HbfSolution HmgatModel::solve(const ComplexMatrix& h, const SystemConfig& config) const {
  Tape tape;
  const BeamGraph graph = build_graph(h);
  HbfVars vars = forward(tape, graph, config, /*training=*/false, nullptr);
  return extract_solution(vars);
}

HbfSolution constrain_outputs(const Tensor& rf_raw, const Tensor& power_raw,
                              const Tensor& bb_raw, const SystemConfig& config,
                              double stabilizer) {
  HmgatConfig cfg;
  cfg.stabilizer = stabilizer;
  HmgatModel model(cfg, config.tx_antennas);
  Tape tape;
  HmgatModel::RawOutputs raw;
  raw.rf = tape.constant(rf_raw);
  Tensor p = power_raw;
  if (p.rank() == 1) p = Tensor({p.numel(), 1}, p.data);
  raw.power = tape.constant(p);
  raw.bb = tape.constant(bb_raw);
  return extract_solution(model.constrain(tape, raw, config));
}

// ---------------------------------------------------------------------
// rates and loss on the tape
// ---------------------------------------------------------------------

Var sum_rate_var(Tape& tape, const ComplexMatrix& h_true, const HbfVars& sol,
                 double noise_power) {
  const int64_t k = h_true.n_cols;
  CVar h = cvar(tape, h_true);
  CVar gains = cmatmul(tape, cconj_transpose(tape, h), sol.effective);  // K x K
  Var powers = cabs2(tape, gains);
  Var weighted = tape.mul(powers, tape.reshape(sol.power, {1, k}));
  Tensor eye = Tensor::zeros({k, k});
  for (int64_t i = 0; i < k; ++i) eye.at(i, i) = 1.0;
  Var signal = tape.row_sum(tape.mul(weighted, tape.constant(eye)));
  Var interference = tape.sub(tape.row_sum(weighted), signal);
  Var sinr = tape.div(signal, tape.add_scalar(interference, noise_power));
  Var rates = tape.mul_scalar(tape.log(tape.add_scalar(sinr, 1.0)), kLog2e);
  return tape.sum_all(rates);
}

Var hmgat_loss_var(Tape& tape, const HmgatModel& model,
                   const std::vector<const ComplexMatrix*>& batch,
                   const SystemConfig& config, bool training, Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("hmgat loss needs a nonempty batch");
  Var total{};
  for (size_t i = 0; i < batch.size(); ++i) {
    const BeamGraph graph = build_graph(*batch[i]);
    HbfVars vars = model.forward(tape, graph, config, training, dropout_rng);
    Var rate = sum_rate_var(tape, *batch[i], vars, config.noise_power);
    total = i == 0 ? rate : tape.add(total, rate);
  }
  return tape.mul_scalar(total, -1.0 / static_cast<double>(batch.size()));
}

double hmgat_loss(const HmgatModel& model, const std::vector<const ComplexMatrix*>& batch,
                  const SystemConfig& config) {
  Tape tape;
  return hmgat_loss_var(tape, model, batch, config, false, nullptr).val().item();
}

// ---------------------------------------------------------------------
// training
// ---------------------------------------------------------------------

void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn) {
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = static_cast<int>(std::max<int64_t>(1, std::min<int64_t>(workers, n)));
  if (workers == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int64_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

double mean_sum_rate(const HmgatModel& model, const std::vector<ComplexMatrix>& truth,
                     const std::vector<ComplexMatrix>& inputs, int64_t first, int64_t last,
                     const SystemConfig& config, int workers) {
  const int64_t n = last - first;
  if (n <= 0) return 0.0;
  std::vector<double> rates(n, 0.0);
  parallel_for(n, workers, [&](int64_t i) {
    const HbfSolution sol = model.solve(inputs[first + i], config);
    const auto r = achievable_rate(truth[first + i], sol, config.noise_power);
    double s = 0.0;
    for (double v : r) s += v;
    rates[i] = s;
  });
  double total = 0.0;
  for (double v : rates) total += v;
  return total / static_cast<double>(n);
}

HmgatModel train_hmgat(const CsiDataset& ds, const HmgatConfig& cfg,
                       const TrainConfig& train, std::vector<EpochStat>* trace) {
  Rng init_rng = Rng(train.seed).derive(0);
  HmgatModel model(cfg, ds.config.tx_antennas);
  model.init(init_rng);
  model.set_drop_rate(train.dropout);

  AdamWConfig opt_cfg;
  opt_cfg.lr = train.lr;
  opt_cfg.weight_decay = train.weight_decay;
  AdamW opt(opt_cfg);

  std::vector<int64_t> train_idx;
  for (int64_t i = ds.split.train_begin; i < ds.split.train_end; ++i) train_idx.push_back(i);
  if (train_idx.empty()) throw std::invalid_argument("train_hmgat: empty train split");

  Rng shuffle_rng = Rng(train.seed).derive(1);
  ParamStore best = model.params().clone();
  double best_val = -1e300;

  for (int64_t epoch = 0; epoch < train.epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    int64_t steps = 0;
    for (size_t pos = 0; pos < train_idx.size(); pos += train.batch) {
      const int64_t bsz = std::min<int64_t>(train.batch, train_idx.size() - pos);
      std::vector<GradMap> grads(bsz);
      std::vector<double> losses(bsz, 0.0);
      parallel_for(bsz, train.workers, [&](int64_t b) {
        const ComplexMatrix& h = ds.samples[train_idx[pos + b]];
        Rng drop = Rng(train.seed).derive(2).derive(
            static_cast<uint64_t>(epoch) * 1000003u + static_cast<uint64_t>(pos + b));
        Tape tape;
        Var loss = hmgat_loss_var(tape, model, {&h}, ds.config, /*training=*/true, &drop);
        losses[b] = loss.val().item();
        grads[b] = tape.backward(loss);
      });
      GradMap batch_grad;
      for (int64_t b = 0; b < bsz; ++b) {
        if (!std::isfinite(losses[b])) {
          throw DivergenceError("hmgat training diverged at epoch " + std::to_string(epoch));
        }
        epoch_loss += losses[b];
        accumulate(batch_grad, grads[b]);
      }
      scale(batch_grad, 1.0 / static_cast<double>(bsz));
      opt.step(model.params(), batch_grad);
      ++steps;
    }
    epoch_loss /= static_cast<double>(train_idx.size());

    const double val_rate =
        mean_sum_rate(model, ds.samples, ds.samples, ds.split.val_begin, ds.split.val_end,
                      ds.config, train.workers);
    if (trace) trace->push_back({epoch, epoch_loss, val_rate});
    if (val_rate > best_val) {
      best_val = val_rate;
      best = model.params().clone();
    }
  }
  if (train.epochs > 0) model.params().assign_from(best);
  return model;
}

}  // namespace scorebeam
