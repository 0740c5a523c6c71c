#include "scorebeam/dsn.hpp"

#include <cmath>
#include <stdexcept>

namespace scorebeam {

DenoiseNet::DenoiseNet(DsnConfig cfg, int64_t tx_antennas)
    : cfg_(cfg), tx_antennas_(tx_antennas) {}

namespace {

Tensor uniform_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

void DenoiseNet::init(Rng& rng) {
  params_ = ParamStore();
  const int64_t d = cfg_.dim;
  params_.add("level.w", uniform_init({1, d}, 1, rng));
  params_.add("level.b", uniform_init({1, d}, 1, rng));
  params_.add("in_proj", uniform_init({2 * tx_antennas_, d}, 2 * tx_antennas_, rng));
  const TebParams teb{cfg_.dim, cfg_.ffn_dim, cfg_.heads};
  for (int64_t j = 0; j < cfg_.blocks; ++j) {
    init_teb(params_, "score" + std::to_string(j), teb, rng);
  }
  init_teb(params_, "denoise", teb, rng);
  params_.add("head.score", uniform_init({d, 2 * tx_antennas_}, d, rng));
  params_.add("head.delta", uniform_init({d, 2 * tx_antennas_}, d, rng));
  params_.add("head.step.w", uniform_init({1, 2}, 1, rng));
  params_.add("head.step.b", uniform_init({1, 2}, 1, rng));
}

DenoiseNet::TokenOutputs DenoiseNet::forward_tokens(Tape& tape, Var tokens, double delta_e,
                                                    int64_t users, bool training,
                                                    Rng* dropout_rng) const {
  if (delta_e < 0.0) throw std::invalid_argument("error level must be >= 0");
  // c = w * delta_E + b, a single conditioning row shared by the batch
  Var cond = tape.add(tape.mul_scalar(tape.param(params_, "level.w"), delta_e),
                      tape.param(params_, "level.b"));

  Var h = tape.matmul(tokens, tape.param(params_, "in_proj"));
  const Var input_tokens = h;
  const TebParams teb{cfg_.dim, cfg_.ffn_dim, cfg_.heads};
  for (int64_t j = 0; j < cfg_.blocks; ++j) {
    h = teb_forward(tape, params_, "score" + std::to_string(j), teb, h, cond, users,
                    drop_rate_, dropout_rng, training);
  }
  const Var score_feats = h;
  Var de = teb_forward(tape, params_, "denoise", teb, tape.add(input_tokens, score_feats),
                       cond, users, drop_rate_, dropout_rng, training);

  TokenOutputs out;
  out.score_rows = tape.matmul(score_feats, tape.param(params_, "head.score"));
  out.delta_rows = tape.matmul(de, tape.param(params_, "head.delta"));
  Var pooled = tape.mul_scalar(tape.row_sum(de), 1.0 / static_cast<double>(cfg_.dim));
  out.eta_rows = tape.add(tape.matmul(pooled, tape.param(params_, "head.step.w")),
                          tape.param(params_, "head.step.b"));
  return out;
}

namespace {

// H_hat tokens = H_tilde tokens + eta (x) delta, complex per token row.
struct RefinedTokens {
  Var real;  // (B*K) x N_T
  Var imag;  // (B*K) x N_T
};

RefinedTokens refine_tokens(Tape& tape, Var noisy_tokens,
                            const DenoiseNet::TokenOutputs& out, int64_t nt) {
  Var d_re = tape.slice_cols(out.delta_rows, 0, nt);
  Var d_im = tape.slice_cols(out.delta_rows, nt, nt);
  Var e_re = tape.slice_cols(out.eta_rows, 0, 1);
  Var e_im = tape.slice_cols(out.eta_rows, 1, 1);
  Var h_re = tape.slice_cols(noisy_tokens, 0, nt);
  Var h_im = tape.slice_cols(noisy_tokens, nt, nt);
  RefinedTokens r;
  r.real = tape.add(h_re, tape.sub(tape.mul(e_re, d_re), tape.mul(e_im, d_im)));
  r.imag = tape.add(h_im, tape.add(tape.mul(e_re, d_im), tape.mul(e_im, d_re)));
  return r;
}

}  // namespace

DenoiseResult DenoiseNet::forward(const ComplexMatrix& h_tilde, double delta_e) const {
  const int64_t users = h_tilde.n_cols;
  const int64_t nt = h_tilde.n_rows;
  Tape tape;
  Var tokens = tape.constant(csi_tokens({&h_tilde}));
  TokenOutputs out = forward_tokens(tape, tokens, delta_e, users, false, nullptr);
  DenoiseResult res;
  res.score = csi_from_rows(out.score_rows.val(), 0, users, nt);
  res.direction = csi_from_rows(out.delta_rows.val(), 0, users, nt);
  const Tensor& eta = out.eta_rows.val();
  res.step.resize(users);
  for (int64_t u = 0; u < users; ++u) res.step[u] = {eta.at(u, 0), eta.at(u, 1)};
  res.refined = h_tilde;
  for (int64_t u = 0; u < users; ++u) {
    for (int64_t t = 0; t < nt; ++t) {
      res.refined.set(t, u, h_tilde.at(t, u) + res.step[u] * res.direction.at(t, u));
    }
  }
  return res;
}

Var dsn_loss_var(Tape& tape, const DenoiseNet& model,
                 const std::vector<const ComplexMatrix*>& clean,
                 const std::vector<const ComplexMatrix*>& noisy, double delta_e,
                 double lambda, bool training, Rng* dropout_rng) {
  if (clean.empty() || clean.size() != noisy.size()) {
    throw std::invalid_argument("dsn loss needs matching nonempty batches");
  }
  if (delta_e <= 0.0) {
    throw std::invalid_argument("dsn loss needs a positive error level for the score term");
  }
  const int64_t batch = static_cast<int64_t>(clean.size());
  const int64_t nt = clean.front()->n_rows;
  const int64_t users = clean.front()->n_cols;
  const double var_e = delta_e * delta_e;

  Var noisy_tokens = tape.constant(csi_tokens(noisy));
  auto out = model.forward_tokens(tape, noisy_tokens, delta_e, users, training, dropout_rng);

  // score term: var_E || S + (H_tilde - H)/var_E ||^2 per sample
  Tensor target = csi_tokens(noisy);
  {
    const Tensor clean_tokens = csi_tokens(clean);
    for (size_t i = 0; i < target.data.size(); ++i) {
      target.data[i] = (target.data[i] - clean_tokens.data[i]) / var_e;
    }
  }
  Var diff = tape.add(out.score_rows, tape.constant(std::move(target)));
  Var per_row = tape.row_sum(tape.square(diff));            // (B*K) x 1
  Var per_sample = tape.row_sum(tape.reshape(per_row, {batch, users}));
  Var score_term = tape.mul_scalar(per_sample, var_e);      // B x 1

  // reconstruction term: ||H - H_hat||_F / ||H||_F per sample
  RefinedTokens refined = refine_tokens(tape, noisy_tokens, out, nt);
  Var c_all = tape.constant(csi_tokens(clean));
  Var c_re = tape.slice_cols(c_all, 0, nt);
  Var c_im = tape.slice_cols(c_all, nt, nt);
  Var err = tape.add(tape.square(tape.sub(refined.real, c_re)),
                     tape.square(tape.sub(refined.imag, c_im)));
  Var err_per_sample = tape.row_sum(tape.reshape(tape.row_sum(err), {batch, users}));
  Tensor ref_norm = Tensor::zeros({batch, 1});
  for (int64_t b = 0; b < batch; ++b) {
    const double norm = clean[b]->frobenius_norm();
    if (norm == 0.0) throw std::invalid_argument("dsn loss: zero reference channel");
    ref_norm.at(b, 0) = norm;
  }
  Var rec_term = tape.div(tape.sqrt(err_per_sample), tape.constant(std::move(ref_norm)));

  Var total = tape.add(score_term, tape.mul_scalar(rec_term, lambda));
  return tape.mul_scalar(tape.sum_all(total), 1.0 / static_cast<double>(batch));
}

double dsn_loss(const DenoiseNet& model, const ComplexMatrix& clean,
                const ComplexMatrix& noisy, double delta_e, double lambda) {
  Tape tape;
  return dsn_loss_var(tape, model, {&clean}, {&noisy}, delta_e, lambda, false, nullptr)
      .val()
      .item();
}

ComplexMatrix denoise(const DenoiseNet& model, const ComplexMatrix& h_tilde,
                      double delta_e) {
  return model.forward(h_tilde, delta_e).refined;
}

DenoiseNet train_dsn(const CsiDataset& ds, const std::vector<ErrorLevel>& levels,
                     const DsnConfig& cfg, const TrainConfig& train,
                     std::vector<DsnEpochStat>* trace) {
  if (levels.empty()) throw std::invalid_argument("train_dsn needs error levels");
  for (const auto& l : levels) {
    if (l.variance <= 0.0) throw std::invalid_argument("training error levels must be > 0");
  }
  Rng init_rng = Rng(train.seed).derive(20);
  DenoiseNet model(cfg, ds.config.tx_antennas);
  model.init(init_rng);
  model.set_drop_rate(train.dropout);

  AdamWConfig opt_cfg;
  opt_cfg.lr = train.lr;
  opt_cfg.weight_decay = train.weight_decay;
  AdamW opt(opt_cfg);

  std::vector<int64_t> train_idx;
  for (int64_t i = ds.split.train_begin; i < ds.split.train_end; ++i) train_idx.push_back(i);
  if (train_idx.empty()) throw std::invalid_argument("train_dsn: empty train split");

  Rng shuffle_rng = Rng(train.seed).derive(21);
  Rng noise_base = Rng(train.seed).derive(22);
  ParamStore best = model.params().clone();
  double best_val = 1e300;
  uint64_t step_counter = 0;

  for (int64_t epoch = 0; epoch < train.epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    int64_t seen = 0;
    for (size_t pos = 0; pos < train_idx.size(); pos += train.batch) {
      const int64_t bsz = std::min<int64_t>(train.batch, train_idx.size() - pos);
      Rng step_rng = noise_base.derive(step_counter);
      Rng drop_rng = noise_base.derive(step_counter + 0x8000000000000000ull);
      ++step_counter;
      const ErrorLevel level = levels[step_rng.uniform_int(levels.size())];
      std::vector<const ComplexMatrix*> clean;
      std::vector<ComplexMatrix> noisy_storage;
      noisy_storage.reserve(bsz);
      for (int64_t b = 0; b < bsz; ++b) {
        const ComplexMatrix& h = ds.samples[train_idx[pos + b]];
        clean.push_back(&h);
        noisy_storage.push_back(perturb_csi(h, level, step_rng));
      }
      std::vector<const ComplexMatrix*> noisy;
      for (const auto& m : noisy_storage) noisy.push_back(&m);

      Tape tape;
      Var loss = dsn_loss_var(tape, model, clean, noisy, std::sqrt(level.variance),
                              cfg.lambda, true, &drop_rng);
      const double lv = loss.val().item();
      if (!std::isfinite(lv)) {
        throw DivergenceError("dsn training diverged at epoch " + std::to_string(epoch));
      }
      epoch_loss += lv * static_cast<double>(bsz);
      seen += bsz;
      GradMap grads = tape.backward(loss);
      opt.step(model.params(), grads);
    }
    epoch_loss /= static_cast<double>(seen);

    // validation: post/pre NRE ratio averaged over the configured levels
    // (level-balanced, unlike the absolute NRE which the largest error
    // level dominates), with a fixed perturbation stream so epochs are
    // comparable
    double val_ratio = 0.0;
    const int64_t val_n = ds.split.val_count();
    if (val_n > 0) {
      Rng val_rng = Rng(train.seed).derive(23);
      int64_t count = 0;
      for (const auto& level : levels) {
        for (int64_t i = ds.split.val_begin; i < ds.split.val_end; ++i) {
          const ComplexMatrix noisy = perturb_csi(ds.samples[i], level, val_rng);
          const ComplexMatrix refined =
              denoise(model, noisy, std::sqrt(level.variance));
          const double pre = (ds.samples[i] - noisy).frobenius_norm();
          const double post = (ds.samples[i] - refined).frobenius_norm();
          val_ratio += post / pre;
          ++count;
        }
      }
      val_ratio /= static_cast<double>(count);
    }
    if (trace) trace->push_back({epoch, epoch_loss, val_ratio});
    if (val_n == 0 || val_ratio < best_val) {
      best_val = val_ratio;
      best = model.params().clone();
    }
  }
  if (train.epochs > 0) model.params().assign_from(best);
  return model;
}

}  // namespace scorebeam
