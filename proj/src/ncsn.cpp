#include "scorebeam/ncsn.hpp"

#include <cmath>
#include <stdexcept>

namespace scorebeam {

// ---------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------

void NoiseSchedule::validate() const {
  if (levels() < 1) throw std::invalid_argument("noise schedule needs at least 1 level");
  for (size_t i = 0; i < noise_vars.size(); ++i) {
    if (noise_vars[i] <= 0.0) throw std::invalid_argument("noise powers must be positive");
    if (i > 0 && noise_vars[i] >= noise_vars[i - 1]) {
      throw std::invalid_argument("noise powers must be strictly descending");
    }
  }
  if (epsilon <= 0.0) throw std::invalid_argument("initial step size must be positive");
  if (iterations < 1) throw std::invalid_argument("need at least one Langevin iteration");
}

double NoiseSchedule::step_size(int64_t level) const {
  return epsilon * (noise_vars.at(level - 1) / noise_vars.back());
}

NoiseSchedule make_schedule(double delta2_max, double delta2_min, int64_t levels,
                            double epsilon, int64_t iterations) {
  if (!(delta2_max > delta2_min) || delta2_min <= 0.0) {
    throw std::invalid_argument("schedule endpoints must satisfy max > min > 0");
  }
  if (levels < 2) throw std::invalid_argument("make_schedule needs at least 2 levels");
  NoiseSchedule s;
  s.epsilon = epsilon;
  s.iterations = iterations;
  s.noise_vars.resize(levels);
  const double log_max = std::log(delta2_max);
  const double log_min = std::log(delta2_min);
  for (int64_t l = 0; l < levels; ++l) {
    const double t = static_cast<double>(l) / static_cast<double>(levels - 1);
    s.noise_vars[l] = std::exp(log_max + t * (log_min - log_max));
  }
  s.noise_vars.front() = delta2_max;
  s.noise_vars.back() = delta2_min;
  s.validate();
  return s;
}

// ---------------------------------------------------------------------
// model
// ---------------------------------------------------------------------

NcsnModel::NcsnModel(NcsnConfig cfg, int64_t tx_antennas, int64_t levels)
    : cfg_(cfg), tx_antennas_(tx_antennas), levels_(levels) {}

void NcsnModel::init(Rng& rng) {
  params_ = ParamStore();
  const int64_t d = cfg_.dim;
  const double embed_bound = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor embed = Tensor::zeros({levels_, d});
  for (double& v : embed.data) v = rng.uniform(-embed_bound, embed_bound);
  params_.add("embed", std::move(embed));

  const double in_bound = 1.0 / std::sqrt(static_cast<double>(2 * tx_antennas_));
  Tensor in_proj = Tensor::zeros({2 * tx_antennas_, d});
  for (double& v : in_proj.data) v = rng.uniform(-in_bound, in_bound);
  params_.add("in_proj", std::move(in_proj));

  const TebParams teb{cfg_.dim, cfg_.ffn_dim, cfg_.heads};
  for (int64_t j = 0; j < cfg_.blocks; ++j) {
    init_teb(params_, "block" + std::to_string(j), teb, rng);
  }

  const double out_bound = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor out_proj = Tensor::zeros({d, 2 * tx_antennas_});
  for (double& v : out_proj.data) v = rng.uniform(-out_bound, out_bound);
  params_.add("out_proj", std::move(out_proj));
}

Var NcsnModel::score_tokens(Tape& tape, Var tokens,
                            const std::vector<int64_t>& level_per_sample, int64_t users,
                            bool training, Rng* dropout_rng) const {
  const int64_t rows = tokens.val().shape[0];
  if (rows != static_cast<int64_t>(level_per_sample.size()) * users) {
    throw std::invalid_argument("token rows disagree with level list");
  }
  std::vector<int64_t> row_level(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t l = level_per_sample[r / users];
    if (l < 1 || l > levels_) throw std::out_of_range("noise level out of range");
    row_level[r] = l - 1;
  }
  Var cond = tape.gather_rows(tape.param(params_, "embed"), row_level);
  Var h = tape.matmul(tokens, tape.param(params_, "in_proj"));
  const TebParams teb{cfg_.dim, cfg_.ffn_dim, cfg_.heads};
  for (int64_t j = 0; j < cfg_.blocks; ++j) {
    h = teb_forward(tape, params_, "block" + std::to_string(j), teb, h, cond, users,
                    drop_rate_, dropout_rng, training);
  }
  return tape.matmul(h, tape.param(params_, "out_proj"));
}

ComplexMatrix NcsnModel::forward(const ComplexMatrix& h_bar, int64_t level) const {
  return forward_batch({h_bar}, level).front();
}

std::vector<ComplexMatrix> NcsnModel::forward_batch(const std::vector<ComplexMatrix>& h_bars,
                                                    int64_t level) const {
  if (h_bars.empty()) return {};
  const int64_t users = h_bars.front().n_cols;
  std::vector<const ComplexMatrix*> ptrs;
  ptrs.reserve(h_bars.size());
  for (const auto& m : h_bars) ptrs.push_back(&m);
  Tape tape;
  Var tokens = tape.constant(csi_tokens(ptrs));
  std::vector<int64_t> levels(h_bars.size(), level);
  Var out = score_tokens(tape, tokens, levels, users, /*training=*/false, nullptr);
  std::vector<ComplexMatrix> result;
  result.reserve(h_bars.size());
  for (size_t b = 0; b < h_bars.size(); ++b) {
    result.push_back(csi_from_rows(out.val(), static_cast<int64_t>(b), users, tx_antennas_));
  }
  return result;
}

// ---------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------

Var ncsn_loss_var(Tape& tape, const ScoreTokensFn& score,
                  const std::vector<const ComplexMatrix*>& batch,
                  const NoiseSchedule& schedule, Rng& noise_rng) {
  if (batch.empty()) throw std::invalid_argument("ncsn loss needs a nonempty batch");
  schedule.validate();
  const int64_t levels = schedule.levels();
  const int64_t nt = batch.front()->n_rows;
  const int64_t users = batch.front()->n_cols;
  const int64_t blocks = static_cast<int64_t>(batch.size()) * levels;

  Tensor tokens = Tensor::zeros({blocks * users, 2 * nt});
  Tensor target = Tensor::zeros({blocks * users, 2 * nt});
  Tensor weight = Tensor::zeros({blocks * users, 1});
  std::vector<int64_t> level_per_block(blocks);
  int64_t block = 0;
  for (const ComplexMatrix* h : batch) {
    for (int64_t l = 1; l <= levels; ++l, ++block) {
      const double var = schedule.variance(l);
      level_per_block[block] = l;
      for (int64_t u = 0; u < users; ++u) {
        const int64_t r = block * users + u;
        weight.at(r, 0) = var;
        for (int64_t t = 0; t < nt; ++t) {
          const std::complex<double> z = noise_rng.cnormal(var);
          tokens.at(r, t) = h->re.at(t, u) + z.real();
          tokens.at(r, nt + t) = h->im.at(t, u) + z.imag();
          target.at(r, t) = z.real() / var;
          target.at(r, nt + t) = z.imag() / var;
        }
      }
    }
  }

  Var s = score(tape, tape.constant(std::move(tokens)), level_per_block);
  Var diff = tape.add(s, tape.constant(std::move(target)));
  Var row_err = tape.row_sum(tape.square(diff));
  Var weighted = tape.mul(row_err, tape.constant(std::move(weight)));
  const double norm = 1.0 / (2.0 * static_cast<double>(levels) *
                             static_cast<double>(batch.size()));
  return tape.mul_scalar(tape.sum_all(weighted), norm);
}

double ncsn_loss(const NcsnModel& model, const std::vector<const ComplexMatrix*>& batch,
                 const NoiseSchedule& schedule, Rng& noise_rng) {
  if (batch.empty()) throw std::invalid_argument("ncsn loss needs a nonempty batch");
  const int64_t users = batch.front()->n_cols;
  Tape tape;
  auto score = [&](Tape& t, Var tokens, const std::vector<int64_t>& lv) {
    return model.score_tokens(t, tokens, lv, users, false, nullptr);
  };
  return ncsn_loss_var(tape, score, batch, schedule, noise_rng).val().item();
}

// ---------------------------------------------------------------------
// annealed Langevin dynamics
// ---------------------------------------------------------------------

std::vector<ComplexMatrix> langevin_sample_batch(const BatchScoreFn& score,
                                                 const NoiseSchedule& schedule,
                                                 int64_t tx_antennas, int64_t users,
                                                 int64_t count, Rng& rng,
                                                 bool inject_noise) {
  schedule.validate();
  std::vector<ComplexMatrix> chains(count, ComplexMatrix(tx_antennas, users));
  for (auto& h : chains) {
    for (int64_t t = 0; t < tx_antennas; ++t) {
      for (int64_t u = 0; u < users; ++u) h.set(t, u, rng.cnormal(1.0));
    }
  }
  for (int64_t level = 1; level <= schedule.levels(); ++level) {
    const double nu = schedule.step_size(level);
    const double drift = nu / 2.0;
    const double diffusion = std::sqrt(nu);
    for (int64_t it = 0; it < schedule.iterations; ++it) {
      const std::vector<ComplexMatrix> scores = score(chains, level);
      if (scores.size() != chains.size()) {
        throw std::runtime_error("score function returned wrong batch size");
      }
      for (int64_t c = 0; c < count; ++c) {
        ComplexMatrix& h = chains[c];
        const ComplexMatrix& s = scores[c];
        for (size_t i = 0; i < h.re.data.size(); ++i) {
          h.re.data[i] += drift * s.re.data[i];
          h.im.data[i] += drift * s.im.data[i];
        }
        if (inject_noise) {
          for (int64_t t = 0; t < tx_antennas; ++t) {
            for (int64_t u = 0; u < users; ++u) {
              const std::complex<double> z = rng.cnormal(1.0);
              h.set(t, u, h.at(t, u) + diffusion * z);
            }
          }
        }
      }
    }
    for (const auto& h : chains) {
      if (!h.all_finite()) {
        throw DivergenceError("Langevin chain diverged at level " + std::to_string(level));
      }
    }
  }
  return chains;
}

ComplexMatrix langevin_sample(const BatchScoreFn& score, const NoiseSchedule& schedule,
                              int64_t tx_antennas, int64_t users, Rng& rng,
                              bool inject_noise) {
  return langevin_sample_batch(score, schedule, tx_antennas, users, 1, rng, inject_noise)
      .front();
}

// ---------------------------------------------------------------------
// training
// ---------------------------------------------------------------------

NcsnModel train_ncsn(const CsiDataset& ds, const NcsnConfig& cfg,
                     const NoiseSchedule& schedule, const TrainConfig& train,
                     std::vector<NcsnEpochStat>* trace) {
  schedule.validate();
  Rng init_rng = Rng(train.seed).derive(10);
  NcsnModel model(cfg, ds.config.tx_antennas, schedule.levels());
  model.init(init_rng);
  model.set_drop_rate(train.dropout);
  const int64_t users = ds.config.users;

  AdamWConfig opt_cfg;
  opt_cfg.lr = train.lr;
  opt_cfg.weight_decay = train.weight_decay;
  AdamW opt(opt_cfg);

  std::vector<int64_t> train_idx;
  for (int64_t i = ds.split.train_begin; i < ds.split.train_end; ++i) train_idx.push_back(i);
  if (train_idx.empty()) throw std::invalid_argument("train_ncsn: empty train split");
  std::vector<const ComplexMatrix*> val;
  for (int64_t i = ds.split.val_begin; i < ds.split.val_end; ++i) val.push_back(&ds.samples[i]);

  Rng shuffle_rng = Rng(train.seed).derive(11);
  Rng noise_base = Rng(train.seed).derive(12);
  ParamStore best = model.params().clone();
  double best_val = 1e300;
  uint64_t step_counter = 0;

  for (int64_t epoch = 0; epoch < train.epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    int64_t seen = 0;
    for (size_t pos = 0; pos < train_idx.size(); pos += train.batch) {
      const int64_t bsz = std::min<int64_t>(train.batch, train_idx.size() - pos);
      std::vector<const ComplexMatrix*> batch;
      for (int64_t b = 0; b < bsz; ++b) batch.push_back(&ds.samples[train_idx[pos + b]]);
      Rng noise_rng = noise_base.derive(step_counter);
      Rng drop_rng = noise_base.derive(step_counter + 0x8000000000000000ull);
      ++step_counter;
      Tape tape;
      auto score = [&](Tape& t, Var tokens, const std::vector<int64_t>& lv) {
        return model.score_tokens(t, tokens, lv, users, true, &drop_rng);
      };
      Var loss = ncsn_loss_var(tape, score, batch, schedule, noise_rng);
      const double lv = loss.val().item();
      if (!std::isfinite(lv)) {
        throw DivergenceError("ncsn training diverged at epoch " + std::to_string(epoch));
      }
      epoch_loss += lv * static_cast<double>(bsz);
      seen += bsz;
      GradMap grads = tape.backward(loss);
      opt.step(model.params(), grads);
    }
    epoch_loss /= static_cast<double>(seen);

    double val_loss = 0.0;
    if (!val.empty()) {
      Rng val_rng = Rng(train.seed).derive(13);  // same draws every epoch
      val_loss = ncsn_loss(model, val, schedule, val_rng);
    }
    if (trace) trace->push_back({epoch, epoch_loss, val_loss});
    if (val.empty() || val_loss < best_val) {
      best_val = val_loss;
      best = model.params().clone();
    }
  }
  if (train.epochs > 0) model.params().assign_from(best);
  return model;
}

}  // namespace scorebeam
