// Command-line front end tying the pipeline together: dataset synthesis,
// HMGAT / NCSN / DSN training, Langevin CSI generation, denoising,
// baselines and evaluation. Every command snapshots its configuration
// into the output directory so runs can be replayed from (config, seed).

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "scorebeam/baselines.hpp"
#include "scorebeam/checkpoint.hpp"
#include "scorebeam/dsn.hpp"
#include "scorebeam/metrics.hpp"
#include "scorebeam/ncsn.hpp"
#include "scorebeam/runconfig.hpp"

namespace fs = std::filesystem;
using namespace scorebeam;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;

fs::path prepare_out(const std::string& out_dir, const RunConfig& cfg) {
  fs::path out(out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out.string());
  cfg.save((out / "config.json").string());
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << header << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) os << ",";
      os << fmt(row[i]);
    }
    os << "\n";
  }
}

void write_summary(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

HmgatModel load_hmgat(const std::string& model_path, const RunConfig& cfg) {
  HmgatModel model(cfg.hmgat, cfg.system.tx_antennas);
  Rng rng(0);
  model.init(rng);
  load_checkpoint_strict(model.params(), model_path);
  return model;
}

NcsnModel load_ncsn(const std::string& model_path, const RunConfig& cfg) {
  NcsnModel model(cfg.ncsn, cfg.system.tx_antennas, cfg.noise_levels);
  Rng rng(0);
  model.init(rng);
  load_checkpoint_strict(model.params(), model_path);
  return model;
}

DenoiseNet load_dsn(const std::string& model_path, const RunConfig& cfg) {
  DenoiseNet model(cfg.dsn, cfg.system.tx_antennas);
  Rng rng(0);
  model.init(rng);
  load_checkpoint_strict(model.params(), model_path);
  return model;
}

// ---- commands --------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir, int64_t count) {
  cfg.system.validate();
  const fs::path out = prepare_out(out_dir, cfg);
  CsiDataset ds = make_dataset(cfg.system, count);
  const fs::path file = out / "dataset.csid";
  write_dataset(ds, file.string());
  write_manifest(file.string(), ds);
  std::cout << "wrote " << file.string() << " (" << ds.samples.size() << " samples, split "
            << ds.split.train_count() << "/" << ds.split.val_count() << "/"
            << ds.split.test_count() << ")\n";
  return kExitOk;
}

int cmd_train_hmgat(const RunConfig& cfg, const std::string& out_dir,
                    const std::string& data_path) {
  const fs::path out = prepare_out(out_dir, cfg);
  CsiDataset ds = load_dataset(data_path, cfg.system);
  std::vector<EpochStat> trace;
  HmgatModel model = train_hmgat(ds, cfg.hmgat, cfg.train, &trace);
  save_checkpoint(model.params(), (out / "hmgat.bswt").string());
  std::vector<std::vector<double>> rows;
  for (const auto& s : trace) {
    rows.push_back({static_cast<double>(s.epoch), s.train_loss, s.val_sum_rate});
  }
  write_csv(out / "trace.csv", "epoch,train_loss,val_sum_rate", rows);
  const double test_rate =
      mean_sum_rate(model, ds.samples, ds.samples, ds.split.test_begin, ds.split.test_end,
                    ds.config, cfg.train.workers);
  write_summary(out / "summary.json", json{{"metric", "sum_rate"},
                                           {"value", test_rate},
                                           {"split", "test"},
                                           {"config_hash", cfg.hash()}});
  std::cout << "test mean sum rate: " << test_rate << " bit/s/Hz\n";
  return kExitOk;
}

int cmd_train_ncsn(const RunConfig& cfg, const std::string& out_dir,
                   const std::string& data_path) {
  const fs::path out = prepare_out(out_dir, cfg);
  CsiDataset ds = load_dataset(data_path, cfg.system);
  std::vector<NcsnEpochStat> trace;
  NcsnModel model = train_ncsn(ds, cfg.ncsn, cfg.schedule(), cfg.train, &trace);
  save_checkpoint(model.params(), (out / "ncsn.bswt").string());
  std::vector<std::vector<double>> rows;
  for (const auto& s : trace) {
    rows.push_back({static_cast<double>(s.epoch), s.train_loss, s.val_loss});
  }
  write_csv(out / "trace.csv", "epoch,train_loss,val_loss", rows);
  std::cout << "final validation loss: " << (trace.empty() ? 0.0 : trace.back().val_loss)
            << "\n";
  return kExitOk;
}

int cmd_sample_csi(const RunConfig& cfg, const std::string& out_dir,
                   const std::string& model_path, int64_t count) {
  const fs::path out = prepare_out(out_dir, cfg);
  NcsnModel model = load_ncsn(model_path, cfg);
  const NoiseSchedule schedule = cfg.schedule();
  Rng rng = Rng(cfg.system.seed).derive(0xCA11);
  auto score = [&](const std::vector<ComplexMatrix>& h, int64_t level) {
    return model.forward_batch(h, level);
  };
  // chains are independent; chunking bounds peak memory
  std::vector<ComplexMatrix> generated;
  generated.reserve(count);
  constexpr int64_t kChunk = 256;
  for (int64_t done = 0; done < count; done += kChunk) {
    const int64_t n = std::min(kChunk, count - done);
    Rng chunk_rng = rng.derive(static_cast<uint64_t>(done));
    auto chunk = langevin_sample_batch(score, schedule, cfg.system.tx_antennas,
                                       cfg.system.users, n, chunk_rng);
    for (auto& m : chunk) generated.push_back(std::move(m));
  }
  CsiDataset ds;
  ds.config = cfg.system;
  ds.samples = std::move(generated);
  ds.split.train_begin = 0;
  ds.split.train_end = static_cast<int64_t>(ds.samples.size());
  ds.split.val_begin = ds.split.val_end = ds.split.train_end;
  ds.split.test_begin = ds.split.test_end = ds.split.train_end;
  const fs::path file = out / "generated.csid";
  write_dataset(ds, file.string());
  write_manifest(file.string(), ds);
  std::cout << "wrote " << file.string() << " (" << ds.samples.size() << " samples)\n";
  return kExitOk;
}

int cmd_train_dsn(const RunConfig& cfg, const std::string& out_dir,
                  const std::string& data_path) {
  const fs::path out = prepare_out(out_dir, cfg);
  CsiDataset ds = load_dataset(data_path, cfg.system);
  std::vector<DsnEpochStat> trace;
  DenoiseNet model = train_dsn(ds, cfg.dsn_levels(), cfg.dsn, cfg.train, &trace);
  save_checkpoint(model.params(), (out / "dsn.bswt").string());
  std::vector<std::vector<double>> rows;
  for (const auto& s : trace) {
    rows.push_back({static_cast<double>(s.epoch), s.train_loss, s.val_nre_ratio});
  }
  write_csv(out / "trace.csv", "epoch,train_loss,val_nre_ratio", rows);
  std::cout << "final validation NRE ratio: " << (trace.empty() ? 0.0 : trace.back().val_nre_ratio)
            << "\n";
  return kExitOk;
}

int cmd_denoise(const RunConfig& cfg, const std::string& out_dir,
                const std::string& model_path, const std::string& data_path,
                double error_db) {
  const fs::path out = prepare_out(out_dir, cfg);
  DenoiseNet model = load_dsn(model_path, cfg);
  CsiDataset ds = load_dataset(data_path, cfg.system);
  const double delta_e = std::sqrt(ErrorLevel::from_db(error_db).variance);
  for (auto& sample : ds.samples) sample = denoise(model, sample, delta_e);
  const fs::path file = out / "denoised.csid";
  write_dataset(ds, file.string());
  write_manifest(file.string(), ds);
  std::cout << "wrote " << file.string() << "\n";
  return kExitOk;
}

std::pair<int64_t, int64_t> split_range(const CsiDataset& ds, const std::string& split) {
  if (split == "train") return {ds.split.train_begin, ds.split.train_end};
  if (split == "val") return {ds.split.val_begin, ds.split.val_end};
  if (split == "test") return {ds.split.test_begin, ds.split.test_end};
  if (split == "all") return {0, static_cast<int64_t>(ds.samples.size())};
  throw std::invalid_argument("unknown split: " + split);
}

int cmd_baseline(const RunConfig& cfg, const std::string& out_dir, const std::string& kind,
                 const std::string& data_path, const std::string& split) {
  const fs::path out = prepare_out(out_dir, cfg);
  CsiDataset ds = load_dataset(data_path, cfg.system);
  const auto [first, last] = split_range(ds, split);
  BaselineKind bk;
  if (kind == "pzf") {
    bk = BaselineKind::pzf;
  } else if (kind == "random") {
    bk = BaselineKind::equal_power_random;
  } else {
    throw std::invalid_argument("unknown baseline kind: " + kind);
  }
  Rng rng = Rng(cfg.system.seed).derive(0xBA5E);
  auto solver = [&](const ComplexMatrix& h) { return run_baseline(bk, h, ds.config, rng); };
  const SumRateSummary summary =
      evaluate_sum_rates(ds.samples, first, last, solver, ds.config.noise_power);
  std::vector<std::vector<double>> rows;
  for (size_t i = 0; i < summary.per_sample.size(); ++i) {
    rows.push_back({static_cast<double>(first + static_cast<int64_t>(i)),
                    summary.per_sample[i]});
  }
  write_csv(out / ("baseline_" + kind + ".csv"), "sample,sum_rate", rows);
  std::cout << kind << " mean sum rate (" << split << "): " << summary.mean
            << " bit/s/Hz\n";
  return kExitOk;
}

int cmd_eval_rate(const RunConfig& cfg, const std::string& out_dir,
                  const std::string& solver_name, const std::string& model_path,
                  const std::string& dsn_path, const std::string& data_path,
                  const std::string& split, double error_db, bool has_error) {
  const fs::path out = prepare_out(out_dir, cfg);
  CsiDataset ds = load_dataset(data_path, cfg.system);
  const auto [first, last] = split_range(ds, split);

  std::optional<HmgatModel> hmgat;
  if (solver_name == "hmgat") {
    if (model_path.empty()) throw std::invalid_argument("eval: --model required for hmgat");
    hmgat.emplace(load_hmgat(model_path, cfg));
  }
  std::optional<DenoiseNet> dsn;
  if (!dsn_path.empty()) dsn.emplace(load_dsn(dsn_path, cfg));

  const ErrorLevel level = has_error ? ErrorLevel::from_db(error_db) : ErrorLevel{0.0};
  const double delta_e = std::sqrt(level.variance);
  Rng perturb_base = Rng(cfg.system.seed).derive(0xE7A1);
  Rng baseline_rng = Rng(cfg.system.seed).derive(0xBA5E);

  std::vector<double> rates;
  double total = 0.0;
  for (int64_t i = first; i < last; ++i) {
    const ComplexMatrix& truth = ds.samples[i];
    ComplexMatrix input = truth;
    if (has_error && level.variance > 0.0) {
      Rng stream = perturb_base.derive(static_cast<uint64_t>(i));
      input = perturb_csi(truth, level, stream);
    }
    if (dsn) input = denoise(*dsn, input, delta_e);
    HbfSolution sol;
    if (solver_name == "pzf") {
      sol = pzf(input, ds.config);
    } else if (solver_name == "random") {
      sol = equal_power_random(input, ds.config, baseline_rng);
    } else if (solver_name == "hmgat") {
      sol = hmgat->solve(input, ds.config);
    } else {
      throw std::invalid_argument("unknown solver: " + solver_name);
    }
    const auto r = achievable_rate(truth, sol, ds.config.noise_power);
    double s = 0.0;
    for (double v : r) s += v;
    rates.push_back(s);
    total += s;
  }
  const double mean = rates.empty() ? 0.0 : total / static_cast<double>(rates.size());
  std::vector<std::vector<double>> rows;
  for (size_t i = 0; i < rates.size(); ++i) {
    rows.push_back({static_cast<double>(first + static_cast<int64_t>(i)), rates[i]});
  }
  write_csv(out / "rates.csv", "sample,sum_rate", rows);
  json j{{"metric", "sum_rate"},  {"value", mean},
         {"split", split},        {"solver", solver_name},
         {"config_hash", cfg.hash()}};
  if (has_error) {
    j["error_db"] = error_db;
    j["denoised"] = static_cast<bool>(dsn);
  }
  write_summary(out / "summary.json", j);
  std::cout << "mean sum rate (" << split << ", " << solver_name << "): " << mean
            << " bit/s/Hz\n";
  return kExitOk;
}

int cmd_eval_gen(const RunConfig& cfg, const std::string& out_dir,
                 const std::string& data_path, const std::string& ref_path, int bins) {
  const fs::path out = prepare_out(out_dir, cfg);
  CsiDataset gen = load_dataset(data_path);
  CsiDataset ref = load_dataset(ref_path);
  const double js_re = js_divergence(pool_real(gen.samples), pool_real(ref.samples), bins);
  const double js_im = js_divergence(pool_imag(gen.samples), pool_imag(ref.samples), bins);
  const double js_mag =
      js_divergence(pool_magnitude(gen.samples), pool_magnitude(ref.samples), bins);
  // KS over per-sample PZF sum rates, the paper's performance-distribution probe
  auto solver = [&](const ComplexMatrix& h) { return pzf(h, ref.config); };
  const auto gen_rates = evaluate_sum_rates(gen.samples, 0, gen.samples.size(), solver,
                                            ref.config.noise_power);
  const auto ref_rates = evaluate_sum_rates(ref.samples, 0, ref.samples.size(), solver,
                                            ref.config.noise_power);
  const double ks = ks_statistic(gen_rates.per_sample, ref_rates.per_sample);
  json j{{"js_real", js_re},
         {"js_imag", js_im},
         {"js_magnitude", js_mag},
         {"ks_pzf_sum_rate", ks},
         {"bins", bins},
         {"config_hash", cfg.hash()}};
  write_summary(out / "summary.json", j);
  std::cout << "JS real/imag/magnitude: " << js_re << " / " << js_im << " / " << js_mag
            << ", KS(pzf rates): " << ks << "\n";
  return kExitOk;
}

int cmd_augment(const RunConfig& cfg, const std::string& out_dir,
                const std::string& base_path, const std::string& extra_path) {
  const fs::path out = prepare_out(out_dir, cfg);
  CsiDataset base = load_dataset(base_path);
  CsiDataset merged;
  merged.config = base.config;
  int64_t extra_count = 0;
  // order: base train, generated extras, base val, base test — so every
  // split stays a contiguous range and val/test are untouched
  for (int64_t i = base.split.train_begin; i < base.split.train_end; ++i) {
    merged.samples.push_back(base.samples[i]);
  }
  if (!extra_path.empty()) {
    CsiDataset extra = load_dataset(extra_path);
    if (extra.config.users != base.config.users ||
        extra.config.tx_antennas != base.config.tx_antennas) {
      throw std::runtime_error("augment: dataset shapes disagree");
    }
    extra_count = static_cast<int64_t>(extra.samples.size());
    for (auto& s : extra.samples) merged.samples.push_back(std::move(s));
  }
  for (int64_t i = base.split.val_begin; i < base.split.val_end; ++i) {
    merged.samples.push_back(base.samples[i]);
  }
  for (int64_t i = base.split.test_begin; i < base.split.test_end; ++i) {
    merged.samples.push_back(base.samples[i]);
  }
  merged.split.train_begin = 0;
  merged.split.train_end = base.split.train_count() + extra_count;
  merged.split.val_begin = merged.split.train_end;
  merged.split.val_end = merged.split.val_begin + base.split.val_count();
  merged.split.test_begin = merged.split.val_end;
  merged.split.test_end = merged.split.test_begin + base.split.test_count();
  const fs::path file = out / "augmented.csid";
  write_dataset(merged, file.string());
  write_manifest(file.string(), merged);
  std::cout << "wrote " << file.string() << " (train " << merged.split.train_count()
            << ", val " << merged.split.val_count() << ", test "
            << merged.split.test_count() << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid beamforming with score-based CSI generation and denoising"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "run";
  int64_t seed = -1;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "override config seeds");
  app.add_option("--out", out_dir, "output directory");

  int64_t count = 1000;
  std::string data_path, model_path, dsn_path, ref_path;
  std::string kind = "pzf", split = "test", solver = "pzf", task = "rate";
  double error_db = 0.0;
  int bins = 50;
  int64_t epochs = -1;
  std::string levels_db;

  auto* gen = app.add_subcommand("gen-data", "synthesize a CSI dataset");
  gen->add_option("--count", count, "number of samples")->required();

  auto* th = app.add_subcommand("train-hmgat", "train the beamforming network");
  th->add_option("--data", data_path, "dataset file")->required();
  th->add_option("--epochs", epochs, "override training epochs");

  auto* tn = app.add_subcommand("train-ncsn", "train the CSI score network");
  tn->add_option("--data", data_path, "dataset file")->required();
  tn->add_option("--epochs", epochs, "override training epochs");

  auto* sc = app.add_subcommand("sample-csi", "generate CSI via annealed Langevin dynamics");
  sc->add_option("--model", model_path, "NCSN checkpoint")->required();
  sc->add_option("--count", count, "number of samples")->required();

  auto* td = app.add_subcommand("train-dsn", "train the CSI denoiser");
  td->add_option("--data", data_path, "dataset file")->required();
  td->add_option("--epochs", epochs, "override training epochs");
  td->add_option("--levels-db", levels_db, "comma-separated training error levels (dB)");

  auto* dn = app.add_subcommand("denoise", "denoise an imperfect-CSI dataset");
  dn->add_option("--model", model_path, "DSN checkpoint")->required();
  dn->add_option("--data", data_path, "dataset file")->required();
  dn->add_option("--error-db", error_db, "error variance in dB")->required();

  auto* bl = app.add_subcommand("baseline", "classical solver sum rates");
  bl->add_option("--kind", kind, "pzf or random");
  bl->add_option("--data", data_path, "dataset file")->required();
  bl->add_option("--split", split, "train/val/test/all");

  auto* ev = app.add_subcommand("eval", "evaluate solvers or generated data");
  ev->add_option("--task", task, "rate or gen-metrics");
  ev->add_option("--solver", solver, "pzf, random or hmgat");
  ev->add_option("--model", model_path, "HMGAT checkpoint (solver hmgat)");
  ev->add_option("--dsn", dsn_path, "optional DSN checkpoint applied to inputs");
  ev->add_option("--data", data_path, "dataset file")->required();
  ev->add_option("--ref", ref_path, "reference dataset (gen-metrics)");
  ev->add_option("--split", split, "train/val/test/all");
  auto* err_opt = ev->add_option("--error-db", error_db, "perturb inputs at this level");
  ev->add_option("--bins", bins, "histogram bins (gen-metrics)");

  auto* au = app.add_subcommand("augment", "append generated samples to a train split");
  au->add_option("--base", data_path, "base dataset")->required();
  au->add_option("--extra", ref_path, "generated dataset (may be omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      cfg = RunConfig::load(config_path);
    } else if (!model_path.empty()) {
      const fs::path sidecar = fs::path(model_path).parent_path() / "config.json";
      if (fs::exists(sidecar)) cfg = RunConfig::load(sidecar.string());
    }
    if (seed >= 0) {
      cfg.system.seed = static_cast<uint64_t>(seed);
      cfg.train.seed = static_cast<uint64_t>(seed);
    }
    if (epochs >= 0) cfg.train.epochs = epochs;
    if (!levels_db.empty()) {
      cfg.dsn_levels_db.clear();
      std::stringstream ss(levels_db);
      std::string tok;
      while (std::getline(ss, tok, ',')) cfg.dsn_levels_db.push_back(std::stod(tok));
    }

    if (gen->parsed()) return cmd_gen_data(cfg, out_dir, count);
    if (th->parsed()) return cmd_train_hmgat(cfg, out_dir, data_path);
    if (tn->parsed()) return cmd_train_ncsn(cfg, out_dir, data_path);
    if (sc->parsed()) return cmd_sample_csi(cfg, out_dir, model_path, count);
    if (td->parsed()) return cmd_train_dsn(cfg, out_dir, data_path);
    if (dn->parsed()) return cmd_denoise(cfg, out_dir, model_path, data_path, error_db);
    if (bl->parsed()) return cmd_baseline(cfg, out_dir, kind, data_path, split);
    if (ev->parsed()) {
      if (task == "rate") {
        return cmd_eval_rate(cfg, out_dir, solver, model_path, dsn_path, data_path, split,
                             error_db, err_opt->count() > 0);
      }
      if (task == "gen-metrics") {
        if (ref_path.empty()) throw std::invalid_argument("gen-metrics needs --ref");
        return cmd_eval_gen(cfg, out_dir, data_path, ref_path, bins);
      }
      throw std::invalid_argument("unknown eval task: " + task);
    }
    if (au->parsed()) return cmd_augment(cfg, out_dir, data_path, ref_path);
    throw std::invalid_argument("no command given");
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}
