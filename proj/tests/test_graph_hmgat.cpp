#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "scorebeam/baselines.hpp"
#include "scorebeam/channel.hpp"
#include "scorebeam/hmgat.hpp"

using namespace scorebeam;

namespace {

SystemConfig micro_system(int64_t users = 3, int64_t nt = 4) {
  SystemConfig c;
  c.users = users;
  c.tx_antennas = nt;
  c.rf_chains = users;
  c.paths = 4;
  c.seed = 7;
  return c;
}

HmgatConfig micro_model(int64_t dims = 8) {
  HmgatConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.node_dim = dims;
  cfg.edge_dim = dims;
  cfg.mlp_hidden = dims;
  cfg.mlp_layers = 1;
  return cfg;
}

ComplexMatrix random_channel(const SystemConfig& c, uint64_t seed) {
  Rng rng(seed);
  return synth_channel(c, rng);
}

void set_param(ParamStore& params, const std::string& name, const Tensor& t) {
  params.set(name, t);
}

Tensor eye(int64_t n) {
  Tensor t = Tensor::zeros({n, n});
  for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("graph features follow the CSI") {
  // single user, single antenna: node feature is [re; im]
  ComplexMatrix h(1, 1);
  h.set(0, 0, {1.0, 2.0});
  const BeamGraph g = build_graph(h);
  CHECK(g.node_x.at(0, 0) == 1.0);
  CHECK(g.node_x.at(0, 1) == 2.0);

  // two scalar users 1 and j: cross inner product is conj(1)*j = j
  ComplexMatrix h2(1, 2);
  h2.set(0, 0, {1.0, 0.0});
  h2.set(0, 1, {0.0, 1.0});
  const BeamGraph g2 = build_graph(h2);
  const int64_t e01 = 0 * 2 + 1;
  CHECK(g2.edge_e.at(e01, 0) == doctest::Approx(1.0));  // re h_0^H h_0
  CHECK(g2.edge_e.at(e01, 1) == doctest::Approx(0.0));  // re h_0^H h_1
  CHECK(g2.edge_e.at(e01, 2) == doctest::Approx(1.0));  // re h_1^H h_1
  CHECK(g2.edge_e.at(e01, 3) == doctest::Approx(0.0));
  CHECK(g2.edge_e.at(e01, 4) == doctest::Approx(1.0));  // im h_0^H h_1
  CHECK(g2.edge_e.at(e01, 5) == doctest::Approx(0.0));
}

TEST_CASE("graph edges match a scalar inner-product oracle") {
  const SystemConfig c = micro_system(4, 5);
  const ComplexMatrix h = random_channel(c, 3);
  const BeamGraph g = build_graph(h);
  const int64_t k = c.users;
  for (int64_t i = 0; i < k; ++i) {
    for (int64_t j = 0; j < k; ++j) {
      std::complex<double> ii{0, 0}, ij{0, 0}, jj{0, 0};
      for (int64_t t = 0; t < c.tx_antennas; ++t) {
        ii += std::conj(h.at(t, i)) * h.at(t, i);
        ij += std::conj(h.at(t, i)) * h.at(t, j);
        jj += std::conj(h.at(t, j)) * h.at(t, j);
      }
      const int64_t e = i * k + j;
      CHECK(std::abs(g.edge_e.at(e, 0) - ii.real()) < 1e-10);
      CHECK(std::abs(g.edge_e.at(e, 1) - ij.real()) < 1e-10);
      CHECK(std::abs(g.edge_e.at(e, 2) - jj.real()) < 1e-10);
      CHECK(std::abs(g.edge_e.at(e, 3) - ii.imag()) < 1e-10);
      CHECK(std::abs(g.edge_e.at(e, 4) - ij.imag()) < 1e-10);
      CHECK(std::abs(g.edge_e.at(e, 5) - jj.imag()) < 1e-10);
      // self inner products are real
      CHECK(std::abs(g.edge_e.at(i * k + i, 3)) < 1e-12);
      CHECK(std::abs(g.edge_e.at(i * k + i, 5)) < 1e-12);
    }
  }
}

TEST_CASE("node update: identity maps on a single node double the feature") {
  SystemConfig c = micro_system(1, 2);
  c.rf_chains = 1;
  const int64_t f0 = 2 * c.tx_antennas;
  HmgatConfig cfg = micro_model(f0);
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.edge_dim = 6;
  HmgatModel model(cfg, c.tx_antennas);
  Rng rng(1);
  model.init(rng);
  set_param(model.params(), "enc0.node.head0.theta", eye(f0));
  set_param(model.params(), "enc0.node.res", eye(f0));

  const ComplexMatrix h = random_channel(c, 5);
  const BeamGraph g = build_graph(h);
  Tape tape;
  auto [x, e] = model.encode(tape, g, false, nullptr);
  for (int64_t t = 0; t < f0; ++t) {
    CHECK(x.val().at(0, t) == doctest::Approx(2.0 * g.node_x.at(0, t)).epsilon(1e-12));
  }
}

TEST_CASE("node update: zero attention vector gives a uniform average") {
  SystemConfig c = micro_system(2, 3);
  const int64_t f0 = 2 * c.tx_antennas;
  HmgatConfig cfg = micro_model(f0);
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.edge_dim = 6;
  HmgatModel model(cfg, c.tx_antennas);
  Rng rng(2);
  model.init(rng);
  set_param(model.params(), "enc0.node.head0.theta", eye(f0));
  set_param(model.params(), "enc0.node.res", Tensor::zeros({f0, f0}));
  set_param(model.params(), "enc0.node.head0.attn", Tensor::zeros({2 * f0 + 6}));

  const ComplexMatrix h = random_channel(c, 6);
  const BeamGraph g = build_graph(h);
  Tape tape;
  auto [x, e] = model.encode(tape, g, false, nullptr);
  for (int64_t t = 0; t < f0; ++t) {
    const double avg = 0.5 * (g.node_x.at(0, t) + g.node_x.at(1, t));
    CHECK(x.val().at(0, t) == doctest::Approx(avg).epsilon(1e-12));
    CHECK(x.val().at(1, t) == doctest::Approx(avg).epsilon(1e-12));
  }
}

TEST_CASE("edge update: uniform attention averages same-source edges") {
  SystemConfig c = micro_system(2, 3);
  HmgatConfig cfg = micro_model(6);
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.node_dim = 2 * c.tx_antennas;
  cfg.edge_dim = 6;
  HmgatModel model(cfg, c.tx_antennas);
  Rng rng(3);
  model.init(rng);
  set_param(model.params(), "enc0.edge.head0.proj", eye(6));
  set_param(model.params(), "enc0.edge.res", Tensor::zeros({6, 6}));
  set_param(model.params(), "enc0.edge.node_pair",
            Tensor::zeros({6, 2 * 2 * c.tx_antennas}));
  set_param(model.params(), "enc0.edge.head0.attn",
            Tensor::zeros({2 * 6 + cfg.node_dim}));

  const ComplexMatrix h = random_channel(c, 7);
  const BeamGraph g = build_graph(h);
  Tape tape;
  auto [x, e] = model.encode(tape, g, false, nullptr);
  const int64_t k = 2;
  for (int64_t i = 0; i < k; ++i) {
    for (int64_t j = 0; j < k; ++j) {
      for (int64_t t = 0; t < 6; ++t) {
        const double avg =
            0.5 * (g.edge_e.at(i * k + 0, t) + g.edge_e.at(i * k + 1, t));
        CHECK(e.val().at(i * k + j, t) == doctest::Approx(avg).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("edge update: zero node term on zero edge features gives zero") {
  SystemConfig c = micro_system(2, 3);
  HmgatConfig cfg = micro_model(6);
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.node_dim = 2 * c.tx_antennas;
  cfg.edge_dim = 6;
  HmgatModel model(cfg, c.tx_antennas);
  Rng rng(4);
  model.init(rng);
  set_param(model.params(), "enc0.edge.node_pair",
            Tensor::zeros({6, 2 * 2 * c.tx_antennas}));

  BeamGraph g = build_graph(random_channel(c, 8));
  g.edge_e = Tensor::zeros({4, 6});  // zero edge features, K = 2
  Tape tape;
  auto [x, e] = model.encode(tape, g, false, nullptr);
  for (double v : e.val().data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("message passing matches the scalar oracle on a random instance") {
  const SystemConfig c = micro_system(3, 4);
  HmgatConfig cfg = micro_model(8);
  HmgatModel model(cfg, c.tx_antennas);
  Rng rng(9);
  model.init(rng);

  const ComplexMatrix h = random_channel(c, 10);
  const BeamGraph g = build_graph(h);
  // one layer at a time, checking the committed snapshot semantics
  Tensor x_ref = g.node_x;
  Tensor e_ref = g.edge_e;
  for (int64_t l = 0; l < cfg.layers; ++l) {
    const std::string lp = "enc" + std::to_string(l);
    Tensor x_next = oracle::node_update(x_ref, e_ref, model.params(), lp, cfg.heads, 0.01);
    Tensor e_next = oracle::edge_update(x_ref, e_ref, model.params(), lp, cfg.heads, 0.01);
    x_ref = x_next;
    e_ref = e_next;
  }
  Tape tape;
  auto [x, e] = model.encode(tape, g, false, nullptr);
  REQUIRE(x.val().shape == x_ref.shape);
  REQUIRE(e.val().shape == e_ref.shape);
  for (size_t i = 0; i < x_ref.data.size(); ++i) {
    CHECK(std::abs(x.val().data[i] - x_ref.data[i]) < 1e-8);
  }
  for (size_t i = 0; i < e_ref.data.size(); ++i) {
    CHECK(std::abs(e.val().data[i] - e_ref.data[i]) < 1e-8);
  }
}

TEST_CASE("decoded solution has the declared shapes") {
  const SystemConfig c = micro_system(4, 8);
  HmgatConfig cfg = micro_model(8);
  HmgatModel model(cfg, c.tx_antennas);
  Rng rng(11);
  model.init(rng);
  const HbfSolution sol = model.solve(random_channel(c, 12), c);
  CHECK(sol.analog.n_rows == 8);
  CHECK(sol.analog.n_cols == 4);
  CHECK(sol.digital.n_rows == 4);
  CHECK(sol.digital.n_cols == 4);
  CHECK(sol.power.size() == 4);
}

TEST_CASE("zero decoder weights give zero raw outputs") {
  const SystemConfig c = micro_system(3, 4);
  HmgatConfig cfg = micro_model(8);
  HmgatModel model(cfg, c.tx_antennas);
  Rng rng(13);
  model.init(rng);
  for (const std::string head : {"rf", "power", "bb"}) {
    for (int64_t i = 0; i <= cfg.mlp_layers; ++i) {
      const std::string wn = "dec." + head + ".w" + std::to_string(i);
      set_param(model.params(), wn, Tensor::zeros(model.params().get(wn)->shape));
    }
  }
  const BeamGraph g = build_graph(random_channel(c, 14));
  Tape tape;
  auto [x, e] = model.encode(tape, g, false, nullptr);
  auto raw = model.decode(tape, x, e, g.users, false, nullptr);
  for (double v : raw.rf.val().data) CHECK(v == 0.0);
  for (double v : raw.power.val().data) CHECK(v == 0.0);
  for (double v : raw.bb.val().data) CHECK(v == 0.0);
}

TEST_CASE("constrained output layer hand cases") {
  SystemConfig c;
  c.users = 2;
  c.tx_antennas = 2;
  c.rf_chains = 2;
  c.power_budget = 1.0;

  // raw beta = 0 -> sigma(0) = 0.5 each, normalizer max(1, 1) = 1
  // analog raw rows give P_RF = (1/sqrt 2) [[1, 1], [1, -1]]
  // digital raw column 0 = [2, 0] -> effective norm 2 -> [1, 0]
  const Tensor rf_raw = Tensor::matrix(2, 4, {1, 1, 0, 0, 1, -1, 0, 0});
  const Tensor power_raw = Tensor::zeros({2});
  Tensor bb_raw = Tensor::zeros({4, 2});
  bb_raw.at(0 * 2 + 0, 0) = 2.0;  // p_BB,0[0] = 2
  bb_raw.at(1 * 2 + 1, 0) = 2.0;  // p_BB,1[1] = 2
  const HbfSolution sol = constrain_outputs(rf_raw, power_raw, bb_raw, c);

  CHECK(sol.power[0] == doctest::Approx(0.5));
  CHECK(sol.power[1] == doctest::Approx(0.5));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(sol.analog.at(0, 0).real() == doctest::Approx(inv_sqrt2).epsilon(1e-9));
  CHECK(sol.analog.at(1, 1).real() == doctest::Approx(-inv_sqrt2).epsilon(1e-9));
  CHECK(sol.digital.at(0, 0).real() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(sol.digital.at(1, 0)) < 1e-12);

  // modulus rule: raw entry 3 + 4j with N_T = 4 lands at 0.3 + 0.4j
  SystemConfig c4;
  c4.users = 1;
  c4.tx_antennas = 4;
  c4.rf_chains = 1;
  Tensor rf4 = Tensor::zeros({1, 8});
  rf4.at(0, 0) = 3.0;
  rf4.at(0, 4) = 4.0;
  for (int64_t t = 1; t < 4; ++t) rf4.at(0, t) = 1.0;
  Tensor bb4 = Tensor::zeros({1, 2});
  bb4.at(0, 0) = 1.0;
  const HbfSolution sol4 = constrain_outputs(rf4, Tensor::zeros({1}), bb4, c4);
  CHECK(sol4.analog.at(0, 0).real() == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(sol4.analog.at(0, 0).imag() == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("constrained outputs are always feasible") {
  const SystemConfig c = micro_system(3, 4);
  Rng rng(15);
  for (int rep = 0; rep < 300; ++rep) {
    Tensor rf = Tensor::zeros({c.users, 2 * c.tx_antennas});
    Tensor power = Tensor::zeros({c.users});
    Tensor bb = Tensor::zeros({c.users * c.users, 2});
    for (double& v : rf.data) v = rng.normal() * 3.0;
    for (double& v : power.data) v = rng.normal() * 5.0;
    for (double& v : bb.data) v = rng.normal() * 3.0;
    const HbfSolution sol = constrain_outputs(rf, power, bb, c);
    CHECK(feasible(sol, c));
  }
}

TEST_CASE("achievable rate basics and oracle") {
  // K = 1, N_T = 1, everything 1: rate log2(2) = 1
  SystemConfig c;
  c.users = 1;
  c.tx_antennas = 1;
  c.rf_chains = 1;
  ComplexMatrix h(1, 1);
  h.set(0, 0, {1.0, 0.0});
  HbfSolution sol;
  sol.analog = h;
  sol.digital = h;
  sol.power = {1.0};
  const auto rates = achievable_rate(h, sol, 1.0);
  CHECK(rates[0] == doctest::Approx(1.0));

  // zero power silences everybody
  sol.power = {0.0};
  CHECK(achievable_rate(h, sol, 1.0)[0] == doctest::Approx(0.0));

  // random K = 2 instance against a direct SINR evaluation
  const SystemConfig c2 = micro_system(2, 3);
  const ComplexMatrix h2 = random_channel(c2, 16);
  Rng rng(17);
  const HbfSolution sol2 = equal_power_random(h2, c2, rng);
  const auto got = achievable_rate(h2, sol2, c2.noise_power);
  const ComplexMatrix eff = cmatmul_plain(sol2.analog, sol2.digital);
  for (int64_t u = 0; u < 2; ++u) {
    double sig = 0.0, intf = 0.0;
    for (int64_t j = 0; j < 2; ++j) {
      std::complex<double> acc{0, 0};
      for (int64_t t = 0; t < 3; ++t) acc += std::conj(h2.at(t, u)) * eff.at(t, j);
      (j == u ? sig : intf) += sol2.power[j] * std::norm(acc);
    }
    const double want = std::log2(1.0 + sig / (intf + c2.noise_power));
    CHECK(std::abs(got[u] - want) < 1e-10);
  }

  // the tape-side rate agrees with the plain implementation
  Tape tape;
  HbfVars vars;
  vars.analog = cvar(tape, sol2.analog);
  vars.digital = cvar(tape, sol2.digital);
  vars.power = tape.constant(Tensor::matrix(2, 1, {sol2.power[0], sol2.power[1]}));
  vars.effective = cmatmul(tape, vars.analog, vars.digital);
  const double tape_sum = sum_rate_var(tape, h2, vars, c2.noise_power).val().item();
  CHECK(tape_sum == doctest::Approx(got[0] + got[1]).epsilon(1e-12));
}

TEST_CASE("rate is monotone in the served user's power") {
  const SystemConfig c = micro_system(3, 4);
  Rng rng(18);
  for (int rep = 0; rep < 20; ++rep) {
    const ComplexMatrix h = random_channel(c, 100 + rep);
    HbfSolution sol = equal_power_random(h, c, rng);
    const int64_t k = rng.uniform_int(c.users);
    const auto before = achievable_rate(h, sol, c.noise_power);
    sol.power[k] += rng.uniform(0.0, 0.5);
    const auto after = achievable_rate(h, sol, c.noise_power);
    CHECK(after[k] >= before[k] - 1e-12);
  }
}

TEST_CASE("hmgat loss matches the mean negated sum rate") {
  const SystemConfig c = micro_system(3, 4);
  HmgatConfig cfg = micro_model(8);
  HmgatModel model(cfg, c.tx_antennas);
  Rng rng(19);
  model.init(rng);
  const ComplexMatrix h = random_channel(c, 20);

  const HbfSolution sol = model.solve(h, c);
  const auto rates = achievable_rate(h, sol, c.noise_power);
  double sum = 0.0;
  for (double r : rates) sum += r;

  const double single = hmgat_loss(model, {&h}, c);
  CHECK(single == doctest::Approx(-sum).epsilon(1e-9));

  // duplicated sample: the mean does not move
  const double dup = hmgat_loss(model, {&h, &h}, c);
  CHECK(dup == doctest::Approx(single).epsilon(1e-12));
}

TEST_CASE("permutation equivariance of the full constrained forward") {
  const SystemConfig c = micro_system(4, 5);
  HmgatConfig cfg = micro_model(8);
  HmgatModel model(cfg, c.tx_antennas);
  Rng rng(23);
  model.init(rng);
  const ComplexMatrix h = random_channel(c, 24);
  const std::vector<int64_t> perm = {2, 0, 3, 1};  // pi(i)

  ComplexMatrix hp(c.tx_antennas, c.users);
  for (int64_t u = 0; u < c.users; ++u) {
    for (int64_t t = 0; t < c.tx_antennas; ++t) hp.set(t, perm[u], h.at(t, u));
  }
  const HbfSolution base = model.solve(h, c);
  const HbfSolution permuted = model.solve(hp, c);

  for (int64_t u = 0; u < c.users; ++u) {
    CHECK(permuted.power[perm[u]] == doctest::Approx(base.power[u]).epsilon(1e-9));
    for (int64_t t = 0; t < c.tx_antennas; ++t) {
      CHECK(std::abs(permuted.analog.at(t, perm[u]) - base.analog.at(t, u)) < 1e-9);
    }
    for (int64_t j = 0; j < c.users; ++j) {
      CHECK(std::abs(permuted.digital.at(perm[j], perm[u]) - base.digital.at(j, u)) <
            1e-9);
    }
  }
  const auto r0 = achievable_rate(h, base, c.noise_power);
  const auto r1 = achievable_rate(hp, permuted, c.noise_power);
  double s0 = 0.0, s1 = 0.0;
  for (double v : r0) s0 += v;
  for (double v : r1) s1 += v;
  CHECK(std::abs(s0 - s1) < 1e-6);
}

TEST_CASE("hmgat loss gradient passes the finite difference check") {
  const SystemConfig c = micro_system(3, 4);
  HmgatConfig cfg = micro_model(8);
  HmgatModel model(cfg, c.tx_antennas);
  Rng rng(25);
  model.init(rng);
  const ComplexMatrix h = random_channel(c, 26);
  auto build = [&](Tape& t) { return hmgat_loss_var(t, model, {&h}, c, false, nullptr); };
  CHECK(gradient_check(build, model.params()) < 1e-4);
}

TEST_CASE("training runs deterministically and zero epochs is a no-op") {
  SystemConfig c = micro_system(2, 3);
  c.seed = 42;
  const CsiDataset ds = make_dataset(c, 12);
  HmgatConfig cfg = micro_model(6);
  cfg.layers = 1;

  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 5;
  tc.batch = 4;
  tc.workers = 1;
  const HmgatModel untouched = train_hmgat(ds, cfg, tc);
  HmgatModel fresh(cfg, c.tx_antennas);
  Rng fresh_rng = Rng(tc.seed).derive(0);
  fresh.init(fresh_rng);
  for (const auto& [name, t] : fresh.params().entries()) {
    const auto got = untouched.params().get(name);
    for (size_t i = 0; i < t->data.size(); ++i) CHECK(got->data[i] == t->data[i]);
  }

  tc.epochs = 2;
  std::vector<EpochStat> trace_a, trace_b;
  (void)train_hmgat(ds, cfg, tc, &trace_a);
  (void)train_hmgat(ds, cfg, tc, &trace_b);
  REQUIRE(trace_a.size() == trace_b.size());
  for (size_t i = 0; i < trace_a.size(); ++i) {
    CHECK(trace_a[i].train_loss == trace_b[i].train_loss);
    CHECK(trace_a[i].val_sum_rate == trace_b[i].val_sum_rate);
  }
}
