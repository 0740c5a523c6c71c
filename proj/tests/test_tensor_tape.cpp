#include <doctest.h>

#include <cmath>
#include <limits>

#include "scorebeam/complexm.hpp"
#include "scorebeam/rng.hpp"
#include "scorebeam/tape.hpp"

using namespace scorebeam;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
  Tape tape;
  Var eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var prod = tape.matmul(eye, a);
  for (int i = 0; i < 4; ++i) CHECK(prod.val().data[i] == a.val().data[i]);

  Var b = tape.constant(Tensor::matrix(2, 1, {0, 1}));
  Var ab = tape.matmul(a, b);
  CHECK(ab.val().data[0] == 2.0);
  CHECK(ab.val().data[1] == 4.0);

  CHECK_THROWS(tape.matmul(a, tape.constant(Tensor::matrix(3, 1, {1, 2, 3}))));
}

TEST_CASE("matmul matches scalar triple-loop oracle") {
  Rng rng(7);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  Tape tape;
  const Tensor got = tape.matmul(tape.constant(a), tape.constant(b)).val();
  for (int64_t i = 0; i < 3; ++i) {
    for (int64_t j = 0; j < 2; ++j) {
      double want = 0.0;
      for (int64_t p = 0; p < 4; ++p) want += a.at(i, p) * b.at(p, j);
      CHECK(got.at(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("activations") {
  Tape tape;
  Var x = tape.constant(Tensor::vec({-1.0, 0.0, 2.0}));
  const Tensor lr = tape.leaky_relu(x, 0.01).val();
  CHECK(lr.data[0] == doctest::Approx(-0.01));
  CHECK(lr.data[1] == 0.0);
  CHECK(lr.data[2] == 2.0);

  CHECK(tape.sigmoid(tape.constant_scalar(0.0)).val().item() == doctest::Approx(0.5));

  // erf-based oracle over a grid
  for (double v = -4.0; v <= 4.0; v += 0.25) {
    Tape t2;
    const double got = t2.gelu(t2.constant_scalar(v)).val().item();
    const double want = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    CHECK(got == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("softmax stability and normalization") {
  Tape tape;
  const Tensor two = tape.softmax_rows(tape.constant(Tensor::vec({0.0, 0.0}))).val();
  CHECK(two.data[0] == doctest::Approx(0.5));
  CHECK(two.data[1] == doctest::Approx(0.5));

  const Tensor one = tape.softmax_rows(tape.constant(Tensor::vec({123.0}))).val();
  CHECK(one.data[0] == 1.0);

  const Tensor big = tape.softmax_rows(tape.constant(Tensor::vec({1000.0, 1000.0}))).val();
  CHECK(big.data[0] == doctest::Approx(0.5));
  CHECK(big.data[1] == doctest::Approx(0.5));
  CHECK(big.all_finite());

  CHECK_THROWS(tape.softmax_rows(tape.constant(Tensor::zeros({0}))));

  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    Tape t2;
    const Tensor y =
        t2.softmax_rows(t2.constant(random_tensor({4, 7}, rng, -30.0, 30.0))).val();
    for (int64_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (int64_t j = 0; j < 7; ++j) {
        CHECK(y.at(i, j) >= 0.0);
        sum += y.at(i, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("layer norm rows") {
  Tape tape;
  const Tensor constant_row =
      tape.layer_norm_rows(tape.constant(Tensor::matrix(1, 4, {3, 3, 3, 3}))).val();
  for (double v : constant_row.data) CHECK(v == doctest::Approx(0.0));

  const Tensor pair = tape.layer_norm_rows(tape.constant(Tensor::matrix(1, 2, {1, 3}))).val();
  CHECK(pair.data[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(pair.data[1] == doctest::Approx(1.0).epsilon(1e-5));

  CHECK_THROWS(tape.layer_norm_rows(tape.constant(Tensor::matrix(2, 1, {1, 2}))));

  // moment check; rows with large spread so the eps correction is < 1e-6
  Rng rng(11);
  Tape t2;
  const Tensor y =
      t2.layer_norm_rows(t2.constant(random_tensor({6, 32}, rng, -100.0, 100.0))).val();
  for (int64_t i = 0; i < 6; ++i) {
    double mu = 0.0, var = 0.0;
    for (int64_t j = 0; j < 32; ++j) mu += y.at(i, j);
    mu /= 32.0;
    for (int64_t j = 0; j < 32; ++j) var += (y.at(i, j) - mu) * (y.at(i, j) - mu);
    var /= 32.0;
    CHECK(std::abs(mu) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("backward on linear map and sigmoid scaling") {
  // loss = sum(W x): dW = outer(1, x)
  ParamStore params;
  params.add("w", Tensor::matrix(2, 3, {0.5, -1, 2, 0, 1, -3}));
  const Tensor x = Tensor::matrix(3, 1, {1.0, -2.0, 0.5});
  Tape tape;
  Var loss = tape.sum_all(tape.matmul(tape.param(params, "w"), tape.constant(x)));
  GradMap grads = tape.backward(loss);
  const Tensor& gw = grads.at("w");
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 3; ++j) CHECK(gw.at(i, j) == doctest::Approx(x.data[j]));

  // loss = sigmoid(w) * v at w = 0: d/dw = 0.25 v
  ParamStore p2;
  p2.add("w", Tensor::scalar(0.0));
  Tape t2;
  Var l2 = t2.mul_scalar(t2.sigmoid(t2.param(p2, "w")), 3.0);
  GradMap g2 = t2.backward(t2.sum_all(l2));
  CHECK(g2.at("w").item() == doctest::Approx(0.25 * 3.0));
}

TEST_CASE("disconnected parameter gets a zero gradient") {
  ParamStore params;
  params.add("used", Tensor::scalar(2.0));
  params.add("unused", Tensor::vec({1, 2, 3}));
  Tape tape;
  Var loss = tape.square(tape.param(params, "used"));
  (void)tape.param(params, "unused");
  GradMap grads = tape.backward(tape.sum_all(loss));
  CHECK(grads.at("used").item() == doctest::Approx(4.0));
  for (double v : grads.at("unused").data) CHECK(v == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  ParamStore params;
  params.add("w", Tensor::vec({1, 2}));
  Tape tape;
  Var v = tape.param(params, "w");
  CHECK_THROWS(tape.backward(v));
}

TEST_CASE("finite_diff_check single tensor") {
  // f(theta) = theta^2 at 3
  const Tensor theta = Tensor::scalar(3.0);
  auto f = [](const Tensor& t) { return t.item() * t.item(); };
  const double err = finite_diff_check(f, theta, Tensor::scalar(6.0));
  CHECK(err < 1e-8);

  // constant function: both sides zero
  auto fc = [](const Tensor&) { return 5.0; };
  CHECK(finite_diff_check(fc, theta, Tensor::scalar(0.0)) < 1e-12);
}

TEST_CASE("gradient check on a composed graph") {
  Rng rng(21);
  ParamStore params;
  params.add("w1", random_tensor({5, 4}, rng));
  params.add("b1", random_tensor({5}, rng));
  params.add("w2", random_tensor({3, 5}, rng));
  params.add("a", random_tensor({9}, rng));
  const Tensor x = random_tensor({6, 4}, rng);

  auto build = [&](Tape& t) {
    Var h = t.matmul(t.constant(x), t.transpose(t.param(params, "w1")));
    h = t.add(h, t.param(params, "b1"));
    h = t.gelu(h);
    h = t.layer_norm_rows(h);
    h = t.matmul(h, t.transpose(t.param(params, "w2")));
    h = t.softmax_rows(h);
    Var a = t.param(params, "a");
    Var left = t.reshape(t.slice_flat(a, 0, 3), {3, 1});
    Var s = t.matmul(h, left);
    s = t.leaky_relu(s, 0.01);
    Var gathered = t.gather_rows(h, {0, 0, 2, 4});
    Var joined = t.concat({gathered, t.gather_rows(h, {1, 3, 5, 5})}, 1);
    Var pooled = t.add(t.sum_all(t.sigmoid(joined)), t.sum_all(s));
    Var more = t.mul(t.square(t.slice_flat(a, 3, 3)), t.exp(t.slice_flat(a, 6, 3)));
    return t.add(pooled, t.mul_scalar(t.sum_all(t.sqrt(t.add_scalar(more, 2.0))), 0.5));
  };
  CHECK(gradient_check(build, params) < 1e-4);
}

TEST_CASE("gradient check on attention primitives") {
  Rng rng(22);
  ParamStore params;
  params.add("q", random_tensor({6, 4}, rng));
  params.add("k", random_tensor({6, 4}, rng));
  params.add("v", random_tensor({6, 4}, rng));
  auto build = [&](Tape& t) {
    Var scores = t.mul_scalar(
        t.block_scores(t.param(params, "q"), t.param(params, "k"), 3), 0.5);
    Var attn = t.softmax_rows(scores);
    std::vector<int64_t> groups = {0, 0, 0, 1, 1, 1};
    Var out = t.attend_rows(attn, t.param(params, "v"), groups);
    return t.sum_all(t.square(out));
  };
  CHECK(gradient_check(build, params) < 1e-4);
}

TEST_CASE("gradient check with broadcasting and reductions") {
  Rng rng(23);
  ParamStore params;
  params.add("m", random_tensor({4, 5}, rng));
  params.add("row", random_tensor({1, 5}, rng));
  params.add("col", random_tensor({4, 1}, rng));
  auto build = [&](Tape& t) {
    Var m = t.param(params, "m");
    Var mixed = t.mul(t.add(m, t.param(params, "row")), t.param(params, "col"));
    Var divved = t.div(mixed, t.add_scalar(t.square(t.param(params, "row")), 1.0));
    Var cm = t.clamp_min(divved, -0.2);
    return t.add(t.sum_all(t.row_sum(cm)), t.sum_all(t.col_sum(t.mul_scalar(m, 0.25))));
  };
  CHECK(gradient_check(build, params) < 1e-4);
}

TEST_CASE("complex product via four real matmuls matches scalar oracle") {
  Rng rng(31);
  ComplexMatrix a(4, 4), b(4, 4);
  for (int64_t i = 0; i < 4; ++i) {
    for (int64_t j = 0; j < 4; ++j) {
      a.set(i, j, {rng.uniform(-1, 1), rng.uniform(-1, 1)});
      b.set(i, j, {rng.uniform(-1, 1), rng.uniform(-1, 1)});
    }
  }
  Tape tape;
  const ComplexMatrix got = cval(cmatmul(tape, cvar(tape, a), cvar(tape, b)));
  for (int64_t i = 0; i < 4; ++i) {
    for (int64_t j = 0; j < 4; ++j) {
      std::complex<double> want{0.0, 0.0};
      for (int64_t p = 0; p < 4; ++p) want += a.at(i, p) * b.at(p, j);
      CHECK(std::abs(got.at(i, j) - want) < 1e-10);
    }
  }
  // and the plain path agrees with the tape path
  const ComplexMatrix plain = cmatmul_plain(a, b);
  for (size_t i = 0; i < plain.re.data.size(); ++i) {
    CHECK(plain.re.data[i] == doctest::Approx(got.re.data[i]).epsilon(1e-12));
    CHECK(plain.im.data[i] == doctest::Approx(got.im.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("ops are deterministic given identical inputs") {
  Rng rng(41);
  const Tensor a = random_tensor({8, 8}, rng);
  const Tensor b = random_tensor({8, 8}, rng);
  auto run = [&] {
    Tape t;
    Var out = t.softmax_rows(t.matmul(t.constant(a), t.gelu(t.constant(b))));
    return out.val();
  };
  const Tensor first = run();
  const Tensor second = run();
  for (size_t i = 0; i < first.data.size(); ++i) CHECK(first.data[i] == second.data[i]);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS(Tensor({2, 2}, {1.0, 2.0}));
  Tensor t = Tensor::vec({1.0, std::numeric_limits<double>::infinity()});
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS(t.check_finite("test tensor"));
}

TEST_CASE("dropout scales and disables") {
  Rng rng(51);
  Tape tape;
  Var x = tape.constant(Tensor::full({1000}, 1.0));
  Var kept = tape.dropout(x, 0.0, rng, true);
  CHECK(kept.id == x.id);  // identity, no node added
  Var eval = tape.dropout(x, 0.5, rng, false);
  CHECK(eval.id == x.id);
  Var dropped = tape.dropout(x, 0.5, rng, true);
  double mean = 0.0;
  int zeros = 0;
  for (double v : dropped.val().data) {
    mean += v;
    if (v == 0.0) ++zeros;
  }
  mean /= 1000.0;
  CHECK(mean == doctest::Approx(1.0).epsilon(0.15));  // inverted scaling keeps the mean
  CHECK(zeros > 350);
  CHECK(zeros < 650);
}
