#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "scorebeam/checkpoint.hpp"
#include "scorebeam/optim.hpp"
#include "scorebeam/rng.hpp"

using namespace scorebeam;

namespace {

std::string temp_file(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  ParamStore params;
  Rng rng(5);
  Tensor a = Tensor::zeros({3, 4});
  for (double& v : a.data) v = rng.normal();
  params.add("alpha", a);
  params.add("scalar", Tensor::scalar(-0.25));
  params.add("vec", Tensor::vec({1e-300, 2.5, -0.0}));

  const std::string path = temp_file("sb_ckpt_roundtrip.bswt");
  save_checkpoint(params, path);

  ParamStore loaded;
  load_checkpoint(loaded, path);
  CHECK(loaded.entries().size() == 3);
  for (const auto& [name, t] : params.entries()) {
    const auto got = loaded.get(name);
    REQUIRE(got->shape == t->shape);
    for (size_t i = 0; i < t->data.size(); ++i) CHECK(got->data[i] == t->data[i]);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects bad magic and truncation") {
  const std::string path = temp_file("sb_ckpt_bad.bswt");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE" << std::string(16, '\0');
  }
  ParamStore params;
  CHECK_THROWS_WITH_AS(load_checkpoint(params, path),
                       doctest::Contains("bad magic"), std::runtime_error);
  {
    std::ofstream os(path, std::ios::binary);
    os << "BSWT";  // header cut off
  }
  CHECK_THROWS_AS(load_checkpoint(params, path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("strict load catches architecture mismatch") {
  ParamStore on_disk;
  on_disk.add("w", Tensor::zeros({2, 2}));
  const std::string path = temp_file("sb_ckpt_strict.bswt");
  save_checkpoint(on_disk, path);

  ParamStore wrong_shape;
  wrong_shape.add("w", Tensor::zeros({3, 2}));
  CHECK_THROWS_AS(load_checkpoint_strict(wrong_shape, path), std::runtime_error);

  ParamStore missing;
  missing.add("w", Tensor::zeros({2, 2}));
  missing.add("extra", Tensor::zeros({1}));
  CHECK_THROWS_AS(load_checkpoint_strict(missing, path), std::runtime_error);

  ParamStore ok;
  ok.add("w", Tensor::full({2, 2}, 7.0));
  load_checkpoint_strict(ok, path);
  for (double v : ok.get("w")->data) CHECK(v == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("adamw converges on a quadratic") {
  ParamStore params;
  params.add("x", Tensor::scalar(0.0));
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  for (int step = 0; step < 1000; ++step) {
    const double x = params.get("x")->item();
    GradMap grads;
    grads["x"] = Tensor::scalar(2.0 * (x - 3.0));
    opt.step(params, grads);
  }
  CHECK(params.get("x")->item() == doctest::Approx(3.0).epsilon(1e-4));
}

TEST_CASE("adamw weight decay shrinks parameters with zero gradient") {
  ParamStore params;
  params.add("x", Tensor::scalar(4.0));
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.1;
  AdamW opt(cfg);
  for (int step = 0; step < 50; ++step) {
    GradMap grads;
    grads["x"] = Tensor::scalar(0.0);
    opt.step(params, grads);
  }
  CHECK(std::abs(params.get("x")->item()) < 4.0 * std::pow(1.0 - 0.01, 49));
}

TEST_CASE("gradient accumulation helpers") {
  GradMap a;
  a["w"] = Tensor::vec({1.0, 2.0});
  GradMap b;
  b["w"] = Tensor::vec({0.5, -1.0});
  b["v"] = Tensor::scalar(3.0);
  accumulate(a, b);
  CHECK(a.at("w").data[0] == 1.5);
  CHECK(a.at("w").data[1] == 1.0);
  CHECK(a.at("v").item() == 3.0);
  scale(a, 0.5);
  CHECK(a.at("w").data[0] == 0.75);
  CHECK(a.at("v").item() == 1.5);
}
