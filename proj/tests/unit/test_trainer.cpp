#include "common.hpp"

#include <algorithm>

#include "pclmix/trainer.hpp"

using namespace pclmix;

namespace {

model::NetConfig tiny_net() {
  model::NetConfig c;
  c.base_width = 8;
  c.depth = 3;
  c.feature_stride = 4;
  c.embed_dim = 16;
  return c;
}

trainer::TrainConfig tiny_train(int iters, std::uint64_t seed) {
  trainer::TrainConfig t;
  t.total_iters = iters;
  t.batch_size = 4;
  t.seed = seed;
  return t;
}

const std::vector<data::Sample>& tiny_data() {
  static const auto d = data::generate_synthetic_dataset(16, 32, 4, 21);
  return d;
}

}  // namespace

TEST_CASE("poly schedule") {
  trainer::TrainConfig c;
  CHECK(trainer::poly_lr(0, c) == 0.03);
  CHECK(trainer::poly_lr(c.total_iters, c) == 0.001);
  c.poly_power = 1.0;
  CHECK(trainer::poly_lr(c.total_iters / 2, c) == doctest::Approx(0.0155));
  double prev = 1;
  for (int i = 0; i <= c.total_iters; i += 100) {
    CHECK(trainer::poly_lr(i, c) <= prev);
    prev = trainer::poly_lr(i, c);
  }
}

TEST_CASE("invalid settings are rejected") {
  auto t = tiny_train(10, 0);
  t.batch_size = 1;
  CHECK_THROWS_AS(t.validate(), Error);
  t = tiny_train(10, 0);
  t.weights.lambda_t = 1.5;
  CHECK_THROWS_AS(t.validate(), Error);
  t = tiny_train(10, 0);
  t.mix_ratio = 0;
  CHECK_THROWS_AS(t.validate(), Error);
}

TEST_CASE("supervision-only configuration reduces to the supervised term") {
  auto cfg = tiny_train(3, 1);
  cfg.flags = {false, false, false, true};
  trainer::Trainer tr(model::make_segnet(tiny_net(), 1), cfg);
  data::BatchStream stream(tiny_data(), 4, 1, true);
  for (int i = 0; i < 3; ++i) {
    auto r = tr.step(stream.next());
    CHECK(r.ctr == 0.0);
    CHECK(r.het == 0.0);
    CHECK(r.mix == 0.0);
    CHECK(r.total == r.sup);
  }
  CHECK(tr.queue().empty());
  CHECK(tr.iteration() == 3);
}

TEST_CASE("full configuration fills the queue and reports every term") {
  auto cfg = tiny_train(4, 2);
  trainer::Trainer tr(model::make_segnet(tiny_net(), 2), cfg);
  data::BatchStream stream(tiny_data(), 4, 2, true);
  losses::LossReport r;
  for (int i = 0; i < 4; ++i) r = tr.step(stream.next());
  CHECK_FALSE(tr.queue().empty());
  CHECK(r.het > 0.0);
  CHECK(r.mix < 0.0);
  CHECK(r.mix >= -2.0 - 1e-9);
  const auto& w = cfg.weights;
  CHECK(std::abs(r.total - (r.sup + w.lambda_ctr * r.ctr + w.lambda_con * (r.het + w.lambda_mix * r.mix))) < 1e-9);
}

TEST_CASE("identical seeds give identical runs") {
  auto run = [](std::uint64_t seed) {
    return trainer::train(tiny_data(), tiny_net(), tiny_train(6, seed));
  };
  auto a = run(5), b = run(5), c = run(6);
  REQUIRE(a.log.size() == 6);
  bool differs = false;
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss.total == b.log[i].loss.total);
    CHECK(a.log[i].loss.ctr == b.log[i].loss.ctr);
    differs |= a.log[i].loss.total != c.log[i].loss.total;
  }
  CHECK(differs);
  auto pb = b.net->named_parameters();
  for (const auto& kv : a.net->named_parameters()) CHECK(torch::equal(kv.value(), pb[kv.key()]));
}

TEST_CASE("run directory contents") {
  auto dir = testutil::temp_dir("train_run");
  auto cfg = tiny_train(4, 3);
  cfg.ckpt_every = 2;
  auto res = trainer::train(tiny_data(), tiny_net(), cfg, dir);
  CHECK(std::filesystem::exists(dir / "ckpt_2.bin"));
  CHECK(std::filesystem::exists(dir / "ckpt_4.bin"));
  CHECK(std::filesystem::exists(dir / "ckpt_final.bin"));
  CHECK(std::filesystem::exists(dir / "curves.png"));
  std::ifstream log(dir / "log.csv");
  std::string line;
  std::getline(log, line);
  CHECK(line == "iter,lr,sup,ctr,het,mix,total");
  int rows = 0;
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 4);
  CHECK(res.log.front().lr == 0.03);
}

TEST_CASE("loss trends down over the first iterations") {
  std::vector<double> drops;
  for (std::uint64_t seed : {0, 1, 2}) {
    auto cfg = tiny_train(200, seed);
    auto res = trainer::train(tiny_data(), tiny_net(), cfg);
    double head = 0, tail = 0;
    for (int i = 0; i < 20; ++i) {
      head += res.log[i].loss.total;
      tail += res.log[res.log.size() - 1 - i].loss.total;
    }
    drops.push_back(head - tail);
  }
  std::sort(drops.begin(), drops.end());
  CHECK(drops[1] > 0.0);
}
