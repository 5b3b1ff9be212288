#include "common.hpp"

#include "pclmix/config.hpp"

using namespace pclmix;

TEST_CASE("serialization round trips byte for byte") {
  config::RunConfig c;
  c.train.lr0 = 0.1 + 0.2;  // not representable in short decimal
  c.train.weights.lambda_ctr = 1.0 / 3.0;
  c.tag = "pilot";
  c.seed = 123456789012345ull;
  c.sync_seed();
  c.train.flags.use_mix = false;
  c.train.pce_reduction = losses::Reduction::kSum;
  const auto text = config::serialize(c);
  const auto back = config::parse(text);
  CHECK(config::serialize(back) == text);
  CHECK(back.train.lr0 == c.train.lr0);
  CHECK(back.train.weights.lambda_ctr == c.train.weights.lambda_ctr);
  CHECK(back.train.seed == c.seed);
  CHECK_FALSE(back.train.flags.use_mix);
  CHECK(back.train.pce_reduction == losses::Reduction::kSum);
}

TEST_CASE("keys are sorted, comments ignored") {
  const auto text = config::serialize({});
  std::istringstream in(text);
  std::string line, prev;
  while (std::getline(in, line)) {
    const auto key = line.substr(0, line.find('='));
    CHECK(prev < key);
    prev = key;
  }
  auto c = config::parse("# comment\n\nlambda_t = 0.3\nuse_ctr=false\n");
  CHECK(c.train.weights.lambda_t == 0.3);
  CHECK_FALSE(c.train.flags.use_ctr);
}

TEST_CASE("unknown keys and bad values are errors") {
  config::RunConfig c;
  try {
    config::set_value(c, "lamda_t", "0.3");
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("lamda_t") != std::string::npos);
    CHECK(msg.find("lambda_t") != std::string::npos);
    CHECK(msg.find("total_iters") != std::string::npos);
  }
  CHECK_THROWS_AS(config::set_value(c, "total_iters", "ten"), Error);
  CHECK_THROWS_AS(config::set_value(c, "total_iters", "10x"), Error);
  CHECK_THROWS_AS(config::set_value(c, "use_ctr", "maybe"), Error);
  CHECK_THROWS_AS(config::set_value(c, "pce_reduction", "max"), Error);
  CHECK_THROWS_AS(config::parse("no equals sign"), Error);
}

TEST_CASE("every key is settable from its own serialization") {
  const config::RunConfig base;
  const auto keys = config::valid_keys();
  CHECK(keys.size() > 30);
  auto text = config::serialize(base);
  config::RunConfig other;
  config::apply_text(other, text);
  CHECK(config::serialize(other) == text);
}

TEST_CASE("seed propagates") {
  config::RunConfig c;
  config::set_value(c, "seed", "42");
  CHECK(c.train.seed == 42);
}

TEST_CASE("file io") {
  auto dir = testutil::temp_dir("config");
  config::RunConfig c;
  c.net.base_width = 8;
  config::save_file(dir / "a.cfg", c);
  CHECK(config::load_file(dir / "a.cfg").net.base_width == 8);
  CHECK_THROWS_AS(config::load_file(dir / "missing.cfg"), Error);
}
