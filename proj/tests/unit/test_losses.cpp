#include "common.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include "pclmix/losses.hpp"

using namespace pclmix;

namespace {

torch::Tensor scribbles(std::vector<int64_t> shape, int classes, double labeled, std::uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  auto y = at::randint(0, classes, shape, gen, torch::kInt64);
  auto keep = at::rand(shape, gen).lt(labeled);
  return torch::where(keep, y, torch::full_like(y, kIgnore));
}

double pce_oracle(const torch::Tensor& mc, const torch::Tensor& mt, const torch::Tensor& y, double lt) {
  double total = 0;
  int n = 0;
  auto a = mc.accessor<double, 4>(), b = mt.accessor<double, 4>();
  auto l = y.accessor<int64_t, 3>();
  for (int64_t i = 0; i < y.size(0); ++i)
    for (int64_t r = 0; r < y.size(1); ++r)
      for (int64_t c = 0; c < y.size(2); ++c) {
        const int64_t k = l[i][r][c];
        if (k == kIgnore) continue;
        total -= std::log((1 - lt) * a[i][k][r][c] + lt * b[i][k][r][c] + losses::kLogEps);
        ++n;
      }
  return n ? total / n : 0.0;
}

double negcos_oracle(const torch::Tensor& p, const torch::Tensor& q) {
  auto a = p.accessor<double, 4>(), b = q.accessor<double, 4>();
  double total = 0;
  int n = 0;
  for (int64_t i = 0; i < p.size(0); ++i)
    for (int64_t r = 0; r < p.size(2); ++r)
      for (int64_t c = 0; c < p.size(3); ++c) {
        oracle::Vec u, v;
        for (int64_t k = 0; k < p.size(1); ++k) {
          u.push_back(a[i][k][r][c]);
          v.push_back(b[i][k][r][c]);
        }
        total -= oracle::cosine(u, v);
        ++n;
      }
  return total / n;
}

}  // namespace

TEST_CASE("pce scalar cases") {
  auto half = torch::full({1, 2, 1, 1}, 0.5, torch::kFloat64);
  auto y = torch::zeros({1, 1, 1}, torch::kInt64);
  for (double lt : {0.0, 0.4, 1.0})
    CHECK(losses::pce(half, half, y, lt).item<double>() == doctest::Approx(std::log(2.0)));

  auto onehot = torch::one_hot(torch::tensor({{{0, 1}, {2, 1}}}).to(torch::kInt64), 3).permute({0, 3, 1, 2}).to(torch::kFloat64);
  auto lab = torch::tensor({{{0, int(kIgnore)}, {2, 1}}}).to(torch::kInt64);
  CHECK(losses::pce(onehot, onehot, lab, 0.4).item<double>() <= 1e-9);

  auto none = torch::full({1, 2, 2}, kIgnore, torch::kInt64);
  CHECK(losses::pce(onehot, onehot, none, 0.4).item<double>() == 0.0);
}

TEST_CASE("pce matches scalar oracle and sum reduction") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto mc = testutil::random_probs({2, 3, 6, 6}, s);
    auto mt = testutil::random_probs({2, 3, 6, 6}, s + 50);
    auto y = scribbles({2, 6, 6}, 3, 0.3, s);
    const double lt = 0.1 * static_cast<double>(s % 5);
    const double mean = losses::pce(mc, mt, y, lt).item<double>();
    CHECK(mean == doctest::Approx(pce_oracle(mc, mt, y, lt)).epsilon(1e-12));
    const auto n = y.ne(kIgnore).sum().item<double>();
    CHECK(losses::pce(mc, mt, y, lt, losses::Reduction::kSum).item<double>() ==
          doctest::Approx(mean * n).epsilon(1e-12));
  }
}

TEST_CASE("pce gradient vanishes off the scribbles") {
  auto mc = testutil::random_probs({1, 3, 5, 5}, 4).requires_grad_(true);
  auto mt = testutil::random_probs({1, 3, 5, 5}, 5).requires_grad_(true);
  auto y = scribbles({1, 5, 5}, 3, 0.3, 6);
  losses::pce(mc, mt, y, 0.4).backward();
  auto off = y.eq(kIgnore).unsqueeze(1).expand_as(mc);
  CHECK(mc.grad().masked_select(off).abs().max().item<double>() == 0.0);
  CHECK(mt.grad().masked_select(off).abs().max().item<double>() == 0.0);
}

TEST_CASE("sup loss is three pce terms") {
  auto p = [](std::uint64_t s) {
    return model::DualPrediction{testutil::random_probs({2, 4, 6, 6}, s), testutil::random_probs({2, 4, 6, 6}, s + 1)};
  };
  auto a = p(1), b = p(3), c = p(5);
  auto y = scribbles({2, 6, 6}, 4, 0.2, 1), y12 = scribbles({2, 6, 6}, 4, 0.2, 2),
       y21 = scribbles({2, 6, 6}, 4, 0.2, 3);
  const double total = losses::sup_loss(a, b, c, y, y12, y21, 0.4).item<double>();
  const double parts = losses::pce(a.p_c, a.p_t, y, 0.4).item<double>() +
                       losses::pce(b.p_c, b.p_t, y12, 0.4).item<double>() +
                       losses::pce(c.p_c, c.p_t, y21, 0.4).item<double>();
  CHECK(std::abs(total - parts) < 1e-7);
  auto none = torch::full({2, 6, 6}, kIgnore, torch::kInt64);
  CHECK(losses::sup_loss(a, b, c, none, none, none, 0.4).item<double>() == 0.0);
}

TEST_CASE("het consistency") {
  auto pc = torch::tensor({1.0, 0.0}, torch::kFloat64).view({1, 2, 1, 1});
  auto pt = torch::tensor({0.0, 1.0}, torch::kFloat64).view({1, 2, 1, 1});
  model::DualPrediction same{pc, pc}, diff{pc, pt}, swapped{pt, pc};
  CHECK(losses::het_consistency(diff, same, same).item<double>() == doctest::Approx(1.0));
  CHECK(losses::het_consistency(same, same, same).item<double>() == 0.0);
  auto a = testutil::random_probs({2, 3, 4, 4}, 1), b = testutil::random_probs({2, 3, 4, 4}, 2);
  model::DualPrediction ab{a, b}, ba{b, a};
  CHECK(losses::het_consistency(ab, ab, ab).item<double>() ==
        doctest::Approx(losses::het_consistency(ba, ba, ba).item<double>()));
}

TEST_CASE("mix consistency") {
  auto q = testutil::random_probs({2, 4, 5, 5}, 7);
  model::DualPrediction same{q, q};
  CHECK(losses::mix_consistency(q, q, same, same, 0.4).item<double>() == doctest::Approx(-2.0));
  auto e0 = torch::one_hot(torch::zeros({1, 3, 3}, torch::kInt64), 2).permute({0, 3, 1, 2}).to(torch::kFloat64);
  auto e1 = torch::one_hot(torch::ones({1, 3, 3}, torch::kInt64), 2).permute({0, 3, 1, 2}).to(torch::kFloat64);
  model::DualPrediction other{e1, e1};
  CHECK(losses::mix_consistency(e0, e0, other, other, 0.4).item<double>() == doctest::Approx(0.0));

  for (std::uint64_t s = 0; s < 5; ++s) {
    auto a = testutil::random_probs({2, 3, 4, 4}, s), b = testutil::random_probs({2, 3, 4, 4}, s + 9);
    CHECK(losses::negative_cosine(a, b).item<double>() == doctest::Approx(negcos_oracle(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("total loss weighting") {
  auto one = torch::ones({}, torch::kFloat64);
  losses::LossParts parts{one, one, one, one};
  auto obj = losses::total_loss(parts, {});
  CHECK(obj.total.item<double>() == doctest::Approx(3.15));
  CHECK(obj.report.total == doctest::Approx(3.15));

  losses::LossWeights zero{0.0, 0.0, 1.0, 0.4};
  CHECK(losses::total_loss(parts, zero).total.item<double>() == 1.0);

  auto off = losses::total_loss(parts, {}, {false, false, false});
  CHECK(off.total.item<double>() == 1.0);
  CHECK(off.report.ctr == 0.0);

  losses::LossParts odd{torch::tensor(0.7, torch::kFloat64), torch::tensor(2.3, torch::kFloat64),
                        torch::tensor(0.05, torch::kFloat64), torch::tensor(-1.9, torch::kFloat64)};
  losses::LossWeights w{0.2, 0.7, 0.5, 0.3};
  auto r = losses::total_loss(odd, w).report;
  CHECK(std::abs(r.total - (r.sup + w.lambda_ctr * r.ctr + w.lambda_con * (r.het + w.lambda_mix * r.mix))) < 1e-9);
  CHECK_THROWS_AS(losses::total_loss({}, {}), Error);
}

TEST_CASE("loss gradients match finite differences") {
  auto y = scribbles({2, 8, 8}, 3, 0.3, 1);
  auto r = gradcheck::check(
      [&](const std::vector<torch::Tensor>& in) { return losses::pce(in[0], in[1], y, 0.4); },
      {testutil::random_probs({2, 3, 8, 8}, 1), testutil::random_probs({2, 3, 8, 8}, 2)});
  CHECK(r.ok);

  r = gradcheck::check(
      [&](const std::vector<torch::Tensor>& in) {
        return losses::het_consistency({in[0], in[1]}, {in[2], in[3]}, {in[4], in[5]});
      },
      {testutil::random_probs({1, 3, 4, 4}, 1), testutil::random_probs({1, 3, 4, 4}, 2),
       testutil::random_probs({1, 3, 4, 4}, 3), testutil::random_probs({1, 3, 4, 4}, 4),
       testutil::random_probs({1, 3, 4, 4}, 5), testutil::random_probs({1, 3, 4, 4}, 6)});
  CHECK(r.ok);

  auto t12 = testutil::random_probs({1, 3, 4, 4}, 7), t21 = testutil::random_probs({1, 3, 4, 4}, 8);
  r = gradcheck::check(
      [&](const std::vector<torch::Tensor>& in) {
        return losses::mix_consistency(t12, t21, {in[0], in[1]}, {in[2], in[3]}, 0.4);
      },
      {testutil::random_probs({1, 3, 4, 4}, 1), testutil::random_probs({1, 3, 4, 4}, 2),
       testutil::random_probs({1, 3, 4, 4}, 3), testutil::random_probs({1, 3, 4, 4}, 4)});
  CHECK(r.ok);
}
