#include "common.hpp"

#include "pclmix/mixaug.hpp"

using namespace pclmix;

TEST_CASE("box side and area") {
  CHECK(mixaug::box_side(64, 64, 0.2) == 29);
  auto plan = mixaug::make_plan(4, 64, 64, 0.2, std::uint64_t{3});
  auto prov = mixaug::provenance_mask(plan);
  for (int i = 0; i < 4; ++i) CHECK(prov[i].sum().item<int64_t>() == 29 * 29);
  CHECK(mixaug::make_plan(4, 64, 64, 0.2, std::uint64_t{3}) == plan);
  CHECK_FALSE(mixaug::make_plan(4, 64, 64, 0.2, std::uint64_t{4}) == plan);
}

TEST_CASE("near-one ratio covers the whole image") {
  CHECK(mixaug::box_side(8, 8, 0.99) == 8);
  auto plan = mixaug::make_plan(2, 8, 8, 0.99, std::uint64_t{1});
  auto x = testutil::randn({2, 8, 8}, 2, torch::kFloat32);
  auto [x12, x21] = mixaug::mix_images(x, plan);
  auto idx2 = torch::tensor(plan.perm2, torch::kInt64);
  CHECK(torch::equal(x12, x.index_select(0, idx2)));
}

TEST_CASE("plan guards") {
  CHECK_THROWS_AS(mixaug::make_plan(1, 8, 8, 0.2, std::uint64_t{0}), Error);
  CHECK_THROWS_AS(mixaug::make_plan(2, 8, 8, 0.0, std::uint64_t{0}), Error);
  CHECK_THROWS_AS(mixaug::make_plan(2, 8, 8, 1.0, std::uint64_t{0}), Error);
}

TEST_CASE("every mixed pixel comes from exactly one source") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto plan = mixaug::make_plan(4, 16, 16, 0.2, seed, seed % 2 == 0);
    auto x = testutil::randn({4, 16, 16}, seed + 100, torch::kFloat32);
    auto [x12, x21] = mixaug::mix_images(x, plan);
    auto x1 = x.index_select(0, torch::tensor(plan.perm1, torch::kInt64));
    auto x2 = x.index_select(0, torch::tensor(plan.perm2, torch::kInt64));
    auto prov = mixaug::provenance_mask(plan);
    CHECK(torch::equal(x12, torch::where(prov, x2, x1)));
    CHECK(torch::equal(x21, torch::where(prov, x1, x2)));
  }
}

TEST_CASE("identity when both orders agree") {
  auto plan = mixaug::make_plan(3, 16, 16, 0.3, std::uint64_t{5});
  plan.perm2 = plan.perm1;
  auto x = testutil::randn({3, 16, 16}, 1, torch::kFloat32);
  auto x1 = x.index_select(0, torch::tensor(plan.perm1, torch::kInt64));
  auto [x12, x21] = mixaug::mix_images(x, plan);
  CHECK(torch::equal(x12, x1));
  CHECK(torch::equal(x21, x1));
  auto y = torch::randint(0, 4, {3, 16, 16}, torch::kInt64);
  auto [y12, y21] = mixaug::mix_labels(y, plan);
  CHECK(torch::equal(y12, y.index_select(0, torch::tensor(plan.perm1, torch::kInt64))));
  auto p = testutil::random_probs({3, 4, 16, 16}, 2);
  auto [p12, p21] = mixaug::mix_predictions(p, plan);
  CHECK(torch::equal(p12, p.index_select(0, torch::tensor(plan.perm1, torch::kInt64))));
}

TEST_CASE("labels and predictions share the image geometry") {
  auto plan = mixaug::make_plan(4, 16, 16, 0.2, std::uint64_t{8});
  auto prov = mixaug::provenance_mask(plan);
  auto ignore = torch::full({4, 16, 16}, kIgnore, torch::kInt64);
  auto [i12, i21] = mixaug::mix_labels(ignore, plan);
  CHECK(i12.eq(kIgnore).all().item<bool>());

  // encode the source index in every modality and compare
  auto src = torch::arange(4, torch::kInt64).view({4, 1, 1}).expand({4, 16, 16}).contiguous();
  auto [l12, l21] = mixaug::mix_labels(src, plan);
  auto [im12, im21] = mixaug::mix_images(src.to(torch::kFloat32), plan);
  auto onehot = torch::one_hot(src, 4).permute({0, 3, 1, 2}).to(torch::kFloat32);
  onehot.requires_grad_(true);
  auto [p12, p21] = mixaug::mix_predictions(onehot, plan);
  CHECK_FALSE(p12.requires_grad());
  CHECK(torch::equal(im12.to(torch::kInt64), l12));
  CHECK(torch::equal(p12.argmax(1), l12));
  CHECK(torch::equal(p21.argmax(1), l21));
  CHECK(p12.sum(1).eq(1).all().item<bool>());
  auto x1 = src.index_select(0, torch::tensor(plan.perm1, torch::kInt64));
  CHECK(torch::equal(l12.ne(x1) | (l12.eq(x1) & prov), prov | l12.ne(x1)));
}
