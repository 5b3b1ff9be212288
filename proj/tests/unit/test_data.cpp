#include "common.hpp"

#include "pclmix/data.hpp"

using namespace pclmix;

TEST_CASE("generator covers all classes and is deterministic") {
  auto one = data::generate_synthetic_dataset(1, 64, 4, 0);
  REQUIRE(one.size() == 1);
  for (int c = 0; c < 4; ++c) CHECK(one[0].dense->eq(c).sum().item<int64_t>() > 0);

  auto a = data::generate_synthetic_dataset(10, 64, 4, 7);
  auto b = data::generate_synthetic_dataset(10, 64, 4, 7);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(testutil::bit_equal(a[i].image, b[i].image));
    CHECK(testutil::bit_equal(a[i].scribble, b[i].scribble));
    CHECK(testutil::bit_equal(*a[i].dense, *b[i].dense));
    CHECK(a[i].fold == static_cast<int>(i % 5));
  }
  CHECK_FALSE(torch::equal(a[0].image, data::generate_synthetic_dataset(1, 64, 4, 8)[0].image));
  CHECK_THROWS_AS(data::generate_synthetic_dataset(10, 16, 4, 0), Error);
}

TEST_CASE("sample i depends only on seed and i") {
  auto few = data::generate_synthetic_dataset(3, 64, 4, 5);
  auto many = data::generate_synthetic_dataset(6, 64, 4, 5);
  CHECK(torch::equal(few[2].image, many[2].image));
}

TEST_CASE("images stay in range") {
  for (const auto& s : data::generate_synthetic_dataset(5, 64, 4, 1)) {
    CHECK(s.image.min().item<float>() >= 0.0f);
    CHECK(s.image.max().item<float>() <= 1.0f);
    CHECK((s.image.scalar_type() == torch::kFloat32));
  }
}

TEST_CASE("fewer classes") {
  for (int k : {2, 3}) {
    auto s = data::generate_synthetic_dataset(2, 64, k, 3);
    CHECK(s[0].dense->max().item<int64_t>() == k - 1);
  }
}

TEST_CASE("scribbles are sparse and consistent with the dense mask") {
  for (const auto& s : data::generate_synthetic_dataset(20, 64, 4, 2)) {
    const double f = data::labeled_fraction(s.scribble);
    CHECK(f > 0.0);
    CHECK(f <= 0.10);
    auto labeled = s.scribble.ne(kIgnore);
    CHECK(torch::equal(s.scribble.masked_select(labeled), s.dense->masked_select(labeled)));
    for (int c = 0; c < 4; ++c) CHECK(s.scribble.eq(c).sum().item<int64_t>() > 0);
  }
  auto bg = torch::zeros({32, 32}, torch::kInt64);
  auto scr = data::scribbles_from_mask(bg, 1);
  auto classes = std::get<0>(at::_unique(scr.masked_select(scr.ne(kIgnore))));
  CHECK(classes.numel() == 1);
  CHECK(classes.item<int64_t>() == 0);
}

TEST_CASE("blob scribbles span the blob") {
  auto mask = torch::zeros({32, 32}, torch::kInt64);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if ((y - 16) * (y - 16) + (x - 16) * (x - 16) <= 49) mask[y][x] = 1;
  auto scr = data::scribbles_from_mask(mask, 3);
  CHECK(scr.eq(1).sum().item<int64_t>() >= 9);
}

TEST_CASE("skeleton of a bar is a thin line") {
  const int h = 9, w = 20;
  std::vector<std::uint8_t> bar(h * w, 0);
  for (int y = 3; y < 6; ++y)
    for (int x = 2; x < 18; ++x) bar[y * w + x] = 1;
  auto skel = data::skeletonize(bar, h, w);
  int count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!skel[y * w + x]) continue;
      ++count;
      CHECK(bar[y * w + x] == 1);
      CHECK(y == 4);
    }
  CHECK(count >= 10);
}

TEST_CASE("folder round trip") {
  auto dir = testutil::temp_dir("folder");
  auto samples = data::generate_synthetic_dataset(4, 64, 4, 9);
  data::write_folder(samples, dir);
  auto back = data::load_folder(dir, {64, 4, 5});
  REQUIRE(back.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(back[i].id == samples[i].id);
    CHECK(torch::equal(back[i].scribble, samples[i].scribble));
    CHECK(torch::equal(*back[i].dense, *samples[i].dense));
    CHECK((back[i].image - samples[i].image).abs().max().item<float>() <= 0.5f / 255.0f + 1e-6f);
  }
  auto small = data::load_folder(dir, {32, 4, 5});
  CHECK(small[0].image.size(0) == 32);
  CHECK(small[0].scribble.size(1) == 32);

  std::filesystem::remove(dir / "scribbles" / (samples[1].id + ".png"));
  try {
    data::load_folder(dir, {64, 4, 5});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(samples[1].id) != std::string::npos);
  }
  auto bad = testutil::temp_dir("folder_bad");
  data::write_folder(std::span(samples).first(1), bad);
  CHECK_THROWS_AS(data::load_folder(bad, {64, 3, 5}), Error);
  CHECK_THROWS_AS(data::load_folder(dir / "missing"), Error);
}

TEST_CASE("resizing") {
  auto img = torch::arange(16, torch::kFloat32).view({4, 4});
  CHECK(torch::allclose(data::resize_bilinear(img, 4, 4), img));
  auto lab = torch::tensor({{0, 1}, {2, 3}}).to(torch::kInt64);
  auto up = data::resize_nearest(lab, 4, 4);
  CHECK(up[0][0].item<int64_t>() == 0);
  CHECK(up[3][3].item<int64_t>() == 3);
  CHECK(up[0][3].item<int64_t>() == 1);
}

TEST_CASE("batching") {
  auto samples = data::generate_synthetic_dataset(10, 32, 4, 1);
  data::BatchStream train(samples, 4, 3, true);
  CHECK(train.batches_per_epoch() == 2);
  CHECK(train.epoch_indices(0) == data::BatchStream(samples, 4, 3, true).epoch_indices(0));
  CHECK(train.epoch_indices(0) != train.epoch_indices(1));
  for (int i = 0; i < 5; ++i) CHECK(train.next().size() == 4);
  CHECK(train.epoch() == 2);

  data::BatchStream eval(samples, 4, 3, false);
  CHECK(eval.batches_per_epoch() == 3);
  CHECK_THROWS_AS(data::BatchStream(samples, 1, 0, true), Error);

  std::vector<size_t> idx{0, 3};
  auto b = data::collate(samples, idx);
  CHECK(b.images.sizes() == torch::IntArrayRef({2, 32, 32}));
  CHECK(b.dense.defined());
  CHECK(b.ids[1] == samples[3].id);

  auto [tr, val] = data::split_by_fold(samples, 0);
  CHECK(val.size() == 2);
  CHECK(tr.size() == 8);
}
