#include <doctest.h>

#include <filesystem>
#include <map>
#include <queue>

#include "coladiff/dataset.hpp"
#include "coladiff/phantom.hpp"
#include "oracles.hpp"

using namespace coladiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("coladiff_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 4-connected component count of the pixels where pred holds.
template <typename Pred>
int components(const torch::Tensor& labels, Pred pred) {
  const auto h = labels.size(0), w = labels.size(1);
  auto acc = labels.accessor<std::int64_t, 2>();
  std::vector<char> seen(static_cast<std::size_t>(h * w), 0);
  int count = 0;
  for (std::int64_t i = 0; i < h; ++i)
    for (std::int64_t j = 0; j < w; ++j) {
      if (seen[i * w + j] || !pred(acc[i][j])) continue;
      ++count;
      std::queue<std::pair<std::int64_t, std::int64_t>> q;
      q.emplace(i, j);
      seen[i * w + j] = 1;
      while (!q.empty()) {
        auto [a, b] = q.front();
        q.pop();
        const std::pair<std::int64_t, std::int64_t> nb[] = {{a + 1, b}, {a - 1, b}, {a, b + 1}, {a, b - 1}};
        for (auto [x, y] : nb) {
          if (x < 0 || y < 0 || x >= h || y >= w || seen[x * w + y] || !pred(acc[x][y])) continue;
          seen[x * w + y] = 1;
          q.emplace(x, y);
        }
      }
    }
  return count;
}

}  // namespace

TEST_CASE("phantom generation is deterministic") {
  auto a = generate_phantom(7, 32);
  auto b = generate_phantom(7, 32);
  CHECK(a.sample_id == b.sample_id);
  CHECK(torch::equal(a.tissue.labels, b.tissue.labels));
  for (const auto& [name, img] : a.images) CHECK(torch::equal(img, b.image(name)));
  CHECK_FALSE(torch::equal(a.image("m1"), generate_phantom(8, 32).image("m1")));
}

TEST_CASE("phantom sizes are validated") {
  for (auto size : {16, 32, 64}) CHECK_NOTHROW(generate_phantom(1, size));
  CHECK_THROWS_AS(generate_phantom(1, 24), std::invalid_argument);
  CHECK_THROWS_AS(generate_phantom(1, 8), std::invalid_argument);
}

TEST_CASE("phantom label and intensity contracts") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = generate_phantom(seed, 32);
    auto counts = torch::bincount(s.tissue.labels.flatten(), {}, kTissueClasses);
    for (int k = 0; k <= 3; ++k) CHECK(counts[k].item<std::int64_t>() > 0);
    CHECK(s.modalities() == std::vector<std::string>{"m1", "m2", "m3", "m4"});
    for (const auto& [name, img] : s.images) {
      CHECK(img.sizes() == s.tissue.labels.sizes());
      CHECK(torch::isfinite(img).all().item<bool>());
      CHECK(img.min().item<float>() >= 0.0f);
      CHECK(img.max().item<float>() <= 1.0f);
    }
    const auto& L = s.tissue.labels;
    CHECK(components(L, [](std::int64_t v) { return v != 0; }) == 1);
    if (s.tissue.has(Tissue::kTumor)) {
      CHECK(components(L, [](std::int64_t v) { return v == 4; }) == 1);
    }
  }
}

TEST_CASE("tumor frequency over a seed sweep") {
  int present = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) present += generate_phantom(seed, 32).tissue.has(Tissue::kTumor);
  CHECK(present >= 35);
  CHECK(present <= 65);
}

TEST_CASE("density map contracts") {
  auto s = generate_phantom(3, 32);
  SUBCASE("constant image") {
    s.images["m1"] = torch::full({32, 32}, 0.5f);
    auto d = density_map(s, "m1");
    auto brain = s.tissue.labels != 0;
    CHECK(torch::allclose(d.masked_select(brain), torch::full({brain.sum().item<std::int64_t>()}, 0.5f)));
    CHECK(d.masked_select(~brain).abs().max().item<float>() == 0.0f);
  }
  SUBCASE("two classes with constant intensities") {
    s.tissue.labels = torch::zeros({32, 32}, torch::kInt64);
    s.tissue.labels.slice(0, 4, 16).fill_(1);
    s.tissue.labels.slice(0, 16, 28).fill_(2);
    auto img = torch::zeros({32, 32});
    img.slice(0, 4, 16).fill_(0.25f);
    img.slice(0, 16, 28).fill_(0.75f);
    s.images["m1"] = img;
    auto values = std::get<0>(torch::_unique(density_map(s, "m1")));
    CHECK(torch::equal(std::get<0>(values.sort()), torch::tensor({0.0f, 0.25f, 0.75f})));
  }
  SUBCASE("class means match a loop oracle") {
    auto d = oracle::to_grid(density_map(s, "m2"));
    auto img = oracle::to_grid(s.image("m2"));
    auto lab = s.tissue.labels.accessor<std::int64_t, 2>();
    std::map<std::int64_t, std::pair<double, int>> acc;
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) {
        acc[lab[i][j]].first += img[i][j];
        acc[lab[i][j]].second += 1;
      }
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) {
        const auto k = lab[i][j];
        const double expected = k == 0 ? 0.0 : acc[k].first / acc[k].second;
        CHECK(d[i][j] == doctest::Approx(expected).epsilon(1e-6));
      }
  }
  SUBCASE("invariant under pixel permutation") {
    auto perm = torch::randperm(32 * 32, torch::TensorOptions().dtype(torch::kInt64));
    SliceSample p = s;
    p.tissue.labels = s.tissue.labels.flatten().index_select(0, perm).view({32, 32});
    p.images["m1"] = s.image("m1").flatten().index_select(0, perm).view({32, 32});
    auto expected = density_map(s, "m1").flatten().index_select(0, perm).view({32, 32});
    CHECK(torch::allclose(density_map(p, "m1"), expected, 1e-6, 1e-7));
  }
  CHECK_THROWS_AS(density_map(s, "m9"), std::invalid_argument);
}

TEST_CASE("split ratio apportionment") {
  const auto r = SplitRatio::parse("140:25:35");
  CHECK(r.counts(200) == std::array<std::size_t, 3>{140, 25, 35});
  CHECK(r.counts(1000) == std::array<std::size_t, 3>{700, 125, 175});
  const auto c = r.counts(10);
  CHECK(c[0] + c[1] + c[2] == 10);
  CHECK_THROWS(SplitRatio::parse("1:2"));
  CHECK_THROWS(SplitRatio::parse("a:b:c"));
}

TEST_CASE("dataset round trip is bit exact") {
  const auto dir = scratch_dir("roundtrip");
  std::vector<SliceSample> samples;
  for (std::uint64_t i = 0; i < 10; ++i) samples.push_back(generate_phantom(100 + i, 16));
  const auto m = write_dataset(samples, SplitRatio::parse("6:2:2"), dir, "abc");
  CHECK(m.train.size() == 6);
  CHECK(m.val.size() == 2);
  CHECK(m.test.size() == 2);

  const auto data = read_dataset(dir);
  CHECK(data.manifest().generator_config_hash == "abc");
  CHECK(data.manifest().image_size == 16);
  for (const auto& s : samples) {
    const auto r = data.load(s.sample_id);
    CHECK(torch::equal(r.tissue.labels, s.tissue.labels));
    for (const auto& [name, img] : s.images) CHECK((r.image(name) - img).abs().max().item<float>() == 0.0f);
  }
}

TEST_CASE("dataset errors name the offending sample") {
  const auto dir = scratch_dir("missing");
  std::vector<SliceSample> samples;
  for (std::uint64_t i = 0; i < 4; ++i) samples.push_back(generate_phantom(i, 16));
  write_dataset(samples, SplitRatio::parse("2:1:1"), dir);
  fs::remove(dir / samples[1].sample_id / "m3.raw");
  try {
    (void)read_dataset(dir);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(samples[1].sample_id) != std::string::npos);
  }
  CHECK_THROWS(read_dataset(scratch_dir("empty")));
}

TEST_CASE("grid files reject a size mismatch") {
  const auto dir = scratch_dir("grid");
  write_grid(dir / "g.raw", torch::rand({4, 4}), "g");
  CHECK(read_grid(dir / "g.raw").grid.sizes() == torch::IntArrayRef{4, 4});
  fs::resize_file(dir / "g.raw", 12);
  CHECK_THROWS(read_grid(dir / "g.raw"));
}
