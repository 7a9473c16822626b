#include <doctest.h>

#include <cmath>

#include "coladiff/wavelet.hpp"
#include "oracles.hpp"

using namespace coladiff;

namespace {
double rel_err(const torch::Tensor& a, const torch::Tensor& b) {
  return ((a.to(torch::kFloat64) - b.to(torch::kFloat64)).norm() / b.to(torch::kFloat64).norm()).item<double>();
}
}  // namespace

TEST_CASE("haar analysis on basis grids") {
  auto c = dwt2(torch::full({2, 2}, 3.0f), 1);
  CHECK(c.approx.item<float>() == doctest::Approx(6.0f));
  CHECK(c.details[0].horizontal.item<float>() == 0.0f);
  CHECK(c.details[0].vertical.item<float>() == 0.0f);
  CHECK(c.details[0].diagonal.item<float>() == 0.0f);

  auto e = dwt2(torch::tensor({{1.0f, -1.0f}, {1.0f, -1.0f}}), 1);
  CHECK(e.approx.item<float>() == 0.0f);
  CHECK(e.details[0].horizontal.item<float>() == 0.0f);
  CHECK(e.details[0].diagonal.item<float>() == 0.0f);
  CHECK(e.details[0].vertical.item<float>() == doctest::Approx(2.0f));
}

TEST_CASE("haar analysis matches a block-wise oracle") {
  torch::manual_seed(0);
  auto x = torch::randn({16, 16}, torch::kFloat64);
  auto p = dwt2(x, 2);
  auto l1 = oracle::haar(oracle::to_grid(x));
  auto l2 = oracle::haar(l1.A);
  auto same = [](const torch::Tensor& t, const oracle::Grid& g) {
    auto tg = oracle::to_grid(t);
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g[0].size(); ++j) m = std::max(m, std::abs(tg[i][j] - g[i][j]));
    return m;
  };
  CHECK(same(p.details[0].horizontal, l1.H) < 1e-12);
  CHECK(same(p.details[0].vertical, l1.V) < 1e-12);
  CHECK(same(p.details[0].diagonal, l1.D) < 1e-12);
  CHECK(same(p.details[1].diagonal, l2.D) < 1e-12);
  CHECK(same(p.approx, l2.A) < 1e-12);
}

TEST_CASE("perfect reconstruction and energy preservation") {
  torch::manual_seed(1);
  for (std::int64_t n : {16, 32, 64}) {
    for (int levels : {1, 2}) {
      auto x = torch::randn({n, n});
      auto p = dwt2(x, levels);
      CHECK(p.approx.size(0) == n >> levels);
      CHECK(rel_err(idwt2(p), x) <= 1e-6);
      double e = oracle::energy(oracle::to_grid(p.approx));
      for (const auto& d : p.details) {
        e += oracle::energy(oracle::to_grid(d.horizontal)) + oracle::energy(oracle::to_grid(d.vertical)) +
             oracle::energy(oracle::to_grid(d.diagonal));
      }
      const double ex = oracle::energy(oracle::to_grid(x));
      CHECK(std::abs(e - ex) / ex <= 1e-6);
    }
  }
  auto batched = torch::randn({3, 5, 8, 8});
  CHECK(rel_err(idwt2(dwt2(batched, 2)), batched) <= 1e-6);
}

TEST_CASE("synthesis special cases and errors") {
  auto zero = dwt2(torch::zeros({8, 8}), 2);
  CHECK(idwt2(zero).abs().max().item<float>() == 0.0f);

  WaveletPyramid p{torch::full({1, 1}, 4.0f), {DetailBands{torch::zeros({1, 1}), torch::zeros({1, 1}), torch::zeros({1, 1})}}};
  CHECK(torch::allclose(idwt2(p), torch::full({2, 2}, 2.0f)));

  CHECK_THROWS(dwt2(torch::zeros({6, 6}), 2));
  CHECK_THROWS(dwt2(torch::zeros({8, 8}), 0));
  p.details[0].vertical = torch::zeros({2, 2});
  CHECK_THROWS(idwt2(p));
}

TEST_CASE("soft threshold") {
  CHECK(soft_threshold(torch::tensor({0.5}), 1.0).item<double>() == 0.0);
  CHECK(soft_threshold(torch::tensor({3.0}), 1.0).item<double>() == 2.0);
  CHECK(soft_threshold(torch::tensor({-3.0}), 1.0).item<double>() == -2.0);
  CHECK_THROWS(soft_threshold(torch::tensor({1.0}), -0.1));

  torch::manual_seed(2);
  auto x = torch::linspace(-5, 5, 1001, torch::kFloat64);
  auto y = soft_threshold(x, 0.7);
  CHECK(torch::allclose(soft_threshold(-x, 0.7), -y));                        // odd
  CHECK((y.diff() >= 0).all().item<bool>());                                   // monotone
  CHECK((y.diff().abs() <= x.diff().abs() + 1e-12).all().item<bool>());       // 1-Lipschitz
}

TEST_CASE("universal threshold zeroes pure-noise subbands") {
  int ok = 0;
  for (int seed = 0; seed < 100; ++seed) {
    torch::manual_seed(seed);
    auto band = 0.3 * torch::randn({16, 16});
    auto sigma = noise_sigma_estimate(band);
    auto lambda = universal_threshold(sigma, band.numel());
    const double zeroed = (soft_threshold(band, lambda) == 0).to(torch::kFloat64).mean().item<double>();
    ok += zeroed >= 0.9;
  }
  CHECK(ok == 100);
}

TEST_CASE("block matching") {
  torch::manual_seed(3);
  SUBCASE("identical patches are a fixed point") {
    auto g = torch::full({8, 8}, 1.5f);
    CHECK(torch::equal(block_match_filter(g, {2, 4, std::nullopt}), g));
  }
  SUBCASE("a single match is the identity") {
    auto g = torch::randn({8, 8});
    CHECK(torch::allclose(block_match_filter(g, {3, 1, std::nullopt}), g, 1e-6, 1e-6));
  }
  SUBCASE("noise variance shrinks on a flat grid") {
    int ok = 0;
    for (int seed = 0; seed < 50; ++seed) {
      torch::manual_seed(seed);
      auto g = 0.5 + 0.1 * torch::randn({16, 16});
      auto f = block_match_filter(g, {4, 8, std::nullopt});
      ok += f.var().item<double>() <= 0.5 * g.var().item<double>();
    }
    CHECK(ok == 50);
  }
  SUBCASE("transposed content gives transposed output") {
    auto g = torch::randn({8, 8});
    auto a = block_match_filter(g.t().contiguous(), {2, 3, std::nullopt});
    auto b = block_match_filter(g, {2, 3, std::nullopt}).t();
    CHECK(torch::allclose(a, b, 1e-5, 1e-6));
  }
  CHECK_THROWS(block_match_filter(torch::zeros({1, 1}), {2, 4, std::nullopt}));
  CHECK_THROWS(block_match_filter(torch::zeros({2, 2}), {2, 4, std::nullopt}));
  CHECK_THROWS(block_match_filter(torch::zeros({4, 4}), {2, 0, std::nullopt}));
}

TEST_CASE("cooperative filter") {
  CoopFilterConfig cfg;
  CHECK(coop_filter_levels(cfg, 8, 8) == 1);
  CHECK(coop_filter_levels(cfg, 16, 16) == 2);

  auto zero = torch::zeros({2, 4, 16, 16});
  CHECK(cooperative_filter(zero, cfg).abs().max().item<float>() == 0.0f);

  for (auto shape : {std::vector<std::int64_t>{16, 16}, {3, 8, 8}, {2, 5, 4, 4}, {1, 2, 2, 2}}) {
    CHECK(cooperative_filter(torch::randn(shape), cfg).sizes() == torch::IntArrayRef(shape));
  }

  SUBCASE("piecewise-constant input is preserved") {
    auto step = torch::zeros({32, 32});
    step.slice(1, 0, 16).fill_(1.0f);
    step.slice(0, 8, 24).slice(1, 20, 28).fill_(0.5f);
    auto f = cooperative_filter(step, cfg);
    CHECK(rel_err(f, step) <= 0.02);
  }
  SUBCASE("noise is reduced") {
    auto clean = torch::zeros({32, 32});
    clean.slice(1, 0, 16).fill_(1.0f);
    clean.slice(0, 16, 32).slice(1, 8, 24).add_(0.5f);
    int ok = 0;
    for (int seed = 0; seed < 50; ++seed) {
      torch::manual_seed(seed);
      auto noisy = clean + 0.1 * torch::randn({32, 32});
      auto f = cooperative_filter(noisy, cfg);
      ok += (f - clean).pow(2).mean().item<double>() < (noisy - clean).pow(2).mean().item<double>();
    }
    CHECK(ok >= 45);
  }
  SUBCASE("disabled filter is the identity") {
    cfg.enabled = false;
    auto x = torch::randn({4, 8, 8});
    CHECK(torch::equal(cooperative_filter(x, cfg), x));
  }
}
