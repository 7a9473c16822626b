#include <doctest.h>

#include <cmath>

#include "coladiff/condition.hpp"
#include "oracles.hpp"

using namespace coladiff;

TEST_CASE("condition layout and channel count") {
  torch::manual_seed(0);
  LatentCodec codec;
  auto s = generate_phantom(11, 32);
  const auto sources = source_modalities(s.modalities(), "m2");
  CHECK(sources == std::vector<std::string>{"m1", "m3", "m4"});
  auto set = build_structural_condition(s, "m2", {"m4", "m1", "m3"}, codec);
  CHECK(set.channels() == 17);
  CHECK(condition_channels(3, 4, true) == 17);
  CHECK(condition_channels(1, 4, false) == 4);
  CHECK(set.y.sizes() == torch::IntArrayRef{17, 8, 8});
  CHECK(set.sources == sources);
  for (int c = 0; c < 12; ++c) CHECK(set.roles[c] == ChannelRole::kModalityLatent);
  for (int c = 12; c < 16; ++c) CHECK(set.roles[c] == ChannelRole::kMask);
  CHECK(set.roles[16] == ChannelRole::kDensity);

  // Latent channels follow sorted source order and use the same encoder.
  torch::NoGradGuard no_grad;
  CHECK(torch::allclose(set.y.slice(0, 4, 8), codec->encode(s.image("m3"))[0], 1e-5, 1e-6));

  auto masks = set.y.slice(0, 12, 16);
  CHECK(masks.min().item<float>() >= 0.0f);
  CHECK(masks.max().item<float>() <= 1.0f);
  CHECK((masks.sum(0) <= 1.0f + 1e-6f).all().item<bool>());

  ConditionOptions plain;
  plain.structural_guidance = false;
  CHECK(build_structural_condition(s, "m2", sources, codec, plain).channels() == 12);
}

TEST_CASE("condition errors") {
  LatentCodec codec;
  auto s = generate_phantom(1, 16);
  CHECK_THROWS(build_structural_condition(s, "m2", {"m1", "m2"}, codec));
  CHECK_THROWS(build_structural_condition(s, "m2", {}, codec));
  CHECK_THROWS(build_structural_condition(s, "m2", {"m1", "m1"}, codec));
  ConditionOptions opts;
  opts.density_source = "m4";
  CHECK_THROWS(build_structural_condition(s, "m2", {"m1"}, codec, opts));
}

TEST_CASE("pooled masks match a loop oracle") {
  auto s = generate_phantom(5, 32);
  auto masks = tissue_masks(s.tissue, 4);
  auto labels = s.tissue.labels.accessor<std::int64_t, 2>();
  oracle::Grid brain(32, std::vector<double>(32));
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) brain[i][j] = labels[i][j] != 0;
  auto occupancy = oracle::pool(brain, 4);
  auto sums = oracle::to_grid(masks.sum(0));
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) CHECK(sums[i][j] == doctest::Approx(occupancy[i][j]).epsilon(1e-6));

  TissueMap empty{torch::zeros({16, 16}, torch::kInt64)};
  CHECK(tissue_masks(empty, 4).abs().max().item<float>() == 0.0f);
}

TEST_CASE("channel energy") {
  CHECK(channel_energy(torch::zeros({4, 4}), 1.0, 1e-4) == doctest::Approx(0.01));
  CHECK(channel_energy(torch::ones({2, 2}), 1.0, 1e-12) == doctest::Approx(2.0));
  CHECK(channel_energy(torch::randn({3, 3}), 0.0, 1e-4) == 0.0);
  CHECK_THROWS(channel_energy(torch::ones({2, 2}), 1.0, 0.0));
  CHECK_THROWS(channel_energy(torch::full({2, 2}, NAN), 1.0, 1e-4));

  // Scaling one channel scales only its own energy.
  torch::manual_seed(1);
  auto y = torch::randn({1, 3, 4, 4}, torch::kFloat64);
  auto mu = torch::ones({3}, torch::kFloat64);
  auto g = channel_energies(y, mu, 1e-30);
  auto y2 = y.clone();
  y2[0][1] *= 3.0;
  auto g2 = channel_energies(y2, mu, 1e-30);
  CHECK(g2[0][1].item<double>() == doctest::Approx(3.0 * g[0][1].item<double>()).epsilon(1e-12));
  CHECK(g2[0][0].item<double>() == g[0][0].item<double>());
  CHECK(g2[0][2].item<double>() == g[0][2].item<double>());
}

TEST_CASE("energy normalisation") {
  auto eq = normalize_energies(torch::full({5}, 2.0, torch::kFloat64), 1e-30);
  CHECK(torch::allclose(eq, torch::ones({5}, torch::kFloat64)));
  auto one_hot = normalize_energies(torch::tensor({3.0, 0.0, 0.0, 0.0}, torch::kFloat64), 1e-30);
  CHECK(one_hot[0].item<double>() == doctest::Approx(2.0));
  CHECK(one_hot.slice(0, 1).abs().max().item<double>() == 0.0);

  torch::manual_seed(2);
  auto g = torch::rand({17}, torch::kFloat64);
  auto n = normalize_energies(g, 1e-4);
  double ss = 0.0;
  for (int i = 0; i < 17; ++i) ss += g[i].item<double>() * g[i].item<double>();
  for (int i = 0; i < 17; ++i) {
    CHECK(n[i].item<double>() == doctest::Approx(std::sqrt(17.0) * g[i].item<double>() / std::sqrt(ss + 1e-4)).epsilon(1e-6));
  }
}

TEST_CASE("gate channels") {
  torch::manual_seed(3);
  auto y = torch::randn({6, 4, 4});
  auto start = GateParams::identity_start(6);
  CHECK(torch::allclose(gate_channels(y, start), 1.5 * y, 0, 1e-7));

  auto closed = start;
  closed.o = torch::full({6}, -200.0);
  CHECK(torch::allclose(gate_channels(y, closed), y));

  GateParams rnd{torch::rand({6}) + 0.5, torch::randn({6}), torch::randn({6}), 1e-4};
  auto f = gate_factors(y, rnd)[0];
  std::vector<std::vector<double>> rows;
  for (int c = 0; c < 6; ++c) rows.push_back(oracle::to_vec(y[c]));
  auto ref = oracle::gate_factors(rows, oracle::to_vec(rnd.mu), oracle::to_vec(rnd.nu), oracle::to_vec(rnd.o), 1e-4);
  for (int c = 0; c < 6; ++c) {
    CHECK(f[c].item<double>() > 1.0);
    CHECK(f[c].item<double>() < 2.0);
    CHECK(f[c].item<double>() == doctest::Approx(ref[c]).epsilon(1e-6));
  }
  auto batched = gate_channels(y.unsqueeze(0).repeat({2, 1, 1, 1}), rnd);
  CHECK(torch::allclose(batched[1], gate_channels(y, rnd)));
  CHECK_THROWS(gate_channels(torch::randn({5, 4, 4}), rnd));
}

TEST_CASE("auto-weight module starts at a constant 1.5 gain and trains") {
  AutoWeight aw(17);
  CHECK(aw->parameters().size() == 3);
  auto y = torch::randn({2, 17, 8, 8});
  CHECK(torch::allclose(aw->forward(y), 1.5 * y, 0, 1e-6));
  aw->forward(y).pow(2).sum().backward();
  for (const auto& p : aw->parameters()) CHECK(p.grad().defined());
}
