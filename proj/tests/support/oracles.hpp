#pragma once

// Independent scalar reimplementations used as test oracles. They work on
// plain std::vector<double> with explicit loops and share no code with the
// library beyond tensor element access.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <torch/torch.h>

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const torch::Tensor& t) {
  auto c = t.to(torch::kFloat64).contiguous();
  Grid g(static_cast<std::size_t>(c.size(0)), std::vector<double>(static_cast<std::size_t>(c.size(1))));
  auto acc = c.accessor<double, 2>();
  for (std::int64_t i = 0; i < c.size(0); ++i)
    for (std::int64_t j = 0; j < c.size(1); ++j) g[i][j] = acc[i][j];
  return g;
}

inline std::vector<double> to_vec(const torch::Tensor& t) {
  auto c = t.to(torch::kFloat64).contiguous().flatten();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

// alpha_bar_t as a running product of (1 - beta_i), beta linear in i.
inline std::vector<double> alpha_bar(std::int64_t T, double b1, double bT) {
  std::vector<double> out(static_cast<std::size_t>(T) + 1, 1.0);
  double prod = 1.0;
  for (std::int64_t t = 1; t <= T; ++t) {
    const double beta = b1 + (bT - b1) * static_cast<double>(t - 1) / static_cast<double>(T - 1);
    prod *= 1.0 - beta;
    out[static_cast<std::size_t>(t)] = prod;
  }
  return out;
}

inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double psnr(const std::vector<double>& a, const std::vector<double>& b, double max_val) {
  const double m = mse(a, b);
  if (m == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(max_val * max_val / m));
}

// Sliding-window SSIM: each 7x7 window is weighted by a Gaussian (sigma 1.5)
// and the local statistics are accumulated directly.
inline double ssim(const Grid& a, const Grid& b) {
  constexpr int k = 7;
  double w[k][k];
  double total = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double di = i - 3, dj = j - 3;
      w[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
      total += w[i][j];
    }
  for (auto& row : w)
    for (auto& v : row) v /= total;
  const double c1 = 1e-4, c2 = 9e-4;
  const int H = static_cast<int>(a.size()), W = static_cast<int>(a[0].size());
  double acc = 0.0;
  int count = 0;
  for (int r = 0; r + k <= H; ++r)
    for (int c = 0; c + k <= W; ++c) {
      double ma = 0, mb = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          ma += w[i][j] * a[r + i][c + j];
          mb += w[i][j] * b[r + i][c + j];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double da = a[r + i][c + j] - ma, db = b[r + i][c + j] - mb;
          va += w[i][j] * da * da;
          vb += w[i][j] * db * db;
          cov += w[i][j] * da * db;
        }
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / count;
}

// Gate factors 1 + sigmoid(nu * Ghat + o) for one condition y[c][pixels].
inline std::vector<double> gate_factors(const std::vector<std::vector<double>>& y,
                                        const std::vector<double>& mu, const std::vector<double>& nu,
                                        const std::vector<double>& o, double varpi) {
  const std::size_t S = y.size();
  std::vector<double> G(S);
  for (std::size_t c = 0; c < S; ++c) {
    double sq = 0.0;
    for (const double v : y[c]) sq += v * v;
    G[c] = mu[c] * std::sqrt(sq + varpi);
  }
  double norm = 0.0;
  for (const double g : G) norm += g * g;
  norm = std::sqrt(norm + varpi);
  std::vector<double> out(S);
  for (std::size_t c = 0; c < S; ++c) {
    const double ghat = std::sqrt(static_cast<double>(S)) * G[c] / norm;
    out[c] = 1.0 + 1.0 / (1.0 + std::exp(-(nu[c] * ghat + o[c])));
  }
  return out;
}

// One level of the orthonormal Haar analysis, block by block.
struct HaarLevel {
  Grid A, H, V, D;
};
inline HaarLevel haar(const Grid& x) {
  const std::size_t h = x.size() / 2, w = x[0].size() / 2;
  HaarLevel out{Grid(h, std::vector<double>(w)), Grid(h, std::vector<double>(w)),
                Grid(h, std::vector<double>(w)), Grid(h, std::vector<double>(w))};
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double a = x[2 * i][2 * j], b = x[2 * i][2 * j + 1];
      const double c = x[2 * i + 1][2 * j], d = x[2 * i + 1][2 * j + 1];
      out.A[i][j] = (a + b + c + d) / 2;
      out.H[i][j] = (a + b - c - d) / 2;
      out.V[i][j] = (a - b + c - d) / 2;
      out.D[i][j] = (a - b - c + d) / 2;
    }
  return out;
}

inline double energy(const Grid& g) {
  double s = 0.0;
  for (const auto& row : g)
    for (const double v : row) s += v * v;
  return s;
}

// Mean over factor x factor windows.
inline Grid pool(const Grid& x, std::size_t f) {
  const std::size_t h = x.size() / f, w = x[0].size() / f;
  Grid out(h, std::vector<double>(w, 0.0));
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < f; ++a)
        for (std::size_t b = 0; b < f; ++b) s += x[i * f + a][j * f + b];
      out[i][j] = s / static_cast<double>(f * f);
    }
  return out;
}

// Relative error of an analytic gradient against central differences over a
// random subset of scalar parameters: ||g_a - g_n|| / ||g_n||.
struct GradCheck {
  double rel_err = 0.0;
  double analytic_norm = 0.0;
};

inline GradCheck finite_difference(std::vector<torch::Tensor> params,
                                   const std::function<torch::Tensor()>& loss_fn,
                                   std::size_t subset, double step, std::uint64_t seed) {
  for (auto& p : params) p.mutable_grad() = torch::Tensor();
  auto loss = loss_fn();
  loss.backward();
  std::vector<std::pair<std::size_t, std::int64_t>> picks;
  std::int64_t total = 0;
  for (const auto& p : params) total += p.numel();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> pick(0, total - 1);
  while (picks.size() < subset) {
    std::int64_t flat = pick(rng);
    std::size_t k = 0;
    while (flat >= params[k].numel()) flat -= params[k++].numel();
    if (!params[k].grad().defined()) continue;
    picks.emplace_back(k, flat);
  }
  double diff = 0.0, norm_n = 0.0, norm_a = 0.0;
  torch::NoGradGuard no_grad;
  for (const auto& [k, flat] : picks) {
    auto view = params[k].view(-1);
    const double analytic = params[k].grad().view(-1)[flat].item<double>();
    const double orig = view[flat].item<double>();
    view[flat].fill_(orig + step);
    const double up = loss_fn().item<double>();
    view[flat].fill_(orig - step);
    const double down = loss_fn().item<double>();
    view[flat].fill_(orig);
    const double numeric = (up - down) / (2.0 * step);
    diff += (analytic - numeric) * (analytic - numeric);
    norm_n += numeric * numeric;
    norm_a += analytic * analytic;
  }
  return {std::sqrt(diff) / std::max(std::sqrt(norm_n), 1e-30), std::sqrt(norm_a)};
}

}  // namespace oracle
