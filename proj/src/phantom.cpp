#include "coladiff/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "coladiff/config.hpp"
#include "coladiff/rng.hpp"

namespace coladiff {
namespace {

constexpr double kPi = std::numbers::pi;

// Base intensity per contrast profile for WM, GM, CSF, tumor. Several tissue
// pairs overlap within a profile; no single profile separates all classes.
constexpr std::array<std::array<double, 4>, 4> kContrastTable{{
    {0.70, 0.55, 0.15, 0.55},  // T1-like
    {0.35, 0.60, 0.95, 0.80},  // T2-like
    {0.62, 0.56, 0.15, 0.90},  // T1ce-like
    {0.50, 0.56, 0.10, 0.85},  // FLAIR-like
}};

// How each profile responds to the three latent tissue properties that are
// jittered per sample. Three profiles jointly pin down all three properties.
constexpr std::array<std::array<double, 3>, 4> kPropertyLoadings{{
    {1.0, 0.0, 0.0},
    {0.0, 1.0, 0.0},
    {0.6, 0.0, 0.8},
    {0.0, 0.6, 0.8},
}};

struct Ellipse {
  double cu = 0, cv = 0;
  double ru = 1, rv = 1;
  double angle = 0;

  bool contains(double u, double v) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double du = u - cu, dv = v - cv;
    const double a = (c * du + s * dv) / ru;
    const double b = (-s * du + c * dv) / rv;
    return a * a + b * b <= 1.0;
  }
};

struct Harmonic {
  double amplitude = 0;
  int order = 0;
  double phase = 0;
};

// Geometry in a normalized head frame (u, v): the nominal brain outline is
// the unit circle, perturbed by low-order harmonics.
struct Anatomy {
  double cx = 0, cy = 0, rx = 1, ry = 1, rotation = 0;
  std::array<Harmonic, 3> outline{};
  double csf_ratio = 0.88;
  double gm_ratio = 0.68;
  Harmonic sulci{};
  std::array<Ellipse, 2> ventricles{};
  bool has_tumor = false;
  Ellipse tumor{};

  // Pixel-space (x, y) in [-1, 1]^2 to the head frame.
  std::pair<double, double> to_head(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(rotation), s = std::sin(rotation);
    return {(c * dx + s * dy) / rx, (-s * dx + c * dy) / ry};
  }

  Tissue label(double x, double y) const {
    const auto [u, v] = to_head(x, y);
    const double rho = std::hypot(u, v);
    const double theta = std::atan2(v, u);
    double outline_radius = 1.0;
    for (const auto& h : outline) outline_radius += h.amplitude * std::cos(h.order * theta + h.phase);
    const double q = rho / outline_radius;
    if (q > 1.0) return Tissue::kBackground;

    Tissue t;
    if (q > csf_ratio) {
      t = Tissue::kCsf;
    } else if (q > gm_ratio + sulci.amplitude * std::cos(sulci.order * theta + sulci.phase)) {
      t = Tissue::kGreyMatter;
    } else {
      t = Tissue::kWhiteMatter;
    }
    for (const auto& vent : ventricles) {
      if (vent.contains(u, v)) t = Tissue::kCsf;
    }
    if (has_tumor && tumor.contains(u, v)) t = Tissue::kTumor;
    return t;
  }
};

Anatomy sample_anatomy(Rng& rng, double tumor_probability) {
  Anatomy a;
  a.cx = rng.uniform(-0.04, 0.04);
  a.cy = rng.uniform(-0.04, 0.04);
  a.rx = rng.uniform(0.70, 0.80);
  a.ry = rng.uniform(0.76, 0.84);
  a.rotation = rng.uniform(-0.15, 0.15);
  for (std::size_t k = 0; k < a.outline.size(); ++k) {
    a.outline[k] = {rng.uniform(0.0, 0.03), static_cast<int>(k) + 2, rng.uniform(0.0, 2 * kPi)};
  }
  a.csf_ratio = rng.uniform(0.86, 0.90);
  a.gm_ratio = rng.uniform(0.62, 0.70);
  a.sulci = {rng.uniform(0.04, 0.08), static_cast<int>(rng.integer(5, 8)), rng.uniform(0.0, 2 * kPi)};

  const double vu = rng.uniform(0.10, 0.16);
  const double vv = rng.uniform(-0.12, 0.0);
  const double vru = rng.uniform(0.05, 0.08);
  const double vrv = rng.uniform(0.14, 0.22);
  const double vtilt = rng.uniform(0.0, 0.25);
  a.ventricles[0] = {-vu, vv, vru, vrv, vtilt};
  a.ventricles[1] = {vu, vv, vru, vrv, -vtilt};

  // Drawn unconditionally so the stream position after this call does not
  // depend on the coin flip.
  const bool coin = rng.bernoulli(tumor_probability);
  const double t_rho = rng.uniform(0.0, 0.40);
  const double t_theta = rng.uniform(0.0, 2 * kPi);
  const double t_ru = rng.uniform(0.14, 0.24);
  const double t_rv = rng.uniform(0.14, 0.24);
  const double t_angle = rng.uniform(0.0, kPi);
  a.has_tumor = coin;
  a.tumor = {t_rho * std::cos(t_theta), t_rho * std::sin(t_theta), t_ru, t_rv, t_angle};
  return a;
}

struct BiasField {
  std::array<double, 3> coeff{};
  std::array<double, 3> phase{};
  double amplitude = 0;
  double frequency = 0;

  double operator()(double x, double y) const {
    const double f = kPi * frequency;
    const double s = coeff[0] * std::sin(f * x + phase[0]) + coeff[1] * std::sin(f * y + phase[1]) +
                     coeff[2] * std::sin(f * (x + y) * (std::numbers::sqrt2 / 2.0) + phase[2]);
    return amplitude * s / std::sqrt(3.0);
  }
};

BiasField sample_bias(Rng& rng, double amplitude, double frequency) {
  BiasField b;
  b.amplitude = amplitude;
  b.frequency = frequency;
  for (std::size_t i = 0; i < 3; ++i) {
    b.coeff[i] = rng.uniform(-1.0, 1.0);
    b.phase[i] = rng.uniform(0.0, 2 * kPi);
  }
  return b;
}

}  // namespace

bool TissueMap::has(Tissue t) const {
  return (labels == static_cast<std::int64_t>(t)).any().item<bool>();
}

const torch::Tensor& SliceSample::image(const std::string& modality) const {
  const auto it = images.find(modality);
  if (it == images.end()) {
    throw std::invalid_argument("sample '" + sample_id + "' has no modality '" + modality + "'");
  }
  return it->second;
}

std::vector<std::string> SliceSample::modalities() const {
  std::vector<std::string> names;
  names.reserve(images.size());
  for (const auto& [name, _] : images) names.push_back(name);
  return names;
}

void PhantomConfig::validate() const {
  if (modalities.empty() || modalities.size() > kContrastTable.size()) {
    throw std::invalid_argument("phantom config needs between 1 and 4 modality names");
  }
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (modalities[i].empty()) throw std::invalid_argument("empty modality name");
    for (std::size_t j = 0; j < i; ++j) {
      if (modalities[i] == modalities[j]) {
        throw std::invalid_argument("duplicate modality name '" + modalities[i] + "'");
      }
    }
  }
  if (!(noise_sigma >= 0) || !(bias_amplitude >= 0) || !(bias_smoothness >= 0) ||
      !(tissue_jitter >= 0) || !(tumor_probability >= 0 && tumor_probability <= 1) ||
      supersample < 1) {
    throw std::invalid_argument("phantom config value out of range");
  }
}

std::string PhantomConfig::hash() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& m : modalities) os << m << ';';
  os << noise_sigma << ';' << bias_amplitude << ';' << bias_smoothness << ';' << tumor_probability
     << ';' << tissue_jitter << ';' << supersample;
  return hex_digest(os.str());
}

bool valid_phantom_size(std::int64_t size) { return size == 16 || size == 32 || size == 64; }

SliceSample generate_phantom(std::uint64_t seed, std::int64_t size, const PhantomConfig& config) {
  if (!valid_phantom_size(size)) {
    throw std::invalid_argument("phantom size must be 16, 32 or 64, got " + std::to_string(size));
  }
  config.validate();

  Rng rng(seed);
  const Anatomy anatomy = sample_anatomy(rng, config.tumor_probability);

  // Latent tissue properties for WM, GM, CSF, tumor.
  std::array<std::array<double, 3>, 4> properties{};
  for (auto& p : properties) {
    for (auto& v : p) v = rng.normal(0.0, config.tissue_jitter);
  }
  const BiasField shared_bias = sample_bias(rng, config.bias_amplitude, config.bias_smoothness);
  std::vector<BiasField> own_bias;
  for (std::size_t m = 0; m < config.modalities.size(); ++m) {
    own_bias.push_back(sample_bias(rng, 0.35 * config.bias_amplitude, config.bias_smoothness));
  }

  const std::size_t n_mod = config.modalities.size();
  std::vector<std::array<double, 5>> table(n_mod);
  for (std::size_t m = 0; m < n_mod; ++m) {
    table[m][0] = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      double value = kContrastTable[m][k];
      for (std::size_t j = 0; j < 3; ++j) value += kPropertyLoadings[m][j] * properties[k][j];
      table[m][k + 1] = std::clamp(value, 0.0, 1.0);
    }
  }

  auto labels = torch::zeros({size, size}, torch::kInt64);
  auto label_acc = labels.accessor<std::int64_t, 2>();
  std::vector<torch::Tensor> images;
  std::vector<torch::TensorAccessor<float, 2>> image_acc;
  images.reserve(n_mod);
  for (std::size_t m = 0; m < n_mod; ++m) {
    images.push_back(torch::zeros({size, size}, torch::kFloat32));
    image_acc.push_back(images.back().accessor<float, 2>());
  }

  const int ss = config.supersample;
  const double pixel = 2.0 / static_cast<double>(size);
  std::vector<double> fraction(kTissueClasses);
  for (std::int64_t i = 0; i < size; ++i) {
    for (std::int64_t j = 0; j < size; ++j) {
      const double y = -1.0 + (static_cast<double>(i) + 0.5) * pixel;
      const double x = -1.0 + (static_cast<double>(j) + 0.5) * pixel;
      label_acc[i][j] = static_cast<std::int64_t>(anatomy.label(x, y));

      std::fill(fraction.begin(), fraction.end(), 0.0);
      for (int si = 0; si < ss; ++si) {
        for (int sj = 0; sj < ss; ++sj) {
          const double sy = -1.0 + (static_cast<double>(i) + (si + 0.5) / ss) * pixel;
          const double sx = -1.0 + (static_cast<double>(j) + (sj + 0.5) / ss) * pixel;
          fraction[static_cast<std::size_t>(anatomy.label(sx, sy))] += 1.0 / (ss * ss);
        }
      }
      for (std::size_t m = 0; m < n_mod; ++m) {
        double value = 0.0;
        for (std::size_t k = 1; k < fraction.size(); ++k) value += fraction[k] * table[m][k];
        value *= 1.0 + shared_bias(x, y) + own_bias[m](x, y);
        value += config.noise_sigma * rng.normal();
        image_acc[m][i][j] = static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
  }

  SliceSample sample;
  sample.tissue.labels = labels;
  sample.sample_id = "phantom-" + std::to_string(seed);
  sample.rng_seed = seed;
  for (std::size_t m = 0; m < n_mod; ++m) sample.images.emplace(config.modalities[m], images[m]);
  return sample;
}

torch::Tensor density_map(const SliceSample& sample, const std::string& source_modality) {
  const torch::Tensor& image = sample.image(source_modality);
  const auto& labels = sample.tissue.labels;
  if (image.sizes() != labels.sizes()) {
    throw std::invalid_argument("image and tissue map shapes differ");
  }
  auto flat_labels = labels.reshape({-1});
  auto flat_image = image.reshape({-1}).to(torch::kFloat64);
  auto sums = torch::zeros({kTissueClasses}, torch::kFloat64).index_add_(0, flat_labels, flat_image);
  auto counts = torch::bincount(flat_labels, {}, kTissueClasses).to(torch::kFloat64);
  auto means = sums / counts.clamp_min(1.0);
  means.index_put_({0}, 0.0);
  return means.index({flat_labels}).reshape(labels.sizes()).to(torch::kFloat32);
}

}  // namespace coladiff
