#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace coladiff {

/// Tissue classes of the phantom label map.
enum class Tissue : std::int64_t {
  kBackground = 0,
  kWhiteMatter = 1,
  kGreyMatter = 2,
  kCsf = 3,
  kTumor = 4,
};

inline constexpr std::int64_t kTissueClasses = 5;

/// Integer label grid (H x W, int64) with values in [0, kTissueClasses).
struct TissueMap {
  torch::Tensor labels;

  std::int64_t height() const { return labels.size(0); }
  std::int64_t width() const { return labels.size(1); }
  bool has(Tissue t) const;
};

/// One 2D multi-modal case. Every image is a float32 H x W grid in [0, 1].
struct SliceSample {
  std::map<std::string, torch::Tensor> images;
  TissueMap tissue;
  std::string sample_id;
  std::uint64_t rng_seed = 0;

  std::int64_t size() const { return tissue.height(); }
  const torch::Tensor& image(const std::string& modality) const;
  std::vector<std::string> modalities() const;
};

struct PhantomConfig {
  /// Up to four names; the i-th name renders with the i-th contrast profile
  /// (T1-like, T2-like, T1ce-like, FLAIR-like).
  std::vector<std::string> modalities{"m1", "m2", "m3", "m4"};
  double noise_sigma = 0.02;
  double bias_amplitude = 0.08;
  /// Spatial frequency of the bias field across the field of view; lower is smoother.
  double bias_smoothness = 0.5;
  double tumor_probability = 0.5;
  /// Per-sample standard deviation of the latent tissue properties.
  double tissue_jitter = 0.05;
  /// Sub-samples per pixel axis for partial-volume rendering.
  int supersample = 3;

  void validate() const;
  /// Stable hex digest of every field.
  std::string hash() const;
};

bool valid_phantom_size(std::int64_t size);

/// Deterministic phantom for (seed, size); size must be 16, 32 or 64.
SliceSample generate_phantom(std::uint64_t seed, std::int64_t size,
                             const PhantomConfig& config = {});

/// Per-pixel mean intensity of the pixel's tissue class, measured on the
/// source modality. Background pixels are 0.
torch::Tensor density_map(const SliceSample& sample, const std::string& source_modality);

}  // namespace coladiff
