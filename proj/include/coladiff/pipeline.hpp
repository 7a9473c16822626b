#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "coladiff/codec.hpp"
#include "coladiff/condition.hpp"
#include "coladiff/config.hpp"
#include "coladiff/denoiser.hpp"
#include "coladiff/phantom.hpp"
#include "coladiff/schedule.hpp"

namespace coladiff {

/// Diffusion training and sampling settings. Built from flat config keys; see
/// from_config for the key names.
struct TrainConfig {
  std::int64_t steps = 2000;
  std::int64_t batch_size = 8;
  double learning_rate = 9.6e-5;
  double ema_rate = 0.9999;
  /// Caps the EMA rate at (1 + n) / (10 + n) after n updates.
  bool ema_warmup = true;
  std::int64_t T = 1000;
  double beta1 = 1e-4;
  double betaT = 0.02;
  std::int64_t sample_steps = 50;
  /// Clamp predicted kappa_0 to the training latent range while sampling.
  bool sample_clip = true;
  std::uint64_t seed = 0;
  std::string dataset_root;
  std::string target_modality = "m2";
  /// Number of condition modalities, taken in name order from the non-target
  /// modalities; 0 uses all of them.
  std::int64_t n_inputs = 0;

  bool coop_filter = true;
  bool autoweight = true;
  bool structural_guidance = true;
  bool modified_network = true;
  bool cond_concat = false;
  /// Cooperative filter settings; 0 levels picks by feature size.
  int coop_levels = 0;
  int block_size = 2;
  int match_count = 4;
  double match_tolerance = 3.0;
  std::optional<double> threshold;

  std::int64_t base_width = 64;
  std::vector<std::int64_t> channel_mult{1, 2};
  std::int64_t n_transformer_blocks = 1;
  std::int64_t heads = 4;
  std::int64_t time_embed_dim = 128;

  std::int64_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;

  static TrainConfig from_config(const Config& cfg);
  Config to_config() const;
  void validate(const std::vector<std::string>& modalities) const;

  NoiseSchedule schedule() const;
  std::vector<std::string> sources(const std::vector<std::string>& modalities) const;
  ConditionOptions condition_options() const;
  DenoiserSpec denoiser_spec(std::int64_t latent_channels, std::int64_t latent_size,
                             std::int64_t cond_channels) const;
};

/// Latent targets and raw conditions for a set of samples, computed once with
/// the frozen codec.
struct ConditionedData {
  torch::Tensor kappa0;  // [N, latent_channels, h, w]
  torch::Tensor y;       // [N, cond_channels, h, w]
  std::vector<std::string> sample_ids;
  std::vector<std::string> sources;

  std::int64_t size() const { return kappa0.size(0); }
};

ConditionedData prepare_conditions(const std::vector<SliceSample>& samples, LatentCodec& codec,
                                   const TrainConfig& config);

struct TrainResult {
  DenoiserState state;
  /// Combined loss and its noise-prediction part, one entry per step.
  std::vector<double> loss_trace;
  std::vector<double> eps_trace;
};

using ProgressFn = std::function<void(std::int64_t step, double loss)>;

/// Adam on the combined loss with an EMA shadow. A non-finite loss aborts;
/// when checkpointing is configured the last periodic checkpoint stays on disk.
TrainResult train_diffusion(const TrainConfig& config, LatentCodec& codec,
                            const ConditionedData& train, const ProgressFn& progress = {});
TrainResult train_diffusion(const TrainConfig& config, LatentCodec& codec,
                            const std::vector<SliceSample>& train, const ProgressFn& progress = {});

/// Seed of the starting noise for one sample; independent of batch layout.
std::uint64_t sample_seed(std::uint64_t seed, const std::string& sample_id);

/// Reverse process along strided_plan(T, steps) from per-sample seeded noise,
/// using the EMA parameters (or the raw ones when use_shadow is false). With
/// clip, predicted kappa_0 is held within +-state.latent_bound.
/// y is [B, c, h, w]; returns decoded images [B, H, W] clamped to [0, 1].
torch::Tensor synthesize_batch(DenoiserState& state, LatentCodec& codec, const torch::Tensor& y,
                               const std::vector<std::uint64_t>& seeds,
                               const NoiseSchedule& sched, std::int64_t steps,
                               bool use_shadow = true, bool clip = true);

/// Single-sample synthesis of the target modality, [H, W].
torch::Tensor synthesize(DenoiserState& state, LatentCodec& codec, const SliceSample& sample,
                         const TrainConfig& config, std::int64_t sample_steps, std::uint64_t seed);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& values);

struct SampleScore {
  std::string sample_id;
  double psnr = 0.0;
  double ssim = 0.0;
  /// Best single source modality copied as the prediction.
  double baseline_psnr = 0.0;
  double baseline_ssim = 0.0;
  std::string baseline_source;
};

struct EvalReport {
  std::vector<SampleScore> samples;
  MeanStd psnr, ssim, baseline_psnr, baseline_ssim;
  double runtime_seconds = 0.0;
  std::string config_hash;
  std::int64_t sample_steps = 0;

  nlohmann::json to_json() const;
};

/// Scores of given synthesized images [N, H, W] against the target modality.
EvalReport score_synthesis(const std::vector<SliceSample>& samples, const torch::Tensor& images,
                           const std::string& target, const std::vector<std::string>& sources);

/// Synthesizes every sample (batched) and scores it.
EvalReport evaluate(DenoiserState& state, LatentCodec& codec,
                    const std::vector<SliceSample>& samples, const TrainConfig& config,
                    std::int64_t sample_steps, torch::Tensor* images_out = nullptr);

/// Horizontal strip: inputs, ground truth, synthesis, |error|; written as 8-bit PGM.
void write_comparison_grid(const std::filesystem::path& file, const SliceSample& sample,
                           const std::vector<std::string>& sources, const std::string& target,
                           const torch::Tensor& synthesized);
void write_pgm(const std::filesystem::path& file, const torch::Tensor& image);

enum class AblationVariant {
  kFull,
  kNoCoopFilter,
  kNoStructuralGuidance,
  kNoAutoweight,
  kNoModifiedNetwork
};
const char* variant_name(AblationVariant v);
std::vector<AblationVariant> all_variants();
TrainConfig apply_variant(TrainConfig config, AblationVariant v);

struct AblationCell {
  AblationVariant variant = AblationVariant::kFull;
  std::int64_t n_inputs = 0;
  EvalReport report;
  /// Mean PSNR / SSIM minus the full model at the same input count.
  double delta_psnr = 0.0;
  double delta_ssim = 0.0;
};

struct AblationReport {
  std::vector<AblationCell> cells;

  const AblationCell* find(AblationVariant v, std::int64_t n_inputs) const;
  /// Comparisons at `n_inputs` where the full model's mean PSNR is >= the variant's.
  std::int64_t full_wins(std::int64_t n_inputs) const;
  nlohmann::json to_json() const;
  /// Plain-text table sorted by mean PSNR within each input count.
  std::string table() const;
};

struct AblationRequest {
  TrainConfig base;
  std::vector<AblationVariant> variants = all_variants();
  std::vector<std::int64_t> input_counts{1, 2, 3};
  std::int64_t sample_steps = 50;
  /// When set, per-sample comparison grids are written below this directory.
  std::filesystem::path grid_dir;
  std::int64_t grids_per_cell = 4;
};

/// Trains each (variant, input count) cell from scratch with the shared seed
/// and evaluates it on `test`. The full variant is always run.
AblationReport run_ablation(const AblationRequest& request, LatentCodec& codec,
                            const std::vector<SliceSample>& train,
                            const std::vector<SliceSample>& test,
                            const std::function<void(const AblationCell&)>& on_cell = {});

}  // namespace coladiff
