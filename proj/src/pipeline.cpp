#include "coladiff/pipeline.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "coladiff/metrics.hpp"

namespace coladiff {

// --- configuration -----------------------------------------------------------

TrainConfig TrainConfig::from_config(const Config& cfg) {
  TrainConfig c;
  c.steps = cfg.get<std::int64_t>("steps", c.steps);
  c.batch_size = cfg.get<std::int64_t>("batch_size", c.batch_size);
  c.learning_rate = cfg.get<double>("lr", c.learning_rate);
  c.ema_rate = cfg.get<double>("ema_rate", c.ema_rate);
  c.ema_warmup = cfg.get<bool>("ema_warmup", c.ema_warmup);
  c.T = cfg.get<std::int64_t>("T", c.T);
  c.beta1 = cfg.get<double>("beta1", c.beta1);
  c.betaT = cfg.get<double>("betaT", c.betaT);
  c.sample_steps = cfg.get<std::int64_t>("sample_steps", c.sample_steps);
  c.sample_clip = cfg.get<bool>("sample_clip", c.sample_clip);
  c.seed = cfg.get<std::uint64_t>("seed", c.seed);
  c.dataset_root = cfg.get<std::string>("data", c.dataset_root);
  c.target_modality = cfg.get<std::string>("target", c.target_modality);
  c.n_inputs = cfg.get<std::int64_t>("n_inputs", c.n_inputs);
  c.coop_filter = cfg.get<bool>("coop_filter.enabled", c.coop_filter);
  c.autoweight = cfg.get<bool>("autoweight.enabled", c.autoweight);
  c.structural_guidance = cfg.get<bool>("structural_guidance.enabled", c.structural_guidance);
  c.modified_network = cfg.get<bool>("modified_network", c.modified_network);
  c.cond_concat = cfg.get<bool>("cond_concat", c.cond_concat);
  c.coop_levels = cfg.get<int>("levels", c.coop_levels);
  c.block_size = cfg.get<int>("block_size", c.block_size);
  c.match_count = cfg.get<int>("match_count", c.match_count);
  c.match_tolerance = cfg.get<double>("match_tolerance", c.match_tolerance);
  if (cfg.contains("threshold") && cfg.json().at("threshold").is_number()) {
    c.threshold = cfg.get<double>("threshold", 0.0);
  }
  c.base_width = cfg.get<std::int64_t>("base_width", c.base_width);
  c.channel_mult = cfg.get<std::vector<std::int64_t>>("channel_mult", c.channel_mult);
  c.n_transformer_blocks = cfg.get<std::int64_t>("n_transformer_blocks", c.n_transformer_blocks);
  c.heads = cfg.get<std::int64_t>("heads", c.heads);
  c.time_embed_dim = cfg.get<std::int64_t>("time_embed_dim", c.time_embed_dim);
  c.checkpoint_every = cfg.get<std::int64_t>("checkpoint_every", c.checkpoint_every);
  c.checkpoint_path = cfg.get<std::string>("checkpoint", c.checkpoint_path.string());
  return c;
}

Config TrainConfig::to_config() const {
  Config cfg;
  cfg.set("steps", steps)
      .set("batch_size", batch_size)
      .set("lr", learning_rate)
      .set("ema_rate", ema_rate)
      .set("ema_warmup", ema_warmup)
      .set("T", T)
      .set("beta1", beta1)
      .set("betaT", betaT)
      .set("sample_steps", sample_steps)
      .set("sample_clip", sample_clip)
      .set("seed", seed)
      .set("data", dataset_root)
      .set("target", target_modality)
      .set("n_inputs", n_inputs)
      .set("coop_filter.enabled", coop_filter)
      .set("autoweight.enabled", autoweight)
      .set("structural_guidance.enabled", structural_guidance)
      .set("modified_network", modified_network)
      .set("cond_concat", cond_concat)
      .set("levels", coop_levels)
      .set("block_size", block_size)
      .set("match_count", match_count)
      .set("match_tolerance", match_tolerance)
      .set("base_width", base_width)
      .set("channel_mult", channel_mult)
      .set("n_transformer_blocks", n_transformer_blocks)
      .set("heads", heads)
      .set("time_embed_dim", time_embed_dim)
      .set("checkpoint_every", checkpoint_every)
      .set("checkpoint", checkpoint_path.string());
  if (threshold) cfg.set("threshold", *threshold);
  return cfg;
}

void TrainConfig::validate(const std::vector<std::string>& modalities) const {
  if (steps < 0 || batch_size < 1 || !(learning_rate > 0.0) || sample_steps < 1 || n_inputs < 0) {
    throw std::invalid_argument("train config: steps, batch_size, lr and sample_steps must be positive");
  }
  if (!(ema_rate >= 0.0 && ema_rate < 1.0)) throw std::invalid_argument("train config: ema_rate must lie in [0, 1)");
  if (sample_steps > T) throw std::invalid_argument("train config: sample_steps exceeds T");
  if (std::find(modalities.begin(), modalities.end(), target_modality) == modalities.end()) {
    throw std::invalid_argument("train config: target modality '" + target_modality +
                                "' is not in the dataset");
  }
  if (n_inputs > static_cast<std::int64_t>(modalities.size()) - 1) {
    throw std::invalid_argument("train config: n_inputs exceeds the available source modalities");
  }
}

NoiseSchedule TrainConfig::schedule() const { return NoiseSchedule::linear(T, beta1, betaT); }

std::vector<std::string> TrainConfig::sources(const std::vector<std::string>& modalities) const {
  auto all = source_modalities(modalities, target_modality);
  if (n_inputs > 0 && n_inputs < static_cast<std::int64_t>(all.size())) {
    all.resize(static_cast<std::size_t>(n_inputs));
  }
  return all;
}

ConditionOptions TrainConfig::condition_options() const {
  ConditionOptions opts;
  opts.structural_guidance = structural_guidance;
  return opts;
}

DenoiserSpec TrainConfig::denoiser_spec(std::int64_t latent_channels, std::int64_t latent_size,
                                        std::int64_t cond_channels) const {
  DenoiserSpec spec;
  spec.latent_channels = latent_channels;
  spec.latent_size = latent_size;
  spec.cond_channels = cond_channels;
  spec.base_width = base_width;
  spec.channel_mult = channel_mult;
  spec.n_transformer_blocks = n_transformer_blocks;
  spec.heads = heads;
  spec.time_embed_dim = time_embed_dim;
  spec.modified_network = modified_network;
  spec.cond_concat = cond_concat;
  spec.autoweight = autoweight;
  spec.coop_filter.enabled = coop_filter;
  spec.coop_filter.levels = coop_levels;
  spec.coop_filter.approx_policy = {block_size, match_count, std::nullopt};
  spec.coop_filter.diagonal_policy = {block_size, match_count, std::nullopt};
  spec.coop_filter.threshold = threshold;
  spec.coop_filter.match_tolerance = match_tolerance;
  return spec;
}

// --- training ----------------------------------------------------------------

ConditionedData prepare_conditions(const std::vector<SliceSample>& samples, LatentCodec& codec,
                                   const TrainConfig& config) {
  if (samples.empty()) throw std::invalid_argument("prepare_conditions: no samples");
  const auto sources = config.sources(samples.front().modalities());
  ConditionedData data;
  data.sources = sources;
  std::vector<torch::Tensor> targets, conds;
  torch::NoGradGuard no_grad;
  for (const auto& s : samples) {
    if (!s.images.contains(config.target_modality)) {
      throw std::invalid_argument("sample " + s.sample_id + " lacks target modality " +
                                  config.target_modality);
    }
    targets.push_back(s.image(config.target_modality).unsqueeze(0));
    conds.push_back(
        build_structural_condition(s, config.target_modality, sources, codec, config.condition_options()).y);
    data.sample_ids.push_back(s.sample_id);
  }
  auto images = torch::stack(targets);
  std::vector<torch::Tensor> latents;
  for (std::int64_t i = 0; i < images.size(0); i += 128) {
    latents.push_back(codec->encode(images.slice(0, i, std::min(i + 128, images.size(0)))));
  }
  data.kappa0 = torch::cat(latents, 0);
  data.y = torch::stack(conds);
  return data;
}

TrainResult train_diffusion(const TrainConfig& config, LatentCodec& codec,
                            const ConditionedData& train, const ProgressFn& progress) {
  if (train.size() == 0) throw std::invalid_argument("train_diffusion: empty training split");
  const auto sched = config.schedule();
  const auto spec = config.denoiser_spec(train.kappa0.size(1), train.kappa0.size(2), train.y.size(1));

  TrainResult result;
  result.state = build_denoiser(spec, config.seed);
  auto& state = result.state;
  state.latent_bound = train.kappa0.abs().max().item<double>();
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed ^ 0x5eedULL);
  torch::optim::Adam optim(state.model->parameters(),
                           torch::optim::AdamOptions(config.learning_rate).betas({0.9, 0.999}));
  (void)codec;

  const auto n = train.size();
  const bool checkpointing = config.checkpoint_every > 0 && !config.checkpoint_path.empty();
  for (std::int64_t step = 1; step <= config.steps; ++step) {
    auto idx = torch::randint(n, {config.batch_size}, gen, torch::kInt64);
    auto t = torch::randint(1, config.T + 1, {config.batch_size}, gen, torch::kInt64);
    auto k0 = train.kappa0.index_select(0, idx);
    auto y = train.y.index_select(0, idx);
    auto eps = torch::randn(k0.sizes(), gen, torch::kFloat32);
    auto kt = forward_diffuse(k0, t, eps, sched);

    auto eps_hat = state.model->forward(kt, t, state.model->gate(y));
    auto le = epsilon_loss(eps, eps_hat);
    auto lkl = kl_term(k0, kt, t, eps_hat, sched);
    const double le_value = le.item<double>(), kl_value = lkl.item<double>();
    if (!std::isfinite(le_value) || !std::isfinite(kl_value)) {
      throw std::runtime_error(
          "diffusion training diverged at step " + std::to_string(step) + " (eps loss " +
          std::to_string(le_value) + ", kl " + std::to_string(kl_value) + ")" +
          (checkpointing ? "; last good checkpoint kept at " + config.checkpoint_path.string() : ""));
    }
    auto loss = combined_loss(le, lkl);
    optim.zero_grad();
    loss.backward();
    optim.step();

    const double n_done = static_cast<double>(state.step_count);
    const double rate = config.ema_warmup ? std::min(config.ema_rate, (1.0 + n_done) / (10.0 + n_done))
                                          : config.ema_rate;
    ema_update(state, rate);
    ++state.step_count;

    result.loss_trace.push_back(le_value + kl_value);
    result.eps_trace.push_back(le_value);
    if (progress) progress(step, le_value + kl_value);
    if (checkpointing && step % config.checkpoint_every == 0) {
      save_denoiser(state, config.checkpoint_path, config.to_config().hash());
    }
  }
  return result;
}

TrainResult train_diffusion(const TrainConfig& config, LatentCodec& codec,
                            const std::vector<SliceSample>& train, const ProgressFn& progress) {
  if (train.empty()) throw std::invalid_argument("train_diffusion: empty training split");
  config.validate(train.front().modalities());
  return train_diffusion(config, codec, prepare_conditions(train, codec, config), progress);
}

// --- sampling ----------------------------------------------------------------

std::uint64_t sample_seed(std::uint64_t seed, const std::string& sample_id) {
  return fnv1a(sample_id + "#" + std::to_string(seed));
}

torch::Tensor synthesize_batch(DenoiserState& state, LatentCodec& codec, const torch::Tensor& y,
                               const std::vector<std::uint64_t>& seeds,
                               const NoiseSchedule& sched, std::int64_t steps, bool use_shadow,
                               bool clip) {
  if (y.dim() != 4 || static_cast<std::size_t>(y.size(0)) != seeds.size()) {
    throw std::invalid_argument("synthesize: one seed per condition required");
  }
  const auto& spec = state.spec;
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> noise;
  for (const auto s : seeds) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(s);
    noise.push_back(torch::randn({1, spec.latent_channels, spec.latent_size, spec.latent_size}, gen,
                                 torch::kFloat32));
  }
  auto kappa = torch::cat(noise, 0);
  auto& net = use_shadow ? state.shadow : state.model;
  const auto y_gated = net->gate(y);
  const auto plan = strided_plan(sched.steps(), steps);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto t = plan[i];
    const auto t_next = i + 1 < plan.size() ? plan[i + 1] : 0;
    auto tt = torch::full({kappa.size(0)}, t, torch::kInt64);
    auto eps_hat = net->forward(kappa, tt, y_gated);
    kappa = reverse_jump(kappa, eps_hat, t, t_next, sched, clip ? state.latent_bound : 0.0);
  }
  return codec->decode(kappa).squeeze(1).clamp(0.0, 1.0);
}

torch::Tensor synthesize(DenoiserState& state, LatentCodec& codec, const SliceSample& sample,
                         const TrainConfig& config, std::int64_t sample_steps, std::uint64_t seed) {
  const auto sources = config.sources(sample.modalities());
  for (const auto& s : sources) {
    if (!sample.images.contains(s)) {
      throw std::invalid_argument("sample " + sample.sample_id + " lacks condition modality " + s);
    }
  }
  const auto cond = build_structural_condition(sample, config.target_modality, sources, codec,
                                               config.condition_options());
  return synthesize_batch(state, codec, cond.y.unsqueeze(0), {sample_seed(seed, sample.sample_id)},
                          config.schedule(), sample_steps, true, config.sample_clip)[0];
}

// --- evaluation --------------------------------------------------------------

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (const auto v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (const auto v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  auto stat = [](const MeanStd& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}}; };
  j["psnr_db"] = stat(psnr);
  j["ssim"] = stat(ssim);
  j["baseline_psnr_db"] = stat(baseline_psnr);
  j["baseline_ssim"] = stat(baseline_ssim);
  j["runtime_seconds"] = runtime_seconds;
  j["config_hash"] = config_hash;
  j["sample_steps"] = sample_steps;
  j["samples"] = nlohmann::json::array();
  for (const auto& s : samples) {
    j["samples"].push_back({{"id", s.sample_id},
                            {"psnr_db", s.psnr},
                            {"ssim", s.ssim},
                            {"baseline_psnr_db", s.baseline_psnr},
                            {"baseline_ssim", s.baseline_ssim},
                            {"baseline_source", s.baseline_source}});
  }
  return j;
}

EvalReport score_synthesis(const std::vector<SliceSample>& samples, const torch::Tensor& images,
                           const std::string& target, const std::vector<std::string>& sources) {
  if (images.size(0) != static_cast<std::int64_t>(samples.size())) {
    throw std::invalid_argument("score_synthesis: one image per sample required");
  }
  EvalReport report;
  std::vector<double> p, s, bp, bs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& sample = samples[i];
    const auto truth = sample.image(target);
    SampleScore score;
    score.sample_id = sample.sample_id;
    score.psnr = psnr(images[static_cast<std::int64_t>(i)], truth);
    score.ssim = ssim(images[static_cast<std::int64_t>(i)], truth);
    score.baseline_psnr = -std::numeric_limits<double>::infinity();
    score.baseline_ssim = -1.0;
    for (const auto& src : sources) {
      const double sp = psnr(sample.image(src), truth);
      if (sp > score.baseline_psnr) {
        score.baseline_psnr = sp;
        score.baseline_source = src;
      }
      score.baseline_ssim = std::max(score.baseline_ssim, ssim(sample.image(src), truth));
    }
    p.push_back(score.psnr);
    s.push_back(score.ssim);
    bp.push_back(score.baseline_psnr);
    bs.push_back(score.baseline_ssim);
    report.samples.push_back(std::move(score));
  }
  report.psnr = mean_std(p);
  report.ssim = mean_std(s);
  report.baseline_psnr = mean_std(bp);
  report.baseline_ssim = mean_std(bs);
  return report;
}

EvalReport evaluate(DenoiserState& state, LatentCodec& codec,
                    const std::vector<SliceSample>& samples, const TrainConfig& config,
                    std::int64_t sample_steps, torch::Tensor* images_out) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  const auto start = std::chrono::steady_clock::now();
  const auto data = prepare_conditions(samples, codec, config);
  const auto sched = config.schedule();
  std::vector<torch::Tensor> outputs;
  constexpr std::int64_t kChunk = 64;
  for (std::int64_t i = 0; i < data.size(); i += kChunk) {
    const auto end = std::min(i + kChunk, data.size());
    std::vector<std::uint64_t> seeds;
    for (auto k = i; k < end; ++k) {
      seeds.push_back(sample_seed(config.seed, data.sample_ids[static_cast<std::size_t>(k)]));
    }
    outputs.push_back(synthesize_batch(state, codec, data.y.slice(0, i, end), seeds, sched,
                                       sample_steps, true, config.sample_clip));
  }
  auto images = torch::cat(outputs, 0);
  auto report = score_synthesis(samples, images, config.target_modality, data.sources);
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.config_hash = config.to_config().hash();
  report.sample_steps = sample_steps;
  if (images_out) *images_out = images;
  return report;
}

void write_pgm(const std::filesystem::path& file, const torch::Tensor& image) {
  if (image.dim() != 2) throw std::invalid_argument("write_pgm: expected [H, W]");
  auto bytes = (image.to(torch::kFloat32).clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).contiguous();
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "P5\n" << image.size(1) << " " << image.size(0) << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data_ptr<std::uint8_t>()), bytes.numel());
}

void write_comparison_grid(const std::filesystem::path& file, const SliceSample& sample,
                           const std::vector<std::string>& sources, const std::string& target,
                           const torch::Tensor& synthesized) {
  std::vector<torch::Tensor> tiles;
  const auto gap = torch::ones({sample.size(), 1});
  for (const auto& s : sources) tiles.insert(tiles.end(), {sample.image(s), gap});
  const auto truth = sample.image(target);
  tiles.insert(tiles.end(), {truth, gap, synthesized, gap, (synthesized - truth).abs()});
  write_pgm(file, torch::cat(tiles, 1));
}

// --- ablation ----------------------------------------------------------------

const char* variant_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::kFull: return "full";
    case AblationVariant::kNoCoopFilter: return "-coop_filter";
    case AblationVariant::kNoStructuralGuidance: return "-structural_guidance";
    case AblationVariant::kNoAutoweight: return "-autoweight";
    case AblationVariant::kNoModifiedNetwork: return "-modified_network";
  }
  return "?";
}

std::vector<AblationVariant> all_variants() {
  return {AblationVariant::kFull, AblationVariant::kNoCoopFilter,
          AblationVariant::kNoStructuralGuidance, AblationVariant::kNoAutoweight,
          AblationVariant::kNoModifiedNetwork};
}

TrainConfig apply_variant(TrainConfig config, AblationVariant v) {
  switch (v) {
    case AblationVariant::kFull: break;
    case AblationVariant::kNoCoopFilter: config.coop_filter = false; break;
    case AblationVariant::kNoStructuralGuidance: config.structural_guidance = false; break;
    case AblationVariant::kNoAutoweight: config.autoweight = false; break;
    case AblationVariant::kNoModifiedNetwork: config.modified_network = false; break;
  }
  return config;
}

const AblationCell* AblationReport::find(AblationVariant v, std::int64_t n_inputs) const {
  for (const auto& c : cells) {
    if (c.variant == v && c.n_inputs == n_inputs) return &c;
  }
  return nullptr;
}

std::int64_t AblationReport::full_wins(std::int64_t n_inputs) const {
  const auto* full = find(AblationVariant::kFull, n_inputs);
  if (!full) return 0;
  std::int64_t wins = 0;
  for (const auto& c : cells) {
    if (c.n_inputs == n_inputs && c.variant != AblationVariant::kFull &&
        full->report.psnr.mean >= c.report.psnr.mean) {
      ++wins;
    }
  }
  return wins;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : cells) {
    rows.push_back({{"variant", variant_name(c.variant)},
                    {"n_inputs", c.n_inputs},
                    {"psnr_db", {{"mean", c.report.psnr.mean}, {"std", c.report.psnr.std}}},
                    {"ssim", {{"mean", c.report.ssim.mean}, {"std", c.report.ssim.std}}},
                    {"delta_psnr_db", c.delta_psnr},
                    {"delta_ssim", c.delta_ssim},
                    {"config_hash", c.report.config_hash}});
  }
  return {{"cells", rows}};
}

std::string AblationReport::table() const {
  std::vector<const AblationCell*> order;
  for (const auto& c : cells) order.push_back(&c);
  std::stable_sort(order.begin(), order.end(), [](const AblationCell* a, const AblationCell* b) {
    if (a->n_inputs != b->n_inputs) return a->n_inputs < b->n_inputs;
    return a->report.psnr.mean > b->report.psnr.mean;
  });
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << std::left << std::setw(8) << "inputs" << std::setw(22) << "variant" << std::setw(18)
      << "psnr_db" << std::setw(18) << "ssim" << std::setw(12) << "d_psnr" << "d_ssim\n";
  for (const auto* c : order) {
    std::ostringstream p, s;
    p << std::fixed << std::setprecision(3) << c->report.psnr.mean << "+-" << c->report.psnr.std;
    s << std::fixed << std::setprecision(3) << c->report.ssim.mean << "+-" << c->report.ssim.std;
    out << std::left << std::setw(8) << c->n_inputs << std::setw(22) << variant_name(c->variant)
        << std::setw(18) << p.str() << std::setw(18) << s.str() << std::setw(12) << c->delta_psnr
        << c->delta_ssim << "\n";
  }
  return out.str();
}

AblationReport run_ablation(const AblationRequest& request, LatentCodec& codec,
                            const std::vector<SliceSample>& train,
                            const std::vector<SliceSample>& test,
                            const std::function<void(const AblationCell&)>& on_cell) {
  if (train.empty() || test.empty()) throw std::invalid_argument("run_ablation: empty split");
  std::vector<AblationVariant> variants{AblationVariant::kFull};
  for (const auto v : request.variants) {
    if (v != AblationVariant::kFull) variants.push_back(v);
  }
  AblationReport report;
  for (const auto n : request.input_counts) {
    std::optional<EvalReport> full;
    for (const auto v : variants) {
      auto cfg = apply_variant(request.base, v);
      cfg.n_inputs = n;
      cfg.checkpoint_every = 0;
      auto trained = train_diffusion(cfg, codec, train);
      AblationCell cell;
      cell.variant = v;
      cell.n_inputs = n;
      torch::Tensor images;
      cell.report = evaluate(trained.state, codec, test, cfg, request.sample_steps, &images);
      if (full) {
        cell.delta_psnr = cell.report.psnr.mean - full->psnr.mean;
        cell.delta_ssim = cell.report.ssim.mean - full->ssim.mean;
      }
      if (!request.grid_dir.empty()) {
        const auto sources = cfg.sources(test.front().modalities());
        const auto dir = request.grid_dir / (std::string(variant_name(v)) + "_" + std::to_string(n));
        const auto count = std::min<std::int64_t>(request.grids_per_cell, static_cast<std::int64_t>(test.size()));
        for (std::int64_t i = 0; i < count; ++i) {
          const auto& s = test[static_cast<std::size_t>(i)];
          write_comparison_grid(dir / (s.sample_id + ".pgm"), s, sources, cfg.target_modality, images[i]);
        }
      }
      if (v == AblationVariant::kFull) full = cell.report;
      report.cells.push_back(std::move(cell));
      if (on_cell) on_cell(report.cells.back());
    }
  }
  return report;
}

}  // namespace coladiff
