// Command-line front end: dataset generation, codec and diffusion training,
// synthesis, evaluation, ablation and the standalone cooperative filter.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "coladiff/codec.hpp"
#include "coladiff/config.hpp"
#include "coladiff/dataset.hpp"
#include "coladiff/denoiser.hpp"
#include "coladiff/phantom.hpp"
#include "coladiff/pipeline.hpp"
#include "coladiff/wavelet.hpp"

namespace fs = std::filesystem;
using namespace coladiff;

namespace {

struct Common {
  std::string config_file;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "Flat JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
}

Config load_config(const Common& c) {
  Config cfg = c.config_file.empty() ? Config{} : Config::load(c.config_file);
  if (c.seed) cfg.set("seed", *c.seed);
  return cfg;
}

PhantomConfig phantom_config(const Config& cfg) {
  PhantomConfig p;
  p.modalities = cfg.get<std::vector<std::string>>("phantom.modalities", p.modalities);
  p.noise_sigma = cfg.get<double>("phantom.noise_sigma", p.noise_sigma);
  p.bias_amplitude = cfg.get<double>("phantom.bias_amplitude", p.bias_amplitude);
  p.bias_smoothness = cfg.get<double>("phantom.bias_smoothness", p.bias_smoothness);
  p.tumor_probability = cfg.get<double>("phantom.tumor_probability", p.tumor_probability);
  p.tissue_jitter = cfg.get<double>("phantom.tissue_jitter", p.tissue_jitter);
  p.supersample = cfg.get<int>("phantom.supersample", p.supersample);
  return p;
}

CodecSpec codec_spec(const Config& cfg) {
  CodecSpec s;
  s.latent_channels = cfg.get<std::int64_t>("codec.latent_channels", s.latent_channels);
  s.width_high = cfg.get<std::int64_t>("codec.width_high", s.width_high);
  s.width_low = cfg.get<std::int64_t>("codec.width_low", s.width_low);
  s.kl_weight = cfg.get<double>("codec.kl_weight", s.kl_weight);
  return s;
}

CodecTrainConfig codec_train_config(const Config& cfg) {
  CodecTrainConfig c;
  c.steps = cfg.get<std::int64_t>("codec.steps", c.steps);
  c.batch_size = cfg.get<std::int64_t>("codec.batch_size", c.batch_size);
  c.learning_rate = cfg.get<double>("codec.lr", c.learning_rate);
  c.eval_every = cfg.get<std::int64_t>("codec.eval_every", c.eval_every);
  c.seed = cfg.get<std::uint64_t>("seed", c.seed);
  return c;
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw CLI::ValidationError("--split", "expected train, val or test");
}

void write_json(const fs::path& file, const nlohmann::json& j) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

std::string require(const Config& cfg, const std::string& key, const std::string& flag) {
  auto value = cfg.get<std::string>(key, "");
  if (value.empty()) throw std::runtime_error("missing " + flag + " (or config key '" + key + "')");
  return value;
}

void log_progress(std::int64_t step, double loss, std::int64_t every) {
  if (every > 0 && step % every == 0) std::cerr << "step " << step << " loss " << loss << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coladiff: multi-conditioned latent diffusion on brain phantoms"};
  app.require_subcommand(1);

  // generate
  Common gen_c;
  std::string gen_out, gen_split = "140:25:35";
  std::int64_t gen_count = 200, gen_size = 32;
  auto* gen = app.add_subcommand("generate", "Write a phantom dataset");
  add_common(gen, gen_c);
  gen->add_option("--out", gen_out, "Dataset directory")->required();
  gen->add_option("--count", gen_count, "Number of samples");
  gen->add_option("--size", gen_size, "Image side (16, 32 or 64)");
  gen->add_option("--split", gen_split, "train:val:test ratio");

  // train-codec
  Common tc_c;
  std::string tc_data, tc_out;
  std::optional<std::int64_t> tc_steps;
  auto* tc = app.add_subcommand("train-codec", "Train the latent codec");
  add_common(tc, tc_c);
  tc->add_option("--data", tc_data, "Dataset directory");
  tc->add_option("--out", tc_out, "Codec checkpoint")->required();
  tc->add_option("--steps", tc_steps, "Training steps");

  // train-diffusion
  Common td_c;
  std::string td_data, td_codec, td_out, td_trace;
  std::optional<std::int64_t> td_steps;
  auto* td = app.add_subcommand("train-diffusion", "Train the latent denoiser");
  add_common(td, td_c);
  td->add_option("--data", td_data, "Dataset directory");
  td->add_option("--codec", td_codec, "Codec checkpoint")->required();
  td->add_option("--out", td_out, "Denoiser checkpoint")->required();
  td->add_option("--steps", td_steps, "Training steps");
  td->add_option("--trace", td_trace, "Write the loss trace as JSON");

  // synthesize
  Common sy_c;
  std::string sy_data, sy_codec, sy_model, sy_sample, sy_out;
  std::optional<std::int64_t> sy_steps;
  auto* sy = app.add_subcommand("synthesize", "Synthesize the target modality of one sample");
  add_common(sy, sy_c);
  sy->add_option("--data", sy_data, "Dataset directory");
  sy->add_option("--codec", sy_codec, "Codec checkpoint")->required();
  sy->add_option("--model", sy_model, "Denoiser checkpoint")->required();
  sy->add_option("--sample", sy_sample, "Sample id")->required();
  sy->add_option("--out", sy_out, "Output grid (.raw) or image (.pgm)")->required();
  sy->add_option("--steps", sy_steps, "Sampling steps");

  // evaluate
  Common ev_c;
  std::string ev_data, ev_codec, ev_model, ev_report, ev_split = "test", ev_grids;
  std::optional<std::int64_t> ev_steps;
  auto* ev = app.add_subcommand("evaluate", "PSNR/SSIM of synthesis against ground truth");
  add_common(ev, ev_c);
  ev->add_option("--data", ev_data, "Dataset directory");
  ev->add_option("--codec", ev_codec, "Codec checkpoint")->required();
  ev->add_option("--model", ev_model, "Denoiser checkpoint")->required();
  ev->add_option("--report", ev_report, "Report JSON")->required();
  ev->add_option("--split", ev_split, "train, val or test");
  ev->add_option("--steps", ev_steps, "Sampling steps");
  ev->add_option("--grids", ev_grids, "Directory for per-sample comparison grids");

  // ablate
  Common ab_c;
  std::string ab_data, ab_codec, ab_report, ab_grids;
  std::vector<std::int64_t> ab_inputs{1, 2, 3};
  auto* ab = app.add_subcommand("ablate", "Component-removal and input-count grid");
  add_common(ab, ab_c);
  ab->add_option("--data", ab_data, "Dataset directory");
  ab->add_option("--codec", ab_codec, "Codec checkpoint")->required();
  ab->add_option("--report", ab_report, "Report JSON")->required();
  ab->add_option("--inputs", ab_inputs, "Input-modality counts");
  ab->add_option("--grids", ab_grids, "Directory for per-sample comparison grids");

  // denoise
  Common dn_c;
  std::string dn_in, dn_out;
  auto* dn = app.add_subcommand("denoise", "Apply the cooperative wavelet filter to a grid");
  add_common(dn, dn_c);
  dn->add_option("--in", dn_in, "Input grid (.raw with sidecar)")->required()->check(CLI::ExistingFile);
  dn->add_option("--out", dn_out, "Output grid (.raw)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto cfg = load_config(gen_c);
      const auto seed = cfg.get<std::uint64_t>("seed", 0);
      const auto pc = phantom_config(cfg);
      const auto count = cfg.get<std::int64_t>("count", gen_count);
      const auto size = cfg.get<std::int64_t>("size", gen_size);
      std::vector<SliceSample> samples;
      for (std::int64_t i = 0; i < count; ++i) {
        samples.push_back(generate_phantom(seed * 1000003ULL + static_cast<std::uint64_t>(i), size, pc));
      }
      const auto m = write_dataset(samples, SplitRatio::parse(cfg.get<std::string>("split", gen_split)),
                                   gen_out, pc.hash());
      std::cout << "wrote " << m.total() << " samples (" << m.train.size() << "/" << m.val.size() << "/"
                << m.test.size() << ") to " << gen_out << "\n";
    } else if (*tc) {
      auto cfg = load_config(tc_c);
      if (!tc_data.empty()) cfg.set("data", tc_data);
      if (tc_steps) cfg.set("codec.steps", *tc_steps);
      const auto data = Dataset::open(require(cfg, "data", "--data"));
      auto result = train_codec(data, codec_spec(cfg), codec_train_config(cfg));
      save_codec(result.codec, tc_out, cfg.hash());
      std::cout << "codec: best val mse " << result.best_val_mse << " at step " << result.best_step
                << ", config " << cfg.hash() << "\n";
    } else if (*td) {
      auto cfg = load_config(td_c);
      if (!td_data.empty()) cfg.set("data", td_data);
      if (td_steps) cfg.set("steps", *td_steps);
      if (!cfg.contains("checkpoint")) cfg.set("checkpoint", td_out);
      const auto data = Dataset::open(require(cfg, "data", "--data"));
      auto tcfg = TrainConfig::from_config(cfg);
      auto codec = load_codec(td_codec);
      auto result = train_diffusion(tcfg, codec, data.load_split(Split::kTrain),
                                    [](std::int64_t s, double l) { log_progress(s, l, 100); });
      save_denoiser(result.state, td_out, cfg.hash());
      if (!td_trace.empty()) {
        write_json(td_trace, {{"config_hash", cfg.hash()},
                              {"loss", result.loss_trace},
                              {"eps_loss", result.eps_trace}});
      }
      std::cout << "denoiser: " << result.state.parameter_count() << " parameters, "
                << result.state.step_count << " steps, config " << cfg.hash() << "\n";
    } else if (*sy) {
      auto cfg = load_config(sy_c);
      if (!sy_data.empty()) cfg.set("data", sy_data);
      const auto data = Dataset::open(require(cfg, "data", "--data"));
      auto tcfg = TrainConfig::from_config(cfg);
      auto codec = load_codec(sy_codec);
      auto state = load_denoiser(sy_model);
      const auto sample = data.load(sy_sample);
      auto image = synthesize(state, codec, sample, tcfg, sy_steps.value_or(tcfg.sample_steps), tcfg.seed);
      if (fs::path(sy_out).extension() == ".pgm") {
        write_pgm(sy_out, image);
      } else {
        write_grid(sy_out, image, sy_sample + ":" + tcfg.target_modality);
      }
      std::cout << "wrote " << sy_out << "\n";
    } else if (*ev) {
      auto cfg = load_config(ev_c);
      if (!ev_data.empty()) cfg.set("data", ev_data);
      const auto data = Dataset::open(require(cfg, "data", "--data"));
      auto tcfg = TrainConfig::from_config(cfg);
      auto codec = load_codec(ev_codec);
      auto state = load_denoiser(ev_model);
      const auto samples = data.load_split(parse_split(ev_split));
      torch::Tensor images;
      auto report = evaluate(state, codec, samples, tcfg, ev_steps.value_or(tcfg.sample_steps), &images);
      report.config_hash = cfg.hash();
      write_json(ev_report, report.to_json());
      if (!ev_grids.empty()) {
        const auto sources = tcfg.sources(data.manifest().modalities);
        for (std::size_t i = 0; i < samples.size(); ++i) {
          write_comparison_grid(fs::path(ev_grids) / (samples[i].sample_id + ".pgm"), samples[i], sources,
                                tcfg.target_modality, images[static_cast<std::int64_t>(i)]);
        }
      }
      std::cout << "psnr " << report.psnr.mean << " +- " << report.psnr.std << " dB, ssim "
                << report.ssim.mean << " +- " << report.ssim.std << " (baseline " << report.baseline_psnr.mean
                << " dB / " << report.baseline_ssim.mean << "), config " << report.config_hash << "\n";
    } else if (*ab) {
      auto cfg = load_config(ab_c);
      if (!ab_data.empty()) cfg.set("data", ab_data);
      const auto data = Dataset::open(require(cfg, "data", "--data"));
      AblationRequest request;
      request.base = TrainConfig::from_config(cfg);
      request.input_counts = ab_inputs;
      request.sample_steps = request.base.sample_steps;
      request.grid_dir = ab_grids;
      auto codec = load_codec(ab_codec);
      auto report = run_ablation(request, codec, data.load_split(Split::kTrain),
                                 data.load_split(Split::kTest), [](const AblationCell& c) {
                                   std::cerr << variant_name(c.variant) << " x" << c.n_inputs << ": "
                                             << c.report.psnr.mean << " dB\n";
                                 });
      auto j = report.to_json();
      j["config_hash"] = cfg.hash();
      write_json(ab_report, j);
      std::cout << report.table();
    } else if (*dn) {
      auto cfg = load_config(dn_c);
      auto input = read_grid(dn_in);
      CoopFilterConfig fc;
      fc.levels = cfg.get<int>("levels", fc.levels);
      fc.match_tolerance = cfg.get<double>("match_tolerance", fc.match_tolerance);
      const FilterPolicy policy{cfg.get<int>("block_size", 2), cfg.get<int>("match_count", 4), std::nullopt};
      fc.approx_policy = fc.diagonal_policy = policy;
      if (cfg.contains("threshold") && cfg.json().at("threshold").is_number()) {
        fc.threshold = cfg.get<double>("threshold", 0.0);
      }
      write_grid(dn_out, cooperative_filter(input.grid, fc), input.name);
      std::cout << "wrote " << dn_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
