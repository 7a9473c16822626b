#include "coladiff/denoiser.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace coladiff {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

constexpr const char* kDenoiserFormat = "coladiff-denoiser";

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k, bool circular,
                std::int64_t stride = 1) {
  auto opts = nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2);
  if (circular && k > 1) opts.padding_mode(torch::kCircular);
  return nn::Conv2d(opts);
}

nn::GroupNorm group_norm(std::int64_t channels) {
  std::int64_t groups = std::min<std::int64_t>(8, channels);
  while (channels % groups != 0) --groups;
  return nn::GroupNorm(groups, channels);
}

void zero_(const nn::Conv2d& c) {
  torch::NoGradGuard no_grad;
  c->weight.zero_();
  if (c->bias.defined()) c->bias.zero_();
}

nlohmann::json policy_json(const FilterPolicy& p) {
  nlohmann::json j{{"block_size", p.block_size}, {"match_count", p.match_count}};
  j["threshold"] = p.threshold ? nlohmann::json(*p.threshold) : nlohmann::json("universal");
  return j;
}

FilterPolicy policy_from(const nlohmann::json& j) {
  FilterPolicy p;
  p.block_size = j.at("block_size").get<int>();
  p.match_count = j.at("match_count").get<int>();
  if (j.contains("threshold") && j.at("threshold").is_number()) p.threshold = j.at("threshold").get<double>();
  return p;
}

}  // namespace

std::vector<std::int64_t> DenoiserSpec::ladder() const {
  std::vector<std::int64_t> sizes{latent_size};
  for (std::int64_t s = 0; s < depth(); ++s) sizes.push_back(sizes.back() / 2);
  return sizes;
}

std::set<std::int64_t> DenoiserSpec::effective_attention() const {
  if (!attention_resolutions.empty()) return attention_resolutions;
  const auto sizes = ladder();
  std::set<std::int64_t> out;
  for (std::size_t i = 0; i < sizes.size() && i < 3; ++i) out.insert(sizes[sizes.size() - 1 - i]);
  return out;
}

void DenoiserSpec::validate() const {
  if (latent_channels < 1 || cond_channels < 1 || base_width < 1 || time_embed_dim < 2 ||
      heads < 1 || n_transformer_blocks < 0 || channel_mult.empty()) {
    throw std::invalid_argument("denoiser spec: widths and counts must be positive");
  }
  for (const auto m : channel_mult) {
    if (m < 1) throw std::invalid_argument("denoiser spec: channel multipliers must be positive");
    if ((base_width * m) % heads != 0) {
      throw std::invalid_argument("denoiser spec: stage width must be divisible by heads");
    }
  }
  const std::int64_t div = std::int64_t{1} << depth();
  if (latent_size < div || latent_size % div != 0) {
    throw std::invalid_argument("denoiser spec: latent size " + std::to_string(latent_size) +
                                " does not support depth " + std::to_string(depth()));
  }
  const auto sizes = ladder();
  for (const auto r : attention_resolutions) {
    if (std::find(sizes.begin(), sizes.end(), r) == sizes.end()) {
      throw std::invalid_argument("denoiser spec: attention resolution " + std::to_string(r) +
                                  " is not on the feature ladder");
    }
  }
  coop_filter.approx_policy.validate();
  coop_filter.diagonal_policy.validate();
  if (!(coop_filter.match_tolerance > 0.0)) {
    throw std::invalid_argument("denoiser spec: match_tolerance must be positive");
  }
}

nlohmann::json DenoiserSpec::to_json() const {
  nlohmann::json j;
  j["latent_channels"] = latent_channels;
  j["latent_size"] = latent_size;
  j["cond_channels"] = cond_channels;
  j["base_width"] = base_width;
  j["channel_mult"] = channel_mult;
  j["attention_resolutions"] = std::vector<std::int64_t>(attention_resolutions.begin(),
                                                         attention_resolutions.end());
  j["n_transformer_blocks"] = n_transformer_blocks;
  j["heads"] = heads;
  j["time_embed_dim"] = time_embed_dim;
  j["modified_network"] = modified_network;
  j["cond_concat"] = cond_concat;
  j["autoweight"] = autoweight;
  j["circular_padding"] = circular_padding;
  j["coop_filter"] = {{"enabled", coop_filter.enabled},
                      {"levels", coop_filter.levels},
                      {"match_tolerance", coop_filter.match_tolerance},
                      {"approx_policy", policy_json(coop_filter.approx_policy)},
                      {"diagonal_policy", policy_json(coop_filter.diagonal_policy)},
                      {"threshold", coop_filter.threshold ? nlohmann::json(*coop_filter.threshold)
                                                          : nlohmann::json("universal")}};
  return j;
}

DenoiserSpec DenoiserSpec::from_json(const nlohmann::json& j) {
  DenoiserSpec s;
  s.latent_channels = j.at("latent_channels").get<std::int64_t>();
  s.latent_size = j.at("latent_size").get<std::int64_t>();
  s.cond_channels = j.at("cond_channels").get<std::int64_t>();
  s.base_width = j.at("base_width").get<std::int64_t>();
  s.channel_mult = j.at("channel_mult").get<std::vector<std::int64_t>>();
  for (const auto r : j.at("attention_resolutions").get<std::vector<std::int64_t>>()) {
    s.attention_resolutions.insert(r);
  }
  s.n_transformer_blocks = j.at("n_transformer_blocks").get<std::int64_t>();
  s.heads = j.at("heads").get<std::int64_t>();
  s.time_embed_dim = j.at("time_embed_dim").get<std::int64_t>();
  s.modified_network = j.at("modified_network").get<bool>();
  s.cond_concat = j.at("cond_concat").get<bool>();
  s.autoweight = j.at("autoweight").get<bool>();
  s.circular_padding = j.value("circular_padding", false);
  const auto& cf = j.at("coop_filter");
  s.coop_filter.enabled = cf.at("enabled").get<bool>();
  s.coop_filter.levels = cf.at("levels").get<int>();
  s.coop_filter.match_tolerance = cf.value("match_tolerance", s.coop_filter.match_tolerance);
  s.coop_filter.approx_policy = policy_from(cf.at("approx_policy"));
  s.coop_filter.diagonal_policy = policy_from(cf.at("diagonal_policy"));
  if (cf.at("threshold").is_number()) s.coop_filter.threshold = cf.at("threshold").get<double>();
  return s;
}

// --- building blocks ---------------------------------------------------------

ResBottleneckImpl::ResBottleneckImpl(std::int64_t in, std::int64_t out, std::int64_t temb_dim,
                                     bool circular) {
  const std::int64_t mid = std::max<std::int64_t>(out / 2, 8);
  norm1_ = register_module("norm1", group_norm(in));
  reduce_ = register_module("reduce", conv(in, mid, 1, circular));
  temb_proj_ = register_module("temb_proj", nn::Linear(temb_dim, mid));
  norm2_ = register_module("norm2", group_norm(mid));
  spatial_ = register_module("spatial", conv(mid, mid, 3, circular));
  norm3_ = register_module("norm3", group_norm(mid));
  expand_ = register_module("expand", conv(mid, out, 1, circular));
  zero_(expand_);
  if (in != out) skip_ = register_module("skip", conv(in, out, 1, circular));
}

torch::Tensor ResBottleneckImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = reduce_(torch::silu(norm1_(x)));
  h = h + temb_proj_(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
  h = spatial_(torch::silu(norm2_(h)));
  h = expand_(torch::silu(norm3_(h)));
  return (skip_ ? skip_(x) : x) + h;
}

PlainBlockImpl::PlainBlockImpl(std::int64_t in, std::int64_t out, std::int64_t temb_dim,
                               bool circular) {
  norm1_ = register_module("norm1", group_norm(in));
  conv1_ = register_module("conv1", conv(in, out, 3, circular));
  temb_proj_ = register_module("temb_proj", nn::Linear(temb_dim, out));
  norm2_ = register_module("norm2", group_norm(out));
  conv2_ = register_module("conv2", conv(out, out, 3, circular));
}

torch::Tensor PlainBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = conv1_(torch::silu(norm1_(x)));
  h = h + temb_proj_(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
  return conv2_(torch::silu(norm2_(h)));
}

FusionBlockImpl::FusionBlockImpl(std::int64_t channels, bool circular) {
  const std::int64_t inner = std::max<std::int64_t>(channels / 4, 4);
  norm_ = register_module("norm", group_norm(channels));
  branch5_ = register_module("branch5", conv(channels, channels, 5, circular));
  branch7_ = register_module("branch7", conv(channels, channels, 7, circular));
  local_ = register_module("local_attention", nn::Sequential(conv(channels, inner, 1, circular), group_norm(inner),
                                                   nn::ReLU(), conv(inner, channels, 1, circular)));
  global_ = register_module("global_attention", nn::Sequential(nn::AdaptiveAvgPool2d(1),
                                                     conv(channels, inner, 1, circular), nn::ReLU(),
                                                     conv(inner, channels, 1, circular)));
}

std::pair<torch::Tensor, torch::Tensor> FusionBlockImpl::branches(const torch::Tensor& x) {
  auto a = torch::silu(norm_(x));
  return {branch5_(a), branch7_(a)};
}

torch::Tensor FusionBlockImpl::mix_weights(const torch::Tensor& sum) {
  return torch::sigmoid(local_->forward(sum) + global_->forward(sum));
}

torch::Tensor FusionBlockImpl::blend(const torch::Tensor& x) {
  auto [b5, b7] = branches(x);
  return mix_weights(b5 + b7);
}

torch::Tensor FusionBlockImpl::forward(const torch::Tensor& x) {
  auto [b5, b7] = branches(x);
  auto w = mix_weights(b5 + b7);
  return x + w * b5 + (1.0 - w) * b7;
}

torch::Tensor position_codes(std::int64_t h, std::int64_t w, std::int64_t channels) {
  // Half the channels encode the row, half the column.
  const std::int64_t quarter = std::max<std::int64_t>(channels / 4, 1);
  auto freqs = torch::exp(-std::log(100.0) * torch::arange(quarter, torch::kFloat32) / quarter);
  auto rows = torch::arange(h, torch::kFloat32).unsqueeze(1) * freqs;  // [h, q]
  auto cols = torch::arange(w, torch::kFloat32).unsqueeze(1) * freqs;  // [w, q]
  auto row_code = torch::cat({rows.sin(), rows.cos()}, 1).unsqueeze(1).expand({h, w, 2 * quarter});
  auto col_code = torch::cat({cols.sin(), cols.cos()}, 1).unsqueeze(0).expand({h, w, 2 * quarter});
  auto code = torch::cat({row_code, col_code}, 2).reshape({h * w, 4 * quarter});
  if (code.size(1) < channels) code = F::pad(code, F::PadFuncOptions({0, channels - code.size(1)}));
  return code.slice(1, 0, channels);
}

torch::Tensor timestep_features(const torch::Tensor& t, std::int64_t dim) {
  const std::int64_t half = dim / 2;
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / half);
  auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  auto out = torch::cat({args.sin(), args.cos()}, 1);
  if (out.size(1) < dim) out = F::pad(out, F::PadFuncOptions({0, dim - out.size(1)}));
  return out;
}

TransformerBlockImpl::TransformerBlockImpl(std::int64_t channels, std::int64_t cond_channels,
                                           std::int64_t heads)
    : heads_(heads) {
  norm_self_ = register_module("norm_self", nn::LayerNorm(nn::LayerNormOptions({channels})));
  self_qkv_ = register_module("self_qkv", nn::Linear(channels, 3 * channels));
  self_out_ = register_module("self_out", nn::Linear(channels, channels));
  norm_cross_ = register_module("norm_cross", nn::LayerNorm(nn::LayerNormOptions({channels})));
  cond_proj_ = register_module("cond_proj", nn::Linear(cond_channels, channels));
  cross_q_ = register_module("cross_q", nn::Linear(channels, channels));
  cross_kv_ = register_module("cross_kv", nn::Linear(channels, 2 * channels));
  cross_out_ = register_module("cross_out", nn::Linear(channels, channels));
  norm_mlp_ = register_module("norm_mlp", nn::LayerNorm(nn::LayerNormOptions({channels})));
  mlp_in_ = register_module("mlp_in", nn::Linear(channels, 4 * channels));
  mlp_out_ = register_module("mlp_out", nn::Linear(4 * channels, channels));
}

torch::Tensor TransformerBlockImpl::attend(const torch::Tensor& q, const torch::Tensor& k,
                                           const torch::Tensor& v) const {
  const auto b = q.size(0), nq = q.size(1), nk = k.size(1), c = q.size(2);
  const auto d = c / heads_;
  auto split = [&](const torch::Tensor& x, std::int64_t n) {
    return x.reshape({b, n, heads_, d}).transpose(1, 2);
  };
  auto scores = torch::matmul(split(q, nq), split(k, nk).transpose(-2, -1)) / std::sqrt(static_cast<double>(d));
  auto out = torch::matmul(torch::softmax(scores, -1), split(v, nk));
  return out.transpose(1, 2).reshape({b, nq, c});
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto pos = position_codes(h, w, c).to(x.options()).unsqueeze(0);
  auto tokens = x.flatten(2).transpose(1, 2);  // [B, hw, C]

  auto qkv = self_qkv_(norm_self_(tokens) + pos).chunk(3, -1);
  tokens = tokens + self_out_(attend(qkv[0], qkv[1], qkv[2]));

  auto cond_tokens = cond_proj_(cond.flatten(2).transpose(1, 2)) + pos;
  auto kv = cross_kv_(cond_tokens).chunk(2, -1);
  tokens = tokens + cross_out_(attend(cross_q_(norm_cross_(tokens) + pos), kv[0], kv[1]));

  tokens = tokens + mlp_out_(torch::gelu(mlp_in_(norm_mlp_(tokens))));
  return tokens.transpose(1, 2).reshape({b, c, h, w});
}

// --- denoiser ----------------------------------------------------------------

DenoiserImpl::Stage DenoiserImpl::make_stage(const std::string& name, std::int64_t in,
                                             std::int64_t out, std::int64_t resolution,
                                             bool with_fusion) {
  Stage stage;
  const bool circ = spec_.circular_padding;
  if (spec_.modified_network) {
    stage.res = register_module(name + "_block", ResBottleneck(in, out, spec_.time_embed_dim, circ));
    if (with_fusion) stage.fusion = register_module(name + "_fusion", FusionBlock(out, circ));
  } else {
    stage.plain = register_module(name + "_block", PlainBlock(in, out, spec_.time_embed_dim, circ));
  }
  if (spec_.effective_attention().contains(resolution)) {
    for (std::int64_t i = 0; i < spec_.n_transformer_blocks; ++i) {
      stage.attention.push_back(register_module(
          name + "_attn" + std::to_string(i), TransformerBlock(out, spec_.cond_channels, spec_.heads)));
    }
  }
  return stage;
}

DenoiserImpl::DenoiserImpl(DenoiserSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const bool circ = spec_.circular_padding;
  const auto depth = spec_.depth();
  std::vector<std::int64_t> widths;
  for (const auto m : spec_.channel_mult) widths.push_back(spec_.base_width * m);
  const auto sizes = spec_.ladder();

  if (spec_.autoweight) autoweight_ = register_module("autoweight", AutoWeight(spec_.cond_channels));
  time_in_ = register_module("time_in", nn::Linear(spec_.base_width, spec_.time_embed_dim));
  time_out_ = register_module("time_out", nn::Linear(spec_.time_embed_dim, spec_.time_embed_dim));

  const std::int64_t in_channels =
      spec_.latent_channels + (spec_.cond_concat ? spec_.cond_channels : 0);
  conv_in_ = register_module("conv_in", conv(in_channels, spec_.base_width, 3, circ));

  std::int64_t prev = spec_.base_width;
  for (std::int64_t s = 0; s < depth; ++s) {
    const auto w = widths[static_cast<std::size_t>(s)];
    down_.push_back(make_stage("down" + std::to_string(s), prev, w,
                               sizes[static_cast<std::size_t>(s)], true));
    downsample_.push_back(
        register_module("downsample" + std::to_string(s), conv(w, w, 3, circ, 2)));
    prev = w;
  }
  mid1_ = make_stage("mid1", prev, prev, sizes.back(), false);
  {
    // The second middle block carries no attention.
    const bool saved = spec_.modified_network;
    Stage stage;
    if (saved) {
      stage.res = register_module("mid2_block", ResBottleneck(prev, prev, spec_.time_embed_dim, circ));
    } else {
      stage.plain = register_module("mid2_block", PlainBlock(prev, prev, spec_.time_embed_dim, circ));
    }
    mid2_ = stage;
  }
  upsample_.assign(static_cast<std::size_t>(depth), nn::Conv2d(nullptr));
  up_.resize(static_cast<std::size_t>(depth));
  for (std::int64_t s = depth - 1; s >= 0; --s) {
    const auto w = widths[static_cast<std::size_t>(s)];
    upsample_[static_cast<std::size_t>(s)] =
        register_module("upsample" + std::to_string(s), conv(prev, w, 3, circ));
    up_[static_cast<std::size_t>(s)] =
        make_stage("up" + std::to_string(s), 2 * w, w, sizes[static_cast<std::size_t>(s)], false);
    prev = w;
  }
  norm_out_ = register_module("norm_out", group_norm(prev));
  conv_out_ = register_module("conv_out", conv(prev, spec_.latent_channels, 3, circ));
  zero_(conv_out_);
}

torch::Tensor DenoiserImpl::gate(const torch::Tensor& y) {
  return autoweight_ ? autoweight_->forward(y) : y;
}

torch::Tensor DenoiserImpl::cond_at(const torch::Tensor& y, std::int64_t resolution) const {
  const auto factor = spec_.latent_size / resolution;
  return factor == 1 ? y : F::avg_pool2d(y, F::AvgPool2dFuncOptions(factor));
}

torch::Tensor DenoiserImpl::run_block(Stage& stage, torch::Tensor h, const torch::Tensor& temb,
                                      const torch::Tensor& y, std::int64_t resolution) {
  h = stage.res ? stage.res->forward(h, temb) : stage.plain->forward(h, temb);
  if (stage.fusion) h = stage.fusion->forward(h);
  if (!stage.attention.empty()) {
    const auto cond = cond_at(y, resolution);
    for (auto& block : stage.attention) h = block->forward(h, cond);
  }
  return h;
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& kappa_t, const torch::Tensor& t,
                                    const torch::Tensor& y_gated) {
  const auto L = spec_.latent_size;
  if (kappa_t.dim() != 4 || kappa_t.size(1) != spec_.latent_channels || kappa_t.size(2) != L ||
      kappa_t.size(3) != L) {
    throw std::invalid_argument("denoiser: latent must be [B, " + std::to_string(spec_.latent_channels) +
                                ", " + std::to_string(L) + ", " + std::to_string(L) + "]");
  }
  if (y_gated.dim() != 4 || y_gated.size(0) != kappa_t.size(0) ||
      y_gated.size(1) != spec_.cond_channels || y_gated.size(2) != L || y_gated.size(3) != L) {
    throw std::invalid_argument("denoiser: condition must be [B, " +
                                std::to_string(spec_.cond_channels) + ", " + std::to_string(L) +
                                ", " + std::to_string(L) + "]");
  }
  if (t.dim() != 1 || t.size(0) != kappa_t.size(0)) {
    throw std::invalid_argument("denoiser: one timestep per batch entry required");
  }

  auto temb = time_out_(torch::silu(time_in_(timestep_features(t, spec_.base_width).to(kappa_t.dtype()))));
  auto h = conv_in_(spec_.cond_concat ? torch::cat({kappa_t, y_gated}, 1) : kappa_t);

  const auto sizes = spec_.ladder();
  std::vector<torch::Tensor> skips;
  for (std::size_t s = 0; s < down_.size(); ++s) {
    h = run_block(down_[s], h, temb, y_gated, sizes[s]);
    skips.push_back(h);
    h = downsample_[s](h);
  }
  h = run_block(mid1_, h, temb, y_gated, sizes.back());
  h = run_block(mid2_, h, temb, y_gated, sizes.back());
  for (std::size_t s = up_.size(); s-- > 0;) {
    h = F::interpolate(h, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    h = upsample_[s](h);
    h = torch::cat({h, s == 0 ? skips[s] : cooperative_filter(skips[s], spec_.coop_filter)}, 1);
    h = run_block(up_[s], h, temb, y_gated, sizes[s]);
  }
  return conv_out_(torch::silu(norm_out_(h)));
}

// --- state -------------------------------------------------------------------

std::int64_t DenoiserState::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : model->parameters()) n += p.numel();
  return n;
}

DenoiserState build_denoiser(const DenoiserSpec& spec, std::uint64_t seed) {
  spec.validate();
  torch::manual_seed(seed);
  DenoiserState state;
  state.spec = spec;
  state.model = Denoiser(spec);
  state.shadow = Denoiser(spec);
  torch::NoGradGuard no_grad;
  auto src = state.model->parameters();
  auto dst = state.shadow->parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].copy_(src[i]);
  for (auto& p : dst) p.set_requires_grad(false);
  state.shadow->eval();
  return state;
}

torch::Tensor predict_noise(DenoiserState& state, const torch::Tensor& kappa_t,
                            const torch::Tensor& t, const torch::Tensor& y_gated, bool use_shadow) {
  for (const auto step : std::vector<std::int64_t>(t.to(torch::kInt64).data_ptr<std::int64_t>(),
                                                   t.to(torch::kInt64).data_ptr<std::int64_t>() + t.numel())) {
    if (step < 0) throw std::out_of_range("predict_noise: negative timestep");
  }
  return use_shadow ? state.shadow->forward(kappa_t, t, y_gated)
                    : state.model->forward(kappa_t, t, y_gated);
}

void ema_update(DenoiserState& state, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("ema_update: rate must lie in [0, 1)");
  torch::NoGradGuard no_grad;
  auto params = state.model->parameters();
  auto shadow = state.shadow->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    shadow[i].mul_(rate).add_(params[i].detach(), 1.0 - rate);
  }
}

void save_denoiser(DenoiserState& state, const std::filesystem::path& file,
                   const std::string& config_hash) {
  nlohmann::json header;
  header["format"] = kDenoiserFormat;
  header["version"] = 1;
  header["spec"] = state.spec.to_json();
  header["config_hash"] = config_hash;
  header["step_count"] = state.step_count;
  header["latent_bound"] = state.latent_bound;
  torch::serialize::OutputArchive archive;
  archive.write("header", c10::IValue(header.dump()));
  torch::serialize::OutputArchive model, shadow;
  state.model->save(model);
  state.shadow->save(shadow);
  archive.write("model", model);
  archive.write("shadow", shadow);
  archive.save_to(file.string());
}

DenoiserState load_denoiser(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) {
    throw std::runtime_error("missing denoiser checkpoint " + file.string());
  }
  torch::serialize::InputArchive archive;
  archive.load_from(file.string());
  c10::IValue header_value;
  archive.read("header", header_value);
  const auto header = nlohmann::json::parse(header_value.toStringRef());
  if (header.value("format", "") != kDenoiserFormat) {
    throw std::runtime_error(file.string() + " is not a denoiser checkpoint");
  }
  DenoiserState state = build_denoiser(DenoiserSpec::from_json(header.at("spec")), 0);
  torch::serialize::InputArchive model, shadow;
  archive.read("model", model);
  archive.read("shadow", shadow);
  state.model->load(model);
  state.shadow->load(shadow);
  for (auto& p : state.shadow->parameters()) p.set_requires_grad(false);
  state.step_count = header.value("step_count", std::int64_t{0});
  state.latent_bound = header.value("latent_bound", 0.0);
  return state;
}

}  // namespace coladiff
