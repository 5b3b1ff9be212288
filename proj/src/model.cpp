#include "pclmix/model.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <fmt/format.h>

namespace pclmix::model {
namespace F = torch::nn::functional;

namespace {

constexpr int kNormGroups = 4;
constexpr int kMlpRatio = 2;

// Fixed 2-D sinusoidal position code, [h*w, dim].
torch::Tensor position_code(int64_t h, int64_t w, int64_t dim, const torch::TensorOptions& opts) {
  const int64_t quarter = dim / 4;
  auto freq = torch::exp(torch::arange(quarter, opts) * (-std::log(10000.0) / quarter));
  auto ys = torch::arange(h, opts).unsqueeze(1) * freq;  // [h, q]
  auto xs = torch::arange(w, opts).unsqueeze(1) * freq;  // [w, q]
  auto y_code = torch::cat({ys.sin(), ys.cos()}, 1).unsqueeze(1).expand({h, w, 2 * quarter});
  auto x_code = torch::cat({xs.sin(), xs.cos()}, 1).unsqueeze(0).expand({h, w, 2 * quarter});
  return torch::cat({y_code, x_code}, 2).reshape({h * w, 4 * quarter});
}

}  // namespace

void NetConfig::validate(int image_height, int image_width) const {
  require(classes >= 2, "classes must be at least 2");
  require(depth >= 2 && depth <= 6, "depth must be in [2, 6]");
  require(base_width >= kNormGroups && base_width % kNormGroups == 0,
          "base_width must be a positive multiple of 4");
  require(embed_dim >= 8, "embed_dim must be at least 8");
  require(attn_heads >= 1 && deepest_channels() % attn_heads == 0,
          "deepest channel count must be divisible by attn_heads");
  require(deepest_channels() % 4 == 0, "deepest channel count must be divisible by 4");
  require(attn_blocks >= 0, "attn_blocks must be non-negative");
  require(feature_stride == (1 << (depth - 1)),
          fmt::format("feature_stride {} must equal 2^(depth-1) = {}", feature_stride,
                      1 << (depth - 1)));
  const int div = 1 << depth;
  if (image_height > 0 || image_width > 0) {
    require(image_height % div == 0 && image_width % div == 0,
            fmt::format("image size {}x{} not divisible by 2^depth = {}", image_height,
                        image_width, div));
  }
}

ConvBlockImpl::ConvBlockImpl(int in_channels, int out_channels)
    : conv_(register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                                          in_channels, out_channels, 3)
                                                          .padding(1)))),
      norm_(register_module("norm", torch::nn::GroupNorm(kNormGroups, out_channels))) {}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  return torch::relu(norm_(conv_(x)));
}

EncoderImpl::EncoderImpl(const NetConfig& cfg) {
  for (int s = 0; s < cfg.depth; ++s) {
    const int in = s == 0 ? 1 : cfg.channels(s - 1);
    stages_->push_back(torch::nn::Sequential(ConvBlock(in, cfg.channels(s)),
                                             ConvBlock(cfg.channels(s), cfg.channels(s))));
  }
  register_module("stages", stages_);
}

std::vector<torch::Tensor> EncoderImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> feats;
  torch::Tensor cur = x;
  for (size_t s = 0; s < stages_->size(); ++s) {
    if (s > 0) cur = F::max_pool2d(cur, F::MaxPool2dFuncOptions(2));
    cur = stages_[s]->as<torch::nn::Sequential>()->forward(cur);
    feats.push_back(cur);
  }
  return feats;
}

CnnDecoderImpl::CnnDecoderImpl(const NetConfig& cfg) {
  for (int s = cfg.depth - 2; s >= 0; --s) {
    ups_->push_back(torch::nn::Sequential(
        ConvBlock(cfg.channels(s + 1) + cfg.channels(s), cfg.channels(s)),
        ConvBlock(cfg.channels(s), cfg.channels(s))));
  }
  register_module("ups", ups_);
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.channels(0),
                                                                             cfg.classes, 1)));
}

torch::Tensor CnnDecoderImpl::forward(const std::vector<torch::Tensor>& features) {
  torch::Tensor x = features.back();
  for (size_t i = 0; i < ups_->size(); ++i) {
    const auto& skip = features[features.size() - 2 - i];
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{skip.size(2), skip.size(3)})
                              .mode(torch::kBilinear)
                              .align_corners(false));
    x = ups_[i]->as<torch::nn::Sequential>()->forward(torch::cat({x, skip}, 1));
  }
  return torch::softmax(head_(x), 1);
}

AttentionBlockImpl::AttentionBlockImpl(int dim, int heads)
    : heads_(heads),
      norm1_(register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})))),
      norm2_(register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})))),
      qkv_(register_module("qkv", torch::nn::Linear(dim, 3 * dim))),
      out_(register_module("out", torch::nn::Linear(dim, dim))),
      fc1_(register_module("fc1", torch::nn::Linear(dim, kMlpRatio * dim))),
      fc2_(register_module("fc2", torch::nn::Linear(kMlpRatio * dim, dim))) {}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& tokens) {
  const int64_t b = tokens.size(0), n = tokens.size(1), c = tokens.size(2);
  const int64_t hd = c / heads_;
  auto qkv = qkv_(norm1_(tokens)).reshape({b, n, 3, heads_, hd}).permute({2, 0, 3, 1, 4});
  auto q = qkv[0], k = qkv[1], v = qkv[2];  // [B, heads, N, hd]
  auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(double(hd)), -1);
  auto mixed = torch::matmul(attn, v).transpose(1, 2).reshape({b, n, c});
  auto x = tokens + out_(mixed);
  return x + fc2_(torch::gelu(fc1_(norm2_(x))));
}

TransformerDecoderImpl::TransformerDecoderImpl(const NetConfig& cfg) {
  const int dim = cfg.deepest_channels();
  for (int i = 0; i < cfg.attn_blocks; ++i) blocks_->push_back(AttentionBlock(dim, cfg.attn_heads));
  register_module("blocks", blocks_);
  norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  for (int s = cfg.depth - 2; s >= 0; --s) {
    ups_->push_back(torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(cfg.channels(s + 1), cfg.channels(s), 2).stride(2)));
    up_norms_->push_back(torch::nn::GroupNorm(kNormGroups, cfg.channels(s)));
  }
  register_module("ups", ups_);
  register_module("up_norms", up_norms_);
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.channels(0),
                                                                             cfg.classes, 1)));
}

torch::Tensor TransformerDecoderImpl::forward(const std::vector<torch::Tensor>& features) {
  const auto& deepest = features.back();
  const int64_t b = deepest.size(0), c = deepest.size(1), h = deepest.size(2), w = deepest.size(3);
  auto tokens = deepest.flatten(2).transpose(1, 2);  // [B, h*w, C]
  tokens = tokens + position_code(h, w, c, deepest.options()).unsqueeze(0);
  for (const auto& block : *blocks_) tokens = block->as<AttentionBlock>()->forward(tokens);
  torch::Tensor x = norm_(tokens).transpose(1, 2).reshape({b, c, h, w});
  for (size_t i = 0; i < ups_->size(); ++i) {
    const auto& skip = features[features.size() - 2 - i];
    x = ups_[i]->as<torch::nn::ConvTranspose2d>()->forward(x) + skip;
    x = torch::gelu(up_norms_[i]->as<torch::nn::GroupNorm>()->forward(x));
  }
  return torch::softmax(head_(x), 1);
}

ProjectionHeadImpl::ProjectionHeadImpl(const NetConfig& cfg)
    : fc1_(register_module("fc1", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                                        cfg.deepest_channels(),
                                                        cfg.deepest_channels(), 1)))),
      fc2_(register_module("fc2", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                                        cfg.deepest_channels(), cfg.embed_dim, 1)))) {}

torch::Tensor ProjectionHeadImpl::forward(const torch::Tensor& deepest) {
  auto z = fc2_(torch::relu(fc1_(deepest)));
  return F::normalize(z, F::NormalizeFuncOptions().dim(1).eps(1e-12));
}

SegNetImpl::SegNetImpl(NetConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  encoder_ = register_module("encoder", Encoder(cfg_));
  cnn_decoder_ = register_module("cnn_decoder", CnnDecoder(cfg_));
  tf_decoder_ = register_module("tf_decoder", TransformerDecoder(cfg_));
  proj_ = register_module("proj", ProjectionHead(cfg_));
}

torch::Tensor SegNetImpl::prepare(const torch::Tensor& images) const {
  torch::Tensor x = images;
  if (x.dim() == 3) x = x.unsqueeze(1);
  require(x.dim() == 4 && x.size(1) == 1,
          "network expects [B, H, W] or [B, 1, H, W] images, got " + shape_str(images));
  cfg_.validate(static_cast<int>(x.size(2)), static_cast<int>(x.size(3)));
  const auto dtype = encoder_->parameters().front().scalar_type();
  return x.to(dtype);
}

ForwardOutput SegNetImpl::forward(const torch::Tensor& images) {
  auto feats = encoder_->forward(prepare(images));
  ++calls_.encoder;
  ForwardOutput out;
  out.pred.p_c = cnn_decoder_->forward(feats);
  ++calls_.cnn_decoder;
  out.pred.p_t = tf_decoder_->forward(feats);
  ++calls_.tf_decoder;
  out.z = proj_->forward(feats.back());
  ++calls_.projection;
  return out;
}

DualPrediction SegNetImpl::predict(const torch::Tensor& images) {
  auto feats = encoder_->forward(prepare(images));
  ++calls_.encoder;
  DualPrediction out;
  out.p_c = cnn_decoder_->forward(feats);
  ++calls_.cnn_decoder;
  out.p_t = tf_decoder_->forward(feats);
  ++calls_.tf_decoder;
  return out;
}

torch::Tensor SegNetImpl::predict_main(const torch::Tensor& images) {
  auto feats = encoder_->forward(prepare(images));
  ++calls_.encoder;
  auto p = cnn_decoder_->forward(feats);
  ++calls_.cnn_decoder;
  return p;
}

torch::Tensor SegNetImpl::infer(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  const bool single = images.dim() == 2;
  auto batch = single ? images.unsqueeze(0) : images;
  auto labels = predict_main(batch).argmax(1);
  return single ? labels.squeeze(0) : labels;
}

SegNet make_segnet(const NetConfig& cfg, std::uint64_t seed) {
  // Private generator: concurrent runs must not share the global RNG.
  auto gen = at::detail::createCPUGenerator(seed);
  SegNet net(cfg);
  torch::NoGradGuard no_grad;
  for (auto& item : net->named_parameters()) {
    auto& p = item.value();
    if (item.key().ends_with(".bias")) {
      p.zero_();
    } else if (p.dim() == 4) {
      const double fan_in = static_cast<double>(p.size(1) * p.size(2) * p.size(3));
      p.normal_(0.0, std::sqrt(2.0 / fan_in), gen);
    } else if (p.dim() == 2) {
      p.normal_(0.0, 0.02, gen);
    }
  }
  return net;
}

ParamGroup param_group(const std::string& name) {
  if (name.starts_with("encoder.")) return ParamGroup::kEncoder;
  if (name.starts_with("cnn_decoder.")) return ParamGroup::kCnnDecoder;
  if (name.starts_with("tf_decoder.")) return ParamGroup::kTfDecoder;
  if (name.starts_with("proj.")) return ParamGroup::kProjection;
  throw Error("parameter outside known groups: " + name);
}

}  // namespace pclmix::model
