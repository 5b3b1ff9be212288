#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include "pclmix/types.hpp"

namespace pclmix::model {

struct NetConfig {
  int classes = 4;
  int base_width = 16;
  int depth = 4;
  int embed_dim = 64;
  int attn_heads = 4;
  int attn_blocks = 2;
  int feature_stride = 8;

  /// Throws if the configuration is inconsistent or the image side is not
  /// divisible by 2^depth. image_size <= 0 skips the size check.
  void validate(int image_height = 0, int image_width = 0) const;
  int channels(int stage) const { return base_width << stage; }
  int deepest_channels() const { return channels(depth - 1); }
};

/// Per-pixel class probabilities of the CNN (p_c) and transformer (p_t)
/// decoders, both [B, K, H, W].
struct DualPrediction {
  torch::Tensor p_c;
  torch::Tensor p_t;
};

struct ForwardOutput {
  DualPrediction pred;
  torch::Tensor z;  ///< [B, D, H/s, W/s], unit norm over D
};

/// Counts sub-network executions so tests can prove which paths ran.
struct Invocations {
  std::atomic<std::int64_t> encoder{0};
  std::atomic<std::int64_t> cnn_decoder{0};
  std::atomic<std::int64_t> tf_decoder{0};
  std::atomic<std::int64_t> projection{0};

  void reset() {
    encoder = 0;
    cnn_decoder = 0;
    tf_decoder = 0;
    projection = 0;
  }
};

class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int in_channels, int out_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::GroupNorm norm_{nullptr};
};
TORCH_MODULE(ConvBlock);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const NetConfig& cfg);
  /// Feature maps at strides 1, 2, ..., 2^(depth-1).
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

 private:
  torch::nn::ModuleList stages_;
};
TORCH_MODULE(Encoder);

/// U-Net style decoder: bilinear upsampling, skip concatenation, two convs.
class CnnDecoderImpl : public torch::nn::Module {
 public:
  explicit CnnDecoderImpl(const NetConfig& cfg);
  torch::Tensor forward(const std::vector<torch::Tensor>& features);

 private:
  torch::nn::ModuleList ups_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(CnnDecoder);

class AttentionBlockImpl : public torch::nn::Module {
 public:
  AttentionBlockImpl(int dim, int heads);
  torch::Tensor forward(const torch::Tensor& tokens);  // [B, N, C]

 private:
  int heads_;
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Linear qkv_{nullptr}, out_{nullptr}, fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(AttentionBlock);

/// Global self-attention over the deepest feature tokens, followed by
/// transposed-conv upsampling with additive skips.
class TransformerDecoderImpl : public torch::nn::Module {
 public:
  explicit TransformerDecoderImpl(const NetConfig& cfg);
  torch::Tensor forward(const std::vector<torch::Tensor>& features);

 private:
  torch::nn::ModuleList blocks_;
  torch::nn::LayerNorm norm_{nullptr};
  torch::nn::ModuleList ups_;
  torch::nn::ModuleList up_norms_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(TransformerDecoder);

/// Two 1x1 convolutions then per-location L2 normalization.
class ProjectionHeadImpl : public torch::nn::Module {
 public:
  explicit ProjectionHeadImpl(const NetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& deepest);

 private:
  torch::nn::Conv2d fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(ProjectionHead);

/// Shared encoder with heterogeneous CNN and transformer decoders.
/// Parameter names are prefixed encoder., cnn_decoder., tf_decoder., proj.
class SegNetImpl : public torch::nn::Module {
 public:
  explicit SegNetImpl(NetConfig cfg);

  /// images: [B, H, W] or [B, 1, H, W].
  ForwardOutput forward(const torch::Tensor& images);
  /// Both decoders without the projection head.
  DualPrediction predict(const torch::Tensor& images);
  /// CNN-decoder probabilities only; the auxiliary branch is never run.
  torch::Tensor predict_main(const torch::Tensor& images);

  /// Argmax of the CNN decoder (ties go to the lowest class index).
  /// image [H, W] -> int64 [H, W]; batched [B, H, W] -> [B, H, W].
  torch::Tensor infer(const torch::Tensor& images);

  const NetConfig& config() const { return cfg_; }
  Invocations& invocations() { return calls_; }

 private:
  torch::Tensor prepare(const torch::Tensor& images) const;

  NetConfig cfg_;
  Encoder encoder_{nullptr};
  CnnDecoder cnn_decoder_{nullptr};
  TransformerDecoder tf_decoder_{nullptr};
  ProjectionHead proj_{nullptr};
  Invocations calls_;
};
TORCH_MODULE(SegNet);

/// Builds a network with deterministic initialization from `seed`.
SegNet make_segnet(const NetConfig& cfg, std::uint64_t seed);

/// Parameter group of a fully qualified parameter name.
enum class ParamGroup { kEncoder, kCnnDecoder, kTfDecoder, kProjection };
ParamGroup param_group(const std::string& name);

}  // namespace pclmix::model
