#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "udean/degradation.hpp"

namespace udean {

struct NetworkConfig {
    int64_t feat_channels = 64;
    int64_t n_groups = 5;
    int64_t n_blocks = 5;
    int64_t reduction = 16;
    ScaleFactor scale{};
    int64_t disc_base_channels = 32;
    int64_t disc_stages = 4;
    double leaky_slope = 0.2;

    /// Throws ConfigError on invalid combinations.
    void validate() const;

    bool operator==(const NetworkConfig&) const = default;
};

/// Counts forward invocations so tests can prove which components an
/// operation touched.
class ForwardCounter {
public:
    void record() { calls_.fetch_add(1, std::memory_order_relaxed); }
    [[nodiscard]] int64_t forward_calls() const { return calls_.load(std::memory_order_relaxed); }
    void reset_forward_calls() { calls_.store(0, std::memory_order_relaxed); }

private:
    std::atomic<int64_t> calls_{0};
};

/// Six 3x3x3 convolutions, each followed by leaky rectification. Layer 2
/// carries the in-plane stride and layer 4 the through-slice stride.
class ConvEncoderImpl : public torch::nn::Module, public ForwardCounter {
public:
    ConvEncoderImpl(int64_t in_channels, int64_t channels, std::array<int64_t, 3> layer2_stride,
                    std::array<int64_t, 3> layer4_stride, double slope);

    torch::Tensor forward(const torch::Tensor& x);

    static constexpr int kLayers = 6;

private:
    torch::nn::ModuleList layers_;
    double slope_;
    std::array<int64_t, 3> total_stride_{1, 1, 1};
};
TORCH_MODULE(ConvEncoder);

/// Global average pool, 1x1x1 squeeze, ReLU, 1x1x1 excite, sigmoid gate.
class ChannelAttentionImpl : public torch::nn::Module {
public:
    ChannelAttentionImpl(int64_t channels, int64_t reduction);
    torch::Tensor forward(const torch::Tensor& x);

    /// Test hook: drives the gate to exactly 1 (sigmoid of +infinity).
    bool force_gate_open = false;

private:
    torch::nn::Conv3d squeeze_{nullptr}, excite_{nullptr};
};
TORCH_MODULE(ChannelAttention);

/// Sets the test hook of every channel-attention gate inside `m`.
void set_attention_gate_open(torch::nn::Module& m, bool open);

/// Residual channel-attention block: conv, ReLU, conv, attention, skip.
class RcabImpl : public torch::nn::Module {
public:
    RcabImpl(int64_t channels, int64_t reduction);
    torch::Tensor forward(const torch::Tensor& x);

    ChannelAttention attention{nullptr};

private:
    torch::nn::Conv3d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(Rcab);

class ResidualGroupImpl : public torch::nn::Module {
public:
    ResidualGroupImpl(int64_t channels, int64_t n_blocks, int64_t reduction);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::ModuleList blocks;

private:
    torch::nn::Conv3d tail_{nullptr};
};
TORCH_MODULE(ResidualGroup);

/// Stack of residual groups with a long skip over the whole stack.
class ResidualTrunkImpl : public torch::nn::Module {
public:
    explicit ResidualTrunkImpl(const NetworkConfig& cfg);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::ModuleList groups;

private:
    torch::nn::Conv3d tail_{nullptr};
};
TORCH_MODULE(ResidualTrunk);

/// Residual trunk plus a one-channel projection; resolution preserving.
class LrDecoderImpl : public torch::nn::Module, public ForwardCounter {
public:
    explicit LrDecoderImpl(const NetworkConfig& cfg);
    torch::Tensor forward(const torch::Tensor& features);

    ResidualTrunk trunk{nullptr};
    torch::nn::Conv3d projection{nullptr};
};
TORCH_MODULE(LrDecoder);

/// Residual trunk, in-plane x2 sub-pixel upsampling, an optional
/// through-slice x2 transposed convolution, one-channel projection.
class SrDecoderImpl : public torch::nn::Module, public ForwardCounter {
public:
    explicit SrDecoderImpl(const NetworkConfig& cfg);
    torch::Tensor forward(const torch::Tensor& features);

    ResidualTrunk trunk{nullptr};
    torch::nn::Conv3d expand{nullptr};
    torch::nn::ConvTranspose3d slice_upsample{nullptr};
    torch::nn::Conv3d projection{nullptr};

private:
    ScaleFactor scale_;
    double slope_;
};
TORCH_MODULE(SrDecoder);

/// VGG-style stack: per stage (conv, leaky) then (stride-2 in-plane conv,
/// leaky), channels doubling from the base width; a final one-channel conv
/// produces a raw patch realness map.
class DiscriminatorImpl : public torch::nn::Module, public ForwardCounter {
public:
    DiscriminatorImpl(int64_t in_channels, int64_t base_channels, int64_t stages, double slope);
    torch::Tensor forward(const torch::Tensor& x);

    [[nodiscard]] int64_t in_channels() const { return in_channels_; }

private:
    torch::nn::ModuleList layers_;
    torch::nn::Conv3d head_{nullptr};
    int64_t in_channels_;
    double slope_;
};
TORCH_MODULE(Discriminator);

/// Rearranges (N, C*r*r, X, Y, Z) into (N, C, r*X, r*Y, Z).
torch::Tensor pixel_shuffle_inplane(const torch::Tensor& x, int64_t factor);

enum class ComponentId { Extractor, LrEncoder, LrDecoder, SrDecoder, LrDiscriminator, FeatureDiscriminator };
std::string_view to_string(ComponentId id);

/// The six learnable maps. Copies share parameters (LibTorch module holders).
struct ComponentSet {
    NetworkConfig config;
    ConvEncoder extractor{nullptr};
    ConvEncoder lr_encoder{nullptr};
    LrDecoder lr_decoder{nullptr};
    SrDecoder sr_decoder{nullptr};
    Discriminator lr_discriminator{nullptr};
    Discriminator feature_discriminator{nullptr};

    /// Builds fresh components. Initialization draws from torch's global
    /// generator, reseeded with `seed`.
    ComponentSet(const NetworkConfig& cfg, uint64_t seed);

    [[nodiscard]] std::shared_ptr<torch::nn::Module> module(ComponentId id) const;
    [[nodiscard]] std::vector<torch::Tensor> parameters(std::initializer_list<ComponentId> ids) const;
    [[nodiscard]] std::vector<torch::Tensor> generator_parameters() const;
    [[nodiscard]] std::vector<torch::Tensor> inference_parameters() const;

    /// Parameters keyed "component/layer.path".
    [[nodiscard]] std::vector<std::pair<std::string, torch::Tensor>> named_parameters() const;

    void to(torch::Dtype dtype);
    void reset_forward_calls();
    [[nodiscard]] int64_t forward_calls(ComponentId id) const;

    static constexpr std::array<ComponentId, 6> kAll{ComponentId::Extractor,       ComponentId::LrEncoder,
                                                     ComponentId::LrDecoder,       ComponentId::SrDecoder,
                                                     ComponentId::LrDiscriminator, ComponentId::FeatureDiscriminator};
    static constexpr std::array<ComponentId, 4> kGenerators{ComponentId::Extractor, ComponentId::LrEncoder,
                                                            ComponentId::LrDecoder, ComponentId::SrDecoder};
};

enum class ParameterSubset { Inference, All };

int64_t count_parameters(const ComponentSet& c, ParameterSubset subset);
int64_t count_parameters(const torch::nn::Module& m);

/// Published inference-network parameter count, for comparison only.
inline constexpr double kReferenceInferenceParamsMillions = 2.457;

/// Expected LR feature-map and realness-map shapes; throws ShapeError when
/// the patch shape does not fit the configuration.
struct ShapeContract {
    Shape3 lr_patch;
    Shape3 hr_patch;
    Shape3 feature;
    Shape3 realness;
};
ShapeContract shape_contract(const NetworkConfig& cfg, const Shape3& lr_patch);

}  // namespace udean
