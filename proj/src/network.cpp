#include "udean/network.hpp"

#include <cmath>

#include "udean/error.hpp"

namespace udean {

namespace nn = torch::nn;

void NetworkConfig::validate() const {
    if (feat_channels < 1 || n_groups < 1 || n_blocks < 1 || reduction < 1 || disc_base_channels < 1 ||
        disc_stages < 1)
        throw ConfigError("network widths and counts must be positive");
    if (feat_channels % reduction != 0)
        throw ConfigError("feat_channels (" + std::to_string(feat_channels) + ") must be divisible by reduction (" +
                          std::to_string(reduction) + ")");
    if (!scale.supported()) throw ConfigError("unsupported scale factor " + scale.to_string());
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in [0, 1)");
}

namespace {

nn::Conv3d conv3(int64_t in, int64_t out, std::array<int64_t, 3> stride = {1, 1, 1}) {
    return nn::Conv3d(nn::Conv3dOptions(in, out, 3).stride(stride).padding(1));
}

nn::Conv3d conv1(int64_t in, int64_t out) { return nn::Conv3d(nn::Conv3dOptions(in, out, 1)); }

/// Fan-in scaled normal init for the given negative slope; zero biases.
void init_conv(torch::nn::Module& m, double slope) {
    torch::NoGradGuard guard;
    for (auto& p : m.named_parameters(true)) {
        const auto& name = p.key();
        auto& t = p.value();
        if (name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0) {
            t.zero_();
        } else if (t.dim() >= 3) {
            torch::nn::init::kaiming_normal_(t, slope, torch::kFanIn, torch::kLeakyReLU);
        }
    }
}

/// Damps the last conv of every residual branch so deep residual stacks start
/// near the identity.
void damp_residual_branches(torch::nn::Module& m, double factor) {
    torch::NoGradGuard guard;
    for (auto& p : m.named_parameters(true)) {
        const auto& name = p.key();
        if (name.find("conv2.weight") != std::string::npos || name.find("tail.weight") != std::string::npos)
            p.value().mul_(factor);
    }
}

constexpr double kResidualDamping = 0.1;

}  // namespace

void set_attention_gate_open(torch::nn::Module& m, bool open) {
    for (const auto& child : m.modules(/*include_self=*/true))
        if (auto* ca = dynamic_cast<ChannelAttentionImpl*>(child.get())) ca->force_gate_open = open;
}

// ---------------------------------------------------------------------------

ConvEncoderImpl::ConvEncoderImpl(int64_t in_channels, int64_t channels, std::array<int64_t, 3> layer2_stride,
                                 std::array<int64_t, 3> layer4_stride, double slope)
    : slope_(slope) {
    layers_ = register_module("layers", nn::ModuleList());
    for (int i = 0; i < kLayers; ++i) {
        std::array<int64_t, 3> stride{1, 1, 1};
        if (i == 1) stride = layer2_stride;
        if (i == 3) stride = layer4_stride;
        for (int a = 0; a < 3; ++a) total_stride_[a] *= stride[a];
        layers_->push_back(conv3(i == 0 ? in_channels : channels, channels, stride));
    }
    init_conv(*this, slope_);
}

torch::Tensor ConvEncoderImpl::forward(const torch::Tensor& x) {
    record();
    if (x.dim() != 5) throw ShapeError("encoder expects 5D input");
    for (int a = 0; a < 3; ++a)
        if (x.size(2 + a) % total_stride_[a] != 0)
            throw ShapeError("encoder input extent " + std::to_string(x.size(2 + a)) + " not divisible by stride " +
                             std::to_string(total_stride_[a]));
    auto h = x;
    for (const auto& layer : *layers_) h = torch::leaky_relu(layer->as<nn::Conv3d>()->forward(h), slope_);
    return h;
}

// ---------------------------------------------------------------------------

ChannelAttentionImpl::ChannelAttentionImpl(int64_t channels, int64_t reduction) {
    squeeze_ = register_module("squeeze", conv1(channels, channels / reduction));
    excite_ = register_module("excite", conv1(channels / reduction, channels));
}

torch::Tensor ChannelAttentionImpl::forward(const torch::Tensor& x) {
    if (force_gate_open) return x;
    auto pooled = x.mean({2, 3, 4}, /*keepdim=*/true);
    auto gate = torch::sigmoid(excite_(torch::relu(squeeze_(pooled))));
    return x * gate;
}

RcabImpl::RcabImpl(int64_t channels, int64_t reduction) {
    conv1_ = register_module("conv1", conv3(channels, channels));
    conv2_ = register_module("conv2", conv3(channels, channels));
    attention = register_module("attention", ChannelAttention(channels, reduction));
}

torch::Tensor RcabImpl::forward(const torch::Tensor& x) {
    return x + attention(conv2_(torch::relu(conv1_(x))));
}

ResidualGroupImpl::ResidualGroupImpl(int64_t channels, int64_t n_blocks, int64_t reduction) {
    blocks = register_module("blocks", nn::ModuleList());
    for (int64_t b = 0; b < n_blocks; ++b) blocks->push_back(Rcab(channels, reduction));
    tail_ = register_module("tail", conv3(channels, channels));
}

torch::Tensor ResidualGroupImpl::forward(const torch::Tensor& x) {
    auto h = x;
    for (const auto& block : *blocks) h = block->as<Rcab>()->forward(h);
    return x + tail_(h);
}

ResidualTrunkImpl::ResidualTrunkImpl(const NetworkConfig& cfg) {
    groups = register_module("groups", nn::ModuleList());
    for (int64_t g = 0; g < cfg.n_groups; ++g)
        groups->push_back(ResidualGroup(cfg.feat_channels, cfg.n_blocks, cfg.reduction));
    tail_ = register_module("tail", conv3(cfg.feat_channels, cfg.feat_channels));
}

torch::Tensor ResidualTrunkImpl::forward(const torch::Tensor& x) {
    auto h = x;
    for (const auto& group : *groups) h = group->as<ResidualGroup>()->forward(h);
    return x + tail_(h);
}

// ---------------------------------------------------------------------------

LrDecoderImpl::LrDecoderImpl(const NetworkConfig& cfg) {
    trunk = register_module("trunk", ResidualTrunk(cfg));
    projection = register_module("projection", conv3(cfg.feat_channels, 1));
    init_conv(*this, 0.0);
    damp_residual_branches(*this, kResidualDamping);
}

torch::Tensor LrDecoderImpl::forward(const torch::Tensor& features) {
    record();
    return projection(trunk(features));
}

torch::Tensor pixel_shuffle_inplane(const torch::Tensor& x, int64_t factor) {
    const auto n = x.size(0), c = x.size(1), X = x.size(2), Y = x.size(3), Z = x.size(4);
    if (c % (factor * factor) != 0) throw ShapeError("pixel_shuffle_inplane: channels not divisible");
    const auto out_c = c / (factor * factor);
    return x.reshape({n, out_c, factor, factor, X, Y, Z})
        .permute({0, 1, 4, 2, 5, 3, 6})
        .reshape({n, out_c, X * factor, Y * factor, Z});
}

SrDecoderImpl::SrDecoderImpl(const NetworkConfig& cfg) : scale_(cfg.scale), slope_(cfg.leaky_slope) {
    if (!cfg.scale.supported()) throw ConfigError("SR decoder: unsupported scale " + cfg.scale.to_string());
    const int64_t c = cfg.feat_channels;
    trunk = register_module("trunk", ResidualTrunk(cfg));
    expand = register_module("expand", conv3(c, c * cfg.scale.sx * cfg.scale.sy));
    if (cfg.scale.sz == 2) {
        slice_upsample = register_module(
            "slice_upsample",
            nn::ConvTranspose3d(nn::ConvTranspose3dOptions(c, c, {3, 3, 4}).stride({1, 1, 2}).padding({1, 1, 1})));
    }
    projection = register_module("projection", conv3(c, 1));
    init_conv(*this, 0.0);
    damp_residual_branches(*this, kResidualDamping);
}

torch::Tensor SrDecoderImpl::forward(const torch::Tensor& features) {
    record();
    auto h = pixel_shuffle_inplane(expand(trunk(features)), scale_.sx);
    if (slice_upsample) h = torch::leaky_relu(slice_upsample(h), slope_);
    return projection(h);
}

// ---------------------------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(int64_t in_channels, int64_t base_channels, int64_t stages, double slope)
    : in_channels_(in_channels), slope_(slope) {
    layers_ = register_module("layers", nn::ModuleList());
    int64_t in = in_channels;
    for (int64_t s = 0; s < stages; ++s) {
        const int64_t width = base_channels << s;
        layers_->push_back(conv3(in, width));
        layers_->push_back(conv3(width, width, {2, 2, 1}));
        in = width;
    }
    head_ = register_module("head", conv3(in, 1));
    init_conv(*this, slope_);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
    record();
    if (x.dim() != 5 || x.size(1) != in_channels_)
        throw ShapeError("discriminator expects " + std::to_string(in_channels_) + "-channel 5D input");
    auto h = x;
    for (const auto& layer : *layers_) h = torch::leaky_relu(layer->as<nn::Conv3d>()->forward(h), slope_);
    return head_(h);
}

// ---------------------------------------------------------------------------

std::string_view to_string(ComponentId id) {
    switch (id) {
        case ComponentId::Extractor: return "downsampling_extractor";
        case ComponentId::LrEncoder: return "lr_encoder";
        case ComponentId::LrDecoder: return "lr_decoder";
        case ComponentId::SrDecoder: return "sr_decoder";
        case ComponentId::LrDiscriminator: return "lr_discriminator";
        case ComponentId::FeatureDiscriminator: return "feature_discriminator";
    }
    return "?";
}

ComponentSet::ComponentSet(const NetworkConfig& cfg, uint64_t seed) : config(cfg) {
    cfg.validate();
    torch::manual_seed(seed);
    const int64_t c = cfg.feat_channels;
    extractor = ConvEncoder(1, c, std::array<int64_t, 3>{cfg.scale.sx, cfg.scale.sy, 1},
                            std::array<int64_t, 3>{1, 1, cfg.scale.sz}, cfg.leaky_slope);
    lr_encoder = ConvEncoder(1, c, std::array<int64_t, 3>{1, 1, 1}, std::array<int64_t, 3>{1, 1, 1}, cfg.leaky_slope);
    lr_decoder = LrDecoder(cfg);
    sr_decoder = SrDecoder(cfg);
    lr_discriminator = Discriminator(1, cfg.disc_base_channels, cfg.disc_stages, cfg.leaky_slope);
    feature_discriminator = Discriminator(c, cfg.disc_base_channels, cfg.disc_stages, cfg.leaky_slope);
}

std::shared_ptr<torch::nn::Module> ComponentSet::module(ComponentId id) const {
    switch (id) {
        case ComponentId::Extractor: return extractor.ptr();
        case ComponentId::LrEncoder: return lr_encoder.ptr();
        case ComponentId::LrDecoder: return lr_decoder.ptr();
        case ComponentId::SrDecoder: return sr_decoder.ptr();
        case ComponentId::LrDiscriminator: return lr_discriminator.ptr();
        case ComponentId::FeatureDiscriminator: return feature_discriminator.ptr();
    }
    return nullptr;
}

std::vector<torch::Tensor> ComponentSet::parameters(std::initializer_list<ComponentId> ids) const {
    std::vector<torch::Tensor> out;
    for (auto id : ids) {
        auto p = module(id)->parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

std::vector<torch::Tensor> ComponentSet::generator_parameters() const {
    return parameters({ComponentId::Extractor, ComponentId::LrEncoder, ComponentId::LrDecoder,
                       ComponentId::SrDecoder});
}

std::vector<torch::Tensor> ComponentSet::inference_parameters() const {
    return parameters({ComponentId::LrEncoder, ComponentId::SrDecoder});
}

std::vector<std::pair<std::string, torch::Tensor>> ComponentSet::named_parameters() const {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (auto id : kAll)
        for (const auto& p : module(id)->named_parameters(true))
            out.emplace_back(std::string(to_string(id)) + "/" + p.key(), p.value());
    return out;
}

void ComponentSet::to(torch::Dtype dtype) {
    for (auto id : kAll) module(id)->to(dtype);
}

void ComponentSet::reset_forward_calls() {
    extractor->reset_forward_calls();
    lr_encoder->reset_forward_calls();
    lr_decoder->reset_forward_calls();
    sr_decoder->reset_forward_calls();
    lr_discriminator->reset_forward_calls();
    feature_discriminator->reset_forward_calls();
}

int64_t ComponentSet::forward_calls(ComponentId id) const {
    switch (id) {
        case ComponentId::Extractor: return extractor->forward_calls();
        case ComponentId::LrEncoder: return lr_encoder->forward_calls();
        case ComponentId::LrDecoder: return lr_decoder->forward_calls();
        case ComponentId::SrDecoder: return sr_decoder->forward_calls();
        case ComponentId::LrDiscriminator: return lr_discriminator->forward_calls();
        case ComponentId::FeatureDiscriminator: return feature_discriminator->forward_calls();
    }
    return 0;
}

int64_t count_parameters(const torch::nn::Module& m) {
    int64_t total = 0;
    for (const auto& p : m.parameters()) total += p.numel();
    return total;
}

int64_t count_parameters(const ComponentSet& c, ParameterSubset subset) {
    int64_t total = 0;
    for (auto id : ComponentSet::kAll) {
        if (subset == ParameterSubset::Inference && id != ComponentId::LrEncoder && id != ComponentId::SrDecoder)
            continue;
        total += count_parameters(*c.module(id));
    }
    return total;
}

ShapeContract shape_contract(const NetworkConfig& cfg, const Shape3& lr_patch) {
    ShapeContract sc{};
    sc.lr_patch = lr_patch;
    sc.hr_patch = lr_patch * cfg.scale;
    sc.feature = lr_patch;
    Shape3 r = lr_patch;
    for (int64_t s = 0; s < cfg.disc_stages; ++s) {
        // 3x3x3 kernel, padding 1, stride 2 in-plane.
        r[0] = (r[0] - 1) / 2 + 1;
        r[1] = (r[1] - 1) / 2 + 1;
    }
    sc.realness = r;
    for (int a = 0; a < 3; ++a)
        if (lr_patch[a] < 1) throw ShapeError("empty LR patch shape " + to_string(lr_patch));
    return sc;
}

}  // namespace udean
