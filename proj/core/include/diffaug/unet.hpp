#pragma once

#include "diffaug/checkpoint.hpp"
#include "diffaug/nn.hpp"
#include "diffaug/rng.hpp"
#include "diffaug/tensor.hpp"

namespace diffaug {

struct UnetConfig {
    size_t latent_size = 8;  // spatial side of the latent, must be even
    size_t in_channels = 4;
    size_t base = 24;
    size_t d_text = 32;
    size_t time_dim = 32;  // sinusoidal feature width, even
    size_t heads = 4;
    size_t groups = 4;
};

namespace detail_unet {

// Residual conv block with per-block timestep and pooled-text channel
// biases. The text projection starts at zero so conditioning grows from
// nothing; it gives the prompt a direct linear path into every block,
// which trains much faster than cross-attention alone at small step
// budgets.
struct ResBlock {
    GroupNormLayer gn_a, gn_b;
    Conv2dLayer conv_a, conv_b;
    Linear time_proj;
    Linear text_proj;
    Conv2dLayer skip;
    bool channel_change = false;
    ResBlock() = default;
    ResBlock(ParamSet& ps, const std::string& name, size_t in_ch,
             size_t out_ch, size_t time_hidden, size_t d_text, size_t groups,
             Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& temb,
                   const Tensor& cemb) const;
};

// Residual cross-attention from spatial tokens onto the text context.
struct XattnBlock {
    LayerNormLayer ln;
    Linear ctx_proj;
    MultiHeadAttention attn;
    XattnBlock() = default;
    XattnBlock(ParamSet& ps, const std::string& name, size_t channels,
               size_t d_text, size_t heads, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& ctx) const;
};

}  // namespace detail_unet

// Noise predictor over latents: a small two-level U-Net with cross-
// attention conditioning at every level and a zero-initialized output
// projection (the initial model predicts zero noise).
class Unet {
 public:
    Unet() = default;
    Unet(UnetConfig cfg, Rng& rng);

    // z: (1, in_channels, s, s); t is the absolute timestep (1-based);
    // ctx: (n, d_text) text context. Returns predicted noise, same shape
    // as z.
    Tensor forward(const Tensor& z, double t, const Tensor& ctx) const;

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const UnetConfig& config() const { return cfg_; }

    void save(CheckpointWriter& w, const std::string& prefix) const;
    static Unet load(const Checkpoint& c, const std::string& prefix);

 private:
    UnetConfig cfg_;
    ParamSet params_;
    Linear time_fc1_, time_fc2_;
    Conv2dLayer in_conv_;
    detail_unet::ResBlock enc_res_;
    detail_unet::XattnBlock enc_attn_;
    Conv2dLayer down_;
    detail_unet::ResBlock enc2_res_;
    detail_unet::XattnBlock enc2_attn_;
    detail_unet::ResBlock mid_res1_;
    detail_unet::XattnBlock mid_attn_;
    detail_unet::ResBlock mid_res2_;
    Conv2dLayer fuse_;
    detail_unet::ResBlock dec_res_;
    detail_unet::XattnBlock dec_attn_;
    GroupNormLayer out_norm_;
    Conv2dLayer out_conv_;
};

}  // namespace diffaug
