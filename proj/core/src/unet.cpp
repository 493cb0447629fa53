#include "diffaug/unet.hpp"

#include "diffaug/errors.hpp"
#include "diffaug/ops.hpp"

namespace diffaug {

using namespace ops;

namespace detail_unet {

ResBlock::ResBlock(ParamSet& ps, const std::string& name, size_t in_ch,
                   size_t out_ch, size_t time_hidden, size_t d_text,
                   size_t groups, Rng& rng)
    : channel_change(in_ch != out_ch) {
    gn_a = GroupNormLayer(ps, name + ".gn_a", in_ch, groups);
    conv_a = Conv2dLayer(ps, name + ".conv_a", in_ch, out_ch, 3, 1, 1, rng);
    time_proj = Linear(ps, name + ".time", time_hidden, out_ch, rng);
    text_proj = Linear(ps, name + ".text", d_text, out_ch, rng, 0.0);
    gn_b = GroupNormLayer(ps, name + ".gn_b", out_ch, groups);
    conv_b = Conv2dLayer(ps, name + ".conv_b", out_ch, out_ch, 3, 1, 1, rng);
    if (channel_change) {
        skip = Conv2dLayer(ps, name + ".skip", in_ch, out_ch, 1, 1, 0, rng);
    }
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& temb,
                         const Tensor& cemb) const {
    Tensor h = conv_a.forward(silu(gn_a.forward(x)));
    h = add_channel_bias(
        h, add(time_proj.forward(temb), text_proj.forward(cemb)));
    h = conv_b.forward(silu(gn_b.forward(h)));
    return add(h, channel_change ? skip.forward(x) : x);
}

XattnBlock::XattnBlock(ParamSet& ps, const std::string& name, size_t channels,
                       size_t d_text, size_t heads, Rng& rng) {
    ln = LayerNormLayer(ps, name + ".ln", channels);
    ctx_proj = Linear(ps, name + ".ctx", d_text, channels, rng);
    attn = MultiHeadAttention(ps, name + ".attn", channels, heads, rng);
}

Tensor XattnBlock::forward(const Tensor& x, const Tensor& ctx) const {
    const Shape& s = x.shape();
    Tensor tokens = nchw_to_tokens(x);
    Tensor att = attn.forward(ln.forward(tokens), ctx_proj.forward(ctx));
    return tokens_to_nchw(add(tokens, att), s[0], s[1], s[2], s[3]);
}

}  // namespace detail_unet

using detail_unet::ResBlock;
using detail_unet::XattnBlock;

Unet::Unet(UnetConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg_.latent_size % 2 != 0 || cfg_.latent_size < 4) {
        throw ConfigError("Unet: latent_size must be even and >= 4");
    }
    size_t b = cfg_.base;
    size_t th = 2 * cfg_.time_dim;
    time_fc1_ = Linear(params_, "time_fc1", cfg_.time_dim, th, rng);
    time_fc2_ = Linear(params_, "time_fc2", th, th, rng);

    size_t dt = cfg_.d_text;
    in_conv_ = Conv2dLayer(params_, "in", cfg_.in_channels, b, 3, 1, 1, rng);
    enc_res_ = ResBlock(params_, "enc_res", b, b, th, dt, cfg_.groups, rng);
    enc_attn_ = XattnBlock(params_, "enc_attn", b, cfg_.d_text, cfg_.heads, rng);
    down_ = Conv2dLayer(params_, "down", b, 2 * b, 3, 2, 1, rng);
    enc2_res_ =
        ResBlock(params_, "enc2_res", 2 * b, 2 * b, th, dt, cfg_.groups, rng);
    enc2_attn_ =
        XattnBlock(params_, "enc2_attn", 2 * b, cfg_.d_text, cfg_.heads, rng);
    mid_res1_ =
        ResBlock(params_, "mid_res1", 2 * b, 2 * b, th, dt, cfg_.groups, rng);
    mid_attn_ =
        XattnBlock(params_, "mid_attn", 2 * b, cfg_.d_text, cfg_.heads, rng);
    mid_res2_ =
        ResBlock(params_, "mid_res2", 2 * b, 2 * b, th, dt, cfg_.groups, rng);
    fuse_ = Conv2dLayer(params_, "fuse", 3 * b, b, 3, 1, 1, rng);
    dec_res_ = ResBlock(params_, "dec_res", b, b, th, dt, cfg_.groups, rng);
    dec_attn_ = XattnBlock(params_, "dec_attn", b, cfg_.d_text, cfg_.heads, rng);
    out_norm_ = GroupNormLayer(params_, "out_norm", b, cfg_.groups);
    out_conv_ =
        Conv2dLayer(params_, "out", b, cfg_.in_channels, 3, 1, 1, rng, true);
}

Tensor Unet::forward(const Tensor& z, double t, const Tensor& ctx) const {
    const Shape& s = z.shape();
    if (s.size() != 4 || s[0] != 1 || s[1] != cfg_.in_channels ||
        s[2] != cfg_.latent_size || s[3] != cfg_.latent_size) {
        throw DimensionError("Unet: latent shape mismatch");
    }
    if (ctx.shape().size() != 2 || ctx.shape()[1] != cfg_.d_text) {
        throw DimensionError("Unet: context width mismatch");
    }
    Tensor temb = Tensor::from({1, cfg_.time_dim},
                               sinusoidal_features(t, cfg_.time_dim));
    temb = silu(time_fc1_.forward(temb));
    temb = time_fc2_.forward(temb);
    // Token-mean pooled context feeds the per-block text biases.
    size_t n_tok = ctx.dim(0);
    Tensor cemb = matmul(
        Tensor::full({1, n_tok}, 1.0 / static_cast<double>(n_tok)), ctx);

    Tensor h = in_conv_.forward(z);
    h = enc_res_.forward(h, temb, cemb);
    h = enc_attn_.forward(h, ctx);
    Tensor skip = h;
    h = down_.forward(h);
    h = enc2_res_.forward(h, temb, cemb);
    h = enc2_attn_.forward(h, ctx);
    h = mid_res1_.forward(h, temb, cemb);
    h = mid_attn_.forward(h, ctx);
    h = mid_res2_.forward(h, temb, cemb);
    h = upsample_nearest2(h);
    h = fuse_.forward(concat_channels(h, skip));
    h = dec_res_.forward(h, temb, cemb);
    h = dec_attn_.forward(h, ctx);
    return out_conv_.forward(silu(out_norm_.forward(h)));
}

void Unet::save(CheckpointWriter& w, const std::string& prefix) const {
    params_.save(w, prefix);
    w.set_meta(prefix + "config",
               nlohmann::json{{"latent_size", cfg_.latent_size},
                              {"in_channels", cfg_.in_channels},
                              {"base", cfg_.base},
                              {"d_text", cfg_.d_text},
                              {"time_dim", cfg_.time_dim},
                              {"heads", cfg_.heads},
                              {"groups", cfg_.groups}});
}

Unet Unet::load(const Checkpoint& c, const std::string& prefix) {
    if (!c.meta().contains(prefix + "config")) {
        throw FormatError("checkpoint lacks unet meta under '" + prefix + "'");
    }
    const auto& jc = c.meta().at(prefix + "config");
    UnetConfig cfg;
    cfg.latent_size = jc.at("latent_size").get<size_t>();
    cfg.in_channels = jc.at("in_channels").get<size_t>();
    cfg.base = jc.at("base").get<size_t>();
    cfg.d_text = jc.at("d_text").get<size_t>();
    cfg.time_dim = jc.at("time_dim").get<size_t>();
    cfg.heads = jc.at("heads").get<size_t>();
    cfg.groups = jc.at("groups").get<size_t>();
    Rng rng(0);  // weights are overwritten by load below
    Unet net(cfg, rng);
    net.params_.load(c, prefix);
    return net;
}

}  // namespace diffaug
