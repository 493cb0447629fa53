#include "diffaug/vae.hpp"

#include <algorithm>
#include <cmath>

#include "diffaug/errors.hpp"
#include "diffaug/image_io.hpp"
#include "diffaug/ops.hpp"
#include "diffaug/optim.hpp"

namespace diffaug {

using namespace ops;

Vae::Vae(VaeConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg_.image_size % 4 != 0 || cfg_.image_size < 8) {
        throw ConfigError("Vae: image_size must be a multiple of 4, >= 8");
    }
    size_t b = cfg_.base;
    size_t lc = cfg_.latent_channels;
    e1_ = Conv2dLayer(params_, "e1", 1, b, 3, 1, 1, rng);
    eg1_ = GroupNormLayer(params_, "eg1", b, 4);
    e2_ = Conv2dLayer(params_, "e2", b, 2 * b, 3, 2, 1, rng);
    eg2_ = GroupNormLayer(params_, "eg2", 2 * b, 4);
    e3_ = Conv2dLayer(params_, "e3", 2 * b, 2 * b, 3, 2, 1, rng);
    eg3_ = GroupNormLayer(params_, "eg3", 2 * b, 4);
    e4_ = Conv2dLayer(params_, "e4", 2 * b, 2 * lc, 3, 1, 1, rng);

    d1_ = Conv2dLayer(params_, "d1", lc, 2 * b, 3, 1, 1, rng);
    dg1_ = GroupNormLayer(params_, "dg1", 2 * b, 4);
    d2_ = Conv2dLayer(params_, "d2", 2 * b, b, 3, 1, 1, rng);
    dg2_ = GroupNormLayer(params_, "dg2", b, 4);
    d3_ = Conv2dLayer(params_, "d3", b, b, 3, 1, 1, rng);
    dg3_ = GroupNormLayer(params_, "dg3", b, 4);
    d4_ = Conv2dLayer(params_, "d4", b, 1, 3, 1, 1, rng);
}

Vae::EncodeOut Vae::encode(const Tensor& x) const {
    Tensor h = silu(eg1_.forward(e1_.forward(x)));
    h = silu(eg2_.forward(e2_.forward(h)));
    h = silu(eg3_.forward(e3_.forward(h)));
    h = e4_.forward(h);
    // Split 2*lc channels into mean and logvar halves.
    size_t lc = cfg_.latent_channels;
    size_t side = latent_side();
    Tensor tok = nchw_to_tokens(h);  // (side*side, 2*lc)
    EncodeOut out;
    out.mean = tokens_to_nchw(narrow_cols(tok, 0, lc), 1, lc, side, side);
    out.logvar = tokens_to_nchw(narrow_cols(tok, lc, lc), 1, lc, side, side);
    return out;
}

Tensor Vae::decode(const Tensor& z) const {
    Tensor h = silu(dg1_.forward(d1_.forward(z)));
    h = upsample_nearest2(h);
    h = silu(dg2_.forward(d2_.forward(h)));
    h = upsample_nearest2(h);
    h = silu(dg3_.forward(d3_.forward(h)));
    return sigmoid(d4_.forward(h));
}

Tensor Vae::reparameterize(const EncodeOut& e, Rng& rng) const {
    std::vector<double> eps(e.mean.size());
    for (double& v : eps) v = rng.normal();
    Tensor eps_t = Tensor::from(e.mean.shape(), std::move(eps));
    return add(e.mean, mul(exp(scale(e.logvar, 0.5)), eps_t));
}

void Vae::save(CheckpointWriter& w, const std::string& prefix) const {
    params_.save(w, prefix);
    w.set_meta(prefix + "config",
               nlohmann::json{{"image_size", cfg_.image_size},
                              {"base", cfg_.base},
                              {"latent_channels", cfg_.latent_channels}});
}

Vae Vae::load(const Checkpoint& c, const std::string& prefix) {
    if (!c.meta().contains(prefix + "config")) {
        throw FormatError("checkpoint lacks vae meta under '" + prefix + "'");
    }
    const auto& jc = c.meta().at(prefix + "config");
    VaeConfig cfg;
    cfg.image_size = jc.at("image_size").get<size_t>();
    cfg.base = jc.at("base").get<size_t>();
    cfg.latent_channels = jc.at("latent_channels").get<size_t>();
    Rng rng(0);  // weights are overwritten by load below
    Vae vae(cfg, rng);
    vae.params_.load(c, prefix);
    return vae;
}

namespace {

// KL(q(z|x) || N(0,1)) summed over latent elements:
// 0.5 * mean(mean^2 + exp(logvar) - 1 - logvar), per latent element so the
// weight trades off against the per-pixel reconstruction mean on the same
// footing regardless of latent size.
Tensor kl_divergence(const Vae::EncodeOut& e) {
    Tensor t = sub(add(mul(e.mean, e.mean), ops::exp(e.logvar)), e.logvar);
    double n = static_cast<double>(e.mean.size());
    return scale(add_const(sum(t), -n), 0.5 / n);
}

}  // namespace

VaeTrainStats train_vae(Vae& vae, const Manifest& m, ImageStore& store,
                        const VaeTrainConfig& cfg) {
    std::vector<const ImageRecord*> train;
    for (const auto& rec : m.records) {
        if (rec.split == Split::train) train.push_back(&rec);
    }
    if (train.empty()) throw TrainingError("train_vae: no train records");
    if (cfg.batch == 0) throw ConfigError("train_vae: batch must be > 0");

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    AdamW opt(vae.params().tensors(), opt_cfg);

    VaeTrainStats stats;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng = Rng(cfg.seed).derive(epoch);
        std::vector<size_t> order(train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.index(i)]);
        }
        double loss_sum = 0.0;
        size_t batches = 0;
        for (size_t off = 0; off < order.size(); off += cfg.batch) {
            size_t n = std::min(cfg.batch, order.size() - off);
            Tensor total;
            for (size_t j = 0; j < n; ++j) {
                const ImageRecord& rec = *train[order[off + j]];
                Tensor x = image_to_tensor(store.get(m, rec));
                Vae::EncodeOut e = vae.encode(x);
                Tensor z = vae.reparameterize(e, rng);
                Tensor loss = add(mse(vae.decode(z), x),
                                  scale(kl_divergence(e), cfg.kl_weight));
                total = j == 0 ? loss : add(total, loss);
            }
            Tensor batch_loss = scale(total, 1.0 / static_cast<double>(n));
            for (auto& t : vae.params().tensors()) t.zero_grad();
            backward(batch_loss);
            opt.step();
            loss_sum += batch_loss.item();
            ++batches;
        }
        stats.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    }

    // Post-training pass: reconstruction quality and the latent scale that
    // whitens latent means for the diffusion stage.
    NoGradGuard ng;
    double mse_sum = 0.0;
    double lat_sum = 0.0, lat_sq = 0.0;
    size_t lat_n = 0;
    // Strided sample so every class block contributes even though the
    // manifest is grouped by class.
    size_t sample = std::min<size_t>(train.size(), 256);
    size_t stride = train.size() / sample;
    for (size_t i = 0; i < sample; ++i) {
        Tensor x = image_to_tensor(store.get(m, *train[i * stride]));
        Vae::EncodeOut e = vae.encode(x);
        mse_sum += mse(vae.decode(e.mean), x).item();
        for (double v : e.mean.value()) {
            lat_sum += v;
            lat_sq += v * v;
            ++lat_n;
        }
    }
    stats.recon_mse = mse_sum / static_cast<double>(sample);
    double mean = lat_sum / static_cast<double>(lat_n);
    double var = lat_sq / static_cast<double>(lat_n) - mean * mean;
    double sd = std::sqrt(std::max(var, 0.0));
    // Degenerate latents (all-equal) keep scale 1 rather than exploding.
    stats.latent_scale = sd > 1e-6 ? 1.0 / sd : 1.0;
    return stats;
}

}  // namespace diffaug
