#include "diffaug/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "diffaug/errors.hpp"
#include "diffaug/ops.hpp"
#include "diffaug/optim.hpp"

namespace diffaug {

using namespace ops;

double training_loss(const NoiseSchedule& s, const DenoiserFn& denoiser,
                     const std::vector<double>& z0,
                     const StructuredPrompt& prompt, double uncond_drop_prob,
                     Rng& rng) {
    if (uncond_drop_prob < 0.0 || uncond_drop_prob > 1.0) {
        throw ConfigError("training_loss: uncond_drop_prob outside [0,1]");
    }
    size_t t = 1 + rng.index(s.T);
    std::vector<double> eps(z0.size());
    for (double& v : eps) v = rng.normal();
    bool drop = rng.uniform() < uncond_drop_prob;

    std::vector<double> z_t = q_sample(s, z0, t, eps);
    std::vector<double> pred = denoiser(z_t, t, drop ? nullptr : &prompt);
    if (pred.size() != eps.size()) {
        throw DimensionError("training_loss: denoiser returned " +
                             std::to_string(pred.size()) + " values, expected " +
                             std::to_string(eps.size()));
    }
    double acc = 0.0;
    for (size_t i = 0; i < eps.size(); ++i) {
        double d = pred[i] - eps[i];
        acc += d * d;
    }
    return acc / static_cast<double>(eps.size());
}

GenerativeStack::GenerativeStack(Vae vae, UnetConfig ucfg,
                                 TextEncoderConfig tcfg, DiffusionConfig dcfg,
                                 const std::vector<std::string>& vocab_terms,
                                 double latent_scale, uint64_t seed)
    : vae_(std::move(vae)), cfg_(dcfg), latent_scale_(latent_scale) {
    if (ucfg.latent_size != vae_.latent_side() ||
        ucfg.in_channels != vae_.config().latent_channels) {
        throw ConfigError("GenerativeStack: unet latent geometry does not "
                          "match the vae");
    }
    if (tcfg.d_model != ucfg.d_text) {
        throw ConfigError("GenerativeStack: text width does not match unet "
                          "d_text");
    }
    Rng rng(seed);
    unet_ = Unet(ucfg, rng);
    text_ = TextEncoder(vocab_terms, tcfg, rng);
    sched_ = make_schedule(cfg_.T, cfg_.schedule);
}

// For whitened latents the best linear estimate of eps from z_t alone is
// sqrt(1 - alpha_bar_t) * z_t; the network only models the residual, so
// its zero-initialized output already gives a sane predictor and training
// capacity is spent on the image-dependent part.
std::vector<double> GenerativeStack::predict_noise(
    const std::vector<double>& z, size_t t,
    const StructuredPrompt* prompt) const {
    NoGradGuard ng;
    size_t side = unet_.config().latent_size;
    size_t ch = unet_.config().in_channels;
    Tensor zt = Tensor::from({1, ch, side, side}, z);
    Tensor ctx = prompt ? text_.encode(*prompt) : text_.encode_null();
    std::vector<double> out =
        unet_.forward(zt, static_cast<double>(t), ctx).value();
    double base = std::sqrt(1.0 - sched_.alpha_bar_at(t));
    for (size_t i = 0; i < out.size(); ++i) out[i] += base * z[i];
    return out;
}

std::vector<double> GenerativeStack::sample_latent(
    const StructuredPrompt& prompt, double w, Rng& rng) const {
    NoGradGuard ng;
    size_t side = unet_.config().latent_size;
    size_t ch = unet_.config().in_channels;
    size_t n = ch * side * side;

    // Step list: the full chain, or a respaced subsequence that preserves
    // the marginal alpha_bar at each kept timestep.
    std::vector<size_t> taus;
    std::vector<double> betas, alpha_bars;
    size_t steps = cfg_.sample_steps;
    if (steps == 0 || steps == sched_.T) {
        taus.resize(sched_.T);
        for (size_t i = 0; i < sched_.T; ++i) taus[i] = i + 1;
        betas = sched_.beta;
        alpha_bars = sched_.alpha_bar;
    } else {
        RespacedSchedule r = respace_schedule(sched_, steps);
        taus = r.taus;
        betas = r.beta;
        alpha_bars = r.alpha_bar;
    }

    Tensor cond, uncond;
    if (w != 0.0) cond = text_.encode(prompt);
    if (w != 1.0) uncond = text_.encode_null();

    std::vector<double> z(n);
    for (double& v : z) v = rng.normal();

    for (size_t k = taus.size(); k-- > 0;) {
        size_t t = taus[k];
        double beta = betas[k];
        double ab = alpha_bars[k];
        Tensor zt = Tensor::from({1, ch, side, side}, z);
        std::vector<double> eps_hat;
        if (w == 1.0) {
            eps_hat = unet_.forward(zt, static_cast<double>(t), cond).value();
        } else if (w == 0.0) {
            eps_hat = unet_.forward(zt, static_cast<double>(t), uncond).value();
        } else {
            std::vector<double> eu =
                unet_.forward(zt, static_cast<double>(t), uncond).value();
            std::vector<double> ec =
                unet_.forward(zt, static_cast<double>(t), cond).value();
            eps_hat.resize(n);
            for (size_t i = 0; i < n; ++i) {
                eps_hat[i] = eu[i] + w * (ec[i] - eu[i]);
            }
        }
        // The linear baseline is prompt-independent, so it is added after
        // the guidance combination.
        double base = std::sqrt(1.0 - ab);
        double coef = beta / std::sqrt(1.0 - ab);
        double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
        for (size_t i = 0; i < n; ++i) {
            z[i] = (z[i] - coef * (eps_hat[i] + base * z[i])) * inv_sqrt_alpha;
        }
        if (k > 0) {
            double sd = std::sqrt(beta);
            for (size_t i = 0; i < n; ++i) z[i] += sd * rng.normal();
        }
    }
    return z;
}

Image GenerativeStack::sample(const StructuredPrompt& prompt, double w,
                              Rng& rng) const {
    NoGradGuard ng;
    std::vector<double> z0 = sample_latent(prompt, w, rng);
    for (double& v : z0) v /= latent_scale_;
    size_t side = unet_.config().latent_size;
    size_t ch = unet_.config().in_channels;
    Tensor z = Tensor::from({1, ch, side, side}, std::move(z0));
    return tensor_to_image(vae_.decode(z));
}

void GenerativeStack::save(const std::filesystem::path& path, uint64_t seed,
                           const std::string& config_hash) const {
    CheckpointWriter w;
    vae_.save(w, "vae.");
    unet_.save(w, "unet.");
    text_.save(w, "text.");
    w.set_meta("latent_scale", latent_scale_);
    w.set_meta("diffusion",
               nlohmann::json{{"T", cfg_.T},
                              {"schedule", cfg_.schedule},
                              {"guidance", cfg_.guidance},
                              {"uncond_drop_prob", cfg_.uncond_drop_prob},
                              {"sample_steps", cfg_.sample_steps},
                              {"epochs", cfg_.epochs},
                              {"batch", cfg_.batch},
                              {"lr", cfg_.lr},
                              {"weight_decay", cfg_.weight_decay}});
    w.write(path, seed, config_hash);
}

GenerativeStack GenerativeStack::load(const std::filesystem::path& path) {
    Checkpoint c = Checkpoint::load(path);
    GenerativeStack s;
    s.vae_ = Vae::load(c, "vae.");
    s.unet_ = Unet::load(c, "unet.");
    s.text_ = TextEncoder::load(c, "text.");
    const auto& meta = c.meta();
    if (!meta.contains("diffusion") || !meta.contains("latent_scale")) {
        throw FormatError(path.string() + ": not a generative stack "
                          "checkpoint");
    }
    s.latent_scale_ = meta.at("latent_scale").get<double>();
    const auto& jd = meta.at("diffusion");
    s.cfg_.T = jd.at("T").get<size_t>();
    s.cfg_.schedule = jd.at("schedule").get<std::string>();
    s.cfg_.guidance = jd.at("guidance").get<double>();
    s.cfg_.uncond_drop_prob = jd.at("uncond_drop_prob").get<double>();
    s.cfg_.sample_steps = jd.at("sample_steps").get<size_t>();
    s.cfg_.epochs = jd.at("epochs").get<size_t>();
    s.cfg_.batch = jd.at("batch").get<size_t>();
    s.cfg_.lr = jd.at("lr").get<double>();
    s.cfg_.weight_decay = jd.at("weight_decay").get<double>();
    s.sched_ = make_schedule(s.cfg_.T, s.cfg_.schedule);
    return s;
}

DiffusionTrainStats train_diffusion(GenerativeStack& stack, const Manifest& m,
                                    ImageStore& store,
                                    const std::filesystem::path& out_dir,
                                    uint64_t seed,
                                    const std::string& config_hash) {
    const DiffusionConfig& cfg = stack.config();
    if (cfg.batch == 0) throw ConfigError("train_diffusion: batch must be > 0");

    std::vector<const ImageRecord*> train;
    for (const auto& rec : m.records) {
        if (rec.split == Split::train) train.push_back(&rec);
    }
    if (train.empty()) throw TrainingError("train_diffusion: no train records");

    // Frozen-VAE latents, whitened once up front.
    size_t latent_n = stack.vae().latent_size();
    std::vector<std::vector<double>> latents(train.size());
    {
        NoGradGuard ng;
        for (size_t i = 0; i < train.size(); ++i) {
            Tensor x = image_to_tensor(store.get(m, *train[i]));
            latents[i] = stack.vae().encode(x).mean.value();
            for (double& v : latents[i]) v *= stack.latent_scale();
        }
    }

    std::vector<Tensor> params = stack.unet().params().tensors();
    for (auto& t : stack.text().params().tensors()) params.push_back(t);
    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    AdamW opt(params, opt_cfg);

    const NoiseSchedule& sched = stack.schedule();
    size_t side = stack.unet().config().latent_size;
    size_t ch = stack.unet().config().in_channels;

    DiffusionTrainStats stats;
    auto save_epoch = [&](size_t epoch) {
        char name[64];
        std::snprintf(name, sizeof(name), "diffusion_epoch_%03zu.ckpt", epoch);
        std::filesystem::path p = out_dir / name;
        stack.save(p, seed, config_hash);
        stats.checkpoints.push_back(p);
        return p;
    };
    std::filesystem::path last_good = save_epoch(0);

    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng = Rng(seed).derive(epoch);
        std::vector<size_t> order(train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.index(i)]);
        }
        double loss_sum = 0.0;
        size_t batches = 0;
        for (size_t off = 0; off < order.size(); off += cfg.batch) {
            size_t n = std::min(cfg.batch, order.size() - off);
            try {
                Tensor total;
                for (size_t j = 0; j < n; ++j) {
                    size_t idx = order[off + j];
                    size_t t = 1 + rng.index(sched.T);
                    std::vector<double> eps(latent_n);
                    for (double& v : eps) v = rng.normal();
                    bool drop = rng.uniform() < cfg.uncond_drop_prob;

                    std::vector<double> z_t =
                        q_sample(sched, latents[idx], t, eps);
                    // The network learns the residual left by the linear
                    // baseline in predict_noise.
                    double base = std::sqrt(1.0 - sched.alpha_bar_at(t));
                    std::vector<double> resid(latent_n);
                    for (size_t i = 0; i < latent_n; ++i) {
                        resid[i] = eps[i] - base * z_t[i];
                    }
                    Tensor zt = Tensor::from({1, ch, side, side}, z_t);
                    Tensor ctx = drop
                                     ? stack.text().encode_null()
                                     : stack.text().encode(train[idx]->prompt);
                    Tensor eps_hat =
                        stack.unet().forward(zt, static_cast<double>(t), ctx);
                    Tensor target =
                        Tensor::from({1, ch, side, side}, std::move(resid));
                    Tensor loss = mse(eps_hat, target);
                    total = j == 0 ? loss : add(total, loss);
                }
                Tensor batch_loss =
                    scale(total, 1.0 / static_cast<double>(n));
                opt.zero_grad();
                backward(batch_loss);
                opt.step();
                loss_sum += batch_loss.item();
                ++batches;
            } catch (const NumericError& e) {
                throw TrainingError(
                    "diffusion training diverged at epoch " +
                    std::to_string(epoch) + ": " + e.what() +
                    "; last good checkpoint: " + last_good.string());
            } catch (const OptimizerError& e) {
                throw TrainingError(
                    "diffusion training diverged at epoch " +
                    std::to_string(epoch) + ": " + e.what() +
                    "; last good checkpoint: " + last_good.string());
            }
        }
        stats.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
        last_good = save_epoch(epoch + 1);
    }
    stats.final_checkpoint = last_good;
    return stats;
}

}  // namespace diffaug
