#pragma once

#include <filesystem>

#include "diffaug/checkpoint.hpp"
#include "diffaug/corpus.hpp"
#include "diffaug/nn.hpp"
#include "diffaug/rng.hpp"
#include "diffaug/tensor.hpp"

namespace diffaug {

struct VaeConfig {
    size_t image_size = 32;  // must be divisible by 4
    size_t base = 16;
    size_t latent_channels = 4;
};

// Convolutional variational autoencoder mapping (1,1,s,s) images in [0,1]
// to Gaussian latents (1,latent_channels,s/4,s/4) and back through a
// sigmoid decoder.
class Vae {
 public:
    struct EncodeOut {
        Tensor mean;
        Tensor logvar;
    };

    Vae() = default;
    Vae(VaeConfig cfg, Rng& rng);

    EncodeOut encode(const Tensor& x) const;
    Tensor decode(const Tensor& z) const;
    // z = mean + exp(logvar/2) * eps with eps drawn from rng (one normal
    // per latent element, in index order).
    Tensor reparameterize(const EncodeOut& e, Rng& rng) const;

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const VaeConfig& config() const { return cfg_; }
    size_t latent_side() const { return cfg_.image_size / 4; }
    size_t latent_size() const {
        return cfg_.latent_channels * latent_side() * latent_side();
    }

    void save(CheckpointWriter& w, const std::string& prefix) const;
    static Vae load(const Checkpoint& c, const std::string& prefix);

 private:
    VaeConfig cfg_;
    ParamSet params_;
    Conv2dLayer e1_, e2_, e3_, e4_;
    GroupNormLayer eg1_, eg2_, eg3_;
    Conv2dLayer d1_, d2_, d3_, d4_;
    GroupNormLayer dg1_, dg2_, dg3_;
};

struct VaeTrainConfig {
    size_t epochs = 4;
    size_t batch = 8;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double kl_weight = 1e-3;
    uint64_t seed = 0;
};

struct VaeTrainStats {
    std::vector<double> epoch_loss;
    double recon_mse = 0.0;    // post-training, decoding the latent mean
    double latent_scale = 1.0;  // 1 / stddev of latent mean elements
};

// Trains on the train split of the manifest (loss = pixel MSE +
// kl_weight * KL summed over latent elements) and measures the latent
// scale used to whiten latents for the diffusion stage. Deterministic for
// a fixed config and seed.
VaeTrainStats train_vae(Vae& vae, const Manifest& m, ImageStore& store,
                        const VaeTrainConfig& cfg);

}  // namespace diffaug
