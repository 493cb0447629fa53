#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "diffaug/corpus.hpp"
#include "diffaug/image_io.hpp"
#include "diffaug/schedule.hpp"
#include "diffaug/text_encoder.hpp"
#include "diffaug/unet.hpp"
#include "diffaug/vae.hpp"

namespace diffaug {

struct DiffusionConfig {
    size_t T = 200;
    std::string schedule = "linear";
    double guidance = 3.0;          // default classifier-free guidance weight
    double uncond_drop_prob = 0.1;  // prompt-drop rate during training
    size_t sample_steps = 0;        // 0 means the full T-step chain
    size_t epochs = 5;
    size_t batch = 8;
    double lr = 5e-5;
    double weight_decay = 1e-2;
};

// Noise predictor abstraction for loss-level tests: maps (z_t, t, prompt)
// to predicted noise of the same length. A null prompt means the
// unconditional branch.
using DenoiserFn = std::function<std::vector<double>(
    const std::vector<double>&, size_t, const StructuredPrompt*)>;

// One Monte Carlo draw of the denoising training objective:
// t ~ U{1..T}, eps ~ N(0,I), prompt kept with probability
// 1 - uncond_drop_prob, loss = mean((denoiser(z_t,t,.) - eps)^2).
// Draw order from rng: t, then eps elementwise, then the drop decision.
double training_loss(const NoiseSchedule& s, const DenoiserFn& denoiser,
                     const std::vector<double>& z0,
                     const StructuredPrompt& prompt, double uncond_drop_prob,
                     Rng& rng);

// Full text-to-image stack: VAE, latent noise predictor, text encoder,
// schedule and the latent whitening scale, saved and loaded as one
// checkpoint file.
class GenerativeStack {
 public:
    GenerativeStack() = default;
    // Takes a (typically pretrained) VAE; the denoiser and text encoder are
    // freshly initialized from seed.
    GenerativeStack(Vae vae, UnetConfig ucfg, TextEncoderConfig tcfg,
                    DiffusionConfig dcfg,
                    const std::vector<std::string>& vocab_terms,
                    double latent_scale, uint64_t seed);

    Vae& vae() { return vae_; }
    const Vae& vae() const { return vae_; }
    Unet& unet() { return unet_; }
    const Unet& unet() const { return unet_; }
    TextEncoder& text() { return text_; }
    const TextEncoder& text() const { return text_; }
    const NoiseSchedule& schedule() const { return sched_; }
    const DiffusionConfig& config() const { return cfg_; }
    double latent_scale() const { return latent_scale_; }

    // Predicted noise for a whitened latent. Prompt null = unconditional.
    // No gradients are recorded.
    std::vector<double> predict_noise(const std::vector<double>& z, size_t t,
                                      const StructuredPrompt* prompt) const;

    // Ancestral sampling in latent space with classifier-free guidance
    // weight w (w=0 unconditional, w=1 conditional, otherwise
    // u + w (c - u)). Uses config().sample_steps. Draw order from rng: the
    // initial latent, then one noise vector after each non-final step.
    std::vector<double> sample_latent(const StructuredPrompt& prompt, double w,
                                      Rng& rng) const;

    // sample_latent, un-whitened and decoded to a [0,1] image.
    Image sample(const StructuredPrompt& prompt, double w, Rng& rng) const;

    void save(const std::filesystem::path& path, uint64_t seed,
              const std::string& config_hash) const;
    static GenerativeStack load(const std::filesystem::path& path);

 private:
    Vae vae_;
    Unet unet_;
    TextEncoder text_;
    NoiseSchedule sched_;
    DiffusionConfig cfg_;
    double latent_scale_ = 1.0;
};

struct DiffusionTrainStats {
    std::vector<double> epoch_loss;
    std::vector<std::filesystem::path> checkpoints;  // one per epoch + init
    std::filesystem::path final_checkpoint;
};

// Trains the noise predictor and text encoder jointly on the train split
// (the VAE stays frozen; latents are precomputed means times the latent
// scale). Writes a checkpoint before training and after every epoch into
// out_dir; a non-finite loss or gradient aborts with TrainingError citing
// the last good checkpoint. Deterministic for fixed config and seed.
DiffusionTrainStats train_diffusion(GenerativeStack& stack, const Manifest& m,
                                    ImageStore& store,
                                    const std::filesystem::path& out_dir,
                                    uint64_t seed,
                                    const std::string& config_hash);

}  // namespace diffaug
