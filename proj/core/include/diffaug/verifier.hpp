#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diffaug/corpus.hpp"
#include "diffaug/image_io.hpp"
#include "diffaug/nn.hpp"

namespace diffaug {

struct VerifierConfig {
    size_t image_size = 32;  // must be divisible by 8
    size_t epochs = 6;
    size_t batch = 16;
    double lr = 1e-3;
    double weight_decay = 1e-4;
};

// Prompt-image consistency scorer: a small conv trunk embeds the image, a
// bag-of-terms projection embeds the prompt, and a joint head scores the
// pair in (0,1). Trained with matched pairs as positives and prompts
// swapped in from other classes as negatives; used to audit that
// synthesized images actually depict their prompt.
class Verifier {
 public:
    Verifier() = default;
    Verifier(VerifierConfig cfg, std::vector<std::string> vocab_terms,
             uint64_t seed);

    double score(const Image& img, const StructuredPrompt& prompt) const;
    // Differentiable logit for training; x is (1,1,s,s).
    Tensor score_logit(const Tensor& x, const StructuredPrompt& prompt) const;

    ParamSet& params() { return params_; }
    const VerifierConfig& config() const { return cfg_; }
    const std::vector<std::string>& vocab() const { return vocab_; }

    void save(const std::filesystem::path& path, uint64_t seed,
              const std::string& config_hash) const;
    static Verifier load(const std::filesystem::path& path);

 private:
    Tensor prompt_bag(const StructuredPrompt& prompt) const;

    VerifierConfig cfg_;
    std::vector<std::string> vocab_;  // canonical terms; slot 0 is unknown
    std::map<std::string, size_t> term_to_slot_;
    ParamSet params_;
    Conv2dLayer c1_, c2_, c3_;
    GroupNormLayer g1_, g2_, g3_;
    Linear img_fc_, txt_fc_, joint_fc_, out_fc_;
};

struct VerifierTrainStats {
    std::vector<double> epoch_loss;
};

// One positive and one mismatched-prompt negative per train record.
// Fewer than two distinct train classes is a TrainingError.
VerifierTrainStats train_verifier(Verifier& v, const Manifest& m,
                                  ImageStore& store, uint64_t seed);

// AUROC of the verifier separating matched from mismatched prompts on one
// split (same negative construction as training, derived from seed).
double verifier_auroc(const Verifier& v, const Manifest& m, ImageStore& store,
                      Split split, uint64_t seed);

}  // namespace diffaug
