#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "diffaug/corpus.hpp"
#include "diffaug/image_io.hpp"
#include "diffaug/nn.hpp"
#include "diffaug/tensor.hpp"

namespace diffaug {

struct ClassifierConfig {
    size_t image_size = 32;
    size_t patch = 4;  // image_size must be divisible by patch
    size_t embed = 64;
    size_t blocks = 4;
    size_t heads = 4;
    size_t mlp_ratio = 2;
    size_t epochs = 12;
    size_t batch = 16;
    double lr = 1e-3;
    double weight_decay = 1e-2;
    size_t patience = 3;  // epochs without val improvement before stopping
};

// Patch-token transformer classifier. Patches are embedded with a strided
// convolution, run through pre-norm transformer blocks, fused into a
// single vector by attention from one learned query token, and projected
// to class logits. No class weighting is applied; imbalance is handled
// upstream by the data augmentation.
class Classifier {
 public:
    Classifier() = default;
    // classes must be non-empty, sorted and unique; they fix the logit
    // order and the prediction column order.
    Classifier(ClassifierConfig cfg, std::vector<std::string> classes,
               uint64_t seed);

    Tensor logits(const Tensor& x) const;  // x: (1,1,s,s) -> (1,K)
    // Softmax probabilities in class order; records no gradients.
    std::vector<double> predict(const Image& img) const;

    const std::vector<std::string>& classes() const { return classes_; }
    size_t class_index(const std::string& label) const;

    ParamSet& params() { return params_; }
    const ClassifierConfig& config() const { return cfg_; }

    void save(const std::filesystem::path& path, uint64_t seed,
              const std::string& config_hash) const;
    static Classifier load(const std::filesystem::path& path);

 private:
    ClassifierConfig cfg_;
    std::vector<std::string> classes_;
    ParamSet params_;
    Conv2dLayer patch_embed_;
    Tensor pos_;
    std::vector<TransformerBlock> blocks_;
    LayerNormLayer ln_f_;
    Tensor fuse_query_;
    MultiHeadAttention fuse_;
    Linear head_;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;  // empty when the manifest has no val split
    size_t best_epoch = 0;         // 1-based; 0 when no val split
    bool early_stopped = false;
};

// Trains on the train split with cross entropy. When a val split exists,
// tracks val loss each epoch, stops after `patience` epochs without
// improvement and restores the best weights. Fewer than two distinct
// train classes is a TrainingError. Deterministic for fixed config and
// seed; only train and val images are ever read.
TrainHistory train_classifier(Classifier& clf, const Manifest& m,
                              ImageStore& store, uint64_t seed);

// Writes per-record probabilities for one split as CSV with header
// path,true_class,p_<class>... in class order.
void write_predictions(const std::filesystem::path& csv, const Classifier& clf,
                       const Manifest& m, ImageStore& store, Split split);

}  // namespace diffaug
