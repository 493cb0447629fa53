#pragma once

#include <map>
#include <string>
#include <vector>

#include "diffaug/checkpoint.hpp"
#include "diffaug/lexicon.hpp"
#include "diffaug/nn.hpp"
#include "diffaug/rng.hpp"
#include "diffaug/tensor.hpp"

namespace diffaug {

struct TextEncoderConfig {
    size_t d_model = 32;
    size_t max_tokens = 8;
    size_t heads = 2;
    size_t mlp_ratio = 2;
};

// Maps structured prompts to token-context matrices for cross-attention.
// One token per canonical term in render order (modality, findings,
// severity), through a learned embedding, learned positions, one
// transformer block and a final layer norm. Token id 0 is the learned
// null-prompt token used for unconditional passes; id 1 covers terms
// outside the vocabulary.
class TextEncoder {
 public:
    TextEncoder() = default;
    // `terms` are the canonical vocabulary terms (specials excluded, order
    // preserved; pass a sorted list for a stable vocabulary).
    TextEncoder(const std::vector<std::string>& terms, TextEncoderConfig cfg,
                Rng& rng);

    // Token ids in render order, truncated to max_tokens.
    std::vector<size_t> tokenize(const StructuredPrompt& prompt) const;

    // (n, d_model) context, n >= 1. Pure function of weights and prompt.
    Tensor encode(const StructuredPrompt& prompt) const;
    // (1, d_model) context of the null token.
    Tensor encode_null() const;

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const TextEncoderConfig& config() const { return cfg_; }
    const std::vector<std::string>& vocab() const { return vocab_; }

    // Persists weights under prefix and the vocabulary/config as meta keys
    // prefix+"vocab", prefix+"config".
    void save(CheckpointWriter& w, const std::string& prefix) const;
    static TextEncoder load(const Checkpoint& c, const std::string& prefix);

 private:
    Tensor encode_ids(const std::vector<size_t>& ids) const;

    TextEncoderConfig cfg_;
    std::vector<std::string> vocab_;  // includes <null>, <unk>
    std::map<std::string, size_t> term_to_id_;
    ParamSet params_;
    Tensor tok_table_;
    Tensor pos_table_;
    TransformerBlock block_;
    LayerNormLayer ln_f_;
};

}  // namespace diffaug
