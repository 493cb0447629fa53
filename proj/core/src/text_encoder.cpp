#include "diffaug/text_encoder.hpp"

#include "diffaug/errors.hpp"
#include "diffaug/ops.hpp"

namespace diffaug {

using namespace ops;

namespace {

constexpr const char* kNullToken = "<null>";
constexpr const char* kUnkToken = "<unk>";

}  // namespace

TextEncoder::TextEncoder(const std::vector<std::string>& terms,
                         TextEncoderConfig cfg, Rng& rng)
    : cfg_(cfg) {
    vocab_.push_back(kNullToken);
    vocab_.push_back(kUnkToken);
    for (const auto& t : terms) vocab_.push_back(t);
    for (size_t i = 0; i < vocab_.size(); ++i) {
        if (!term_to_id_.emplace(vocab_[i], i).second) {
            throw ContractError("TextEncoder: duplicate vocabulary term '" +
                                vocab_[i] + "'");
        }
    }
    tok_table_ =
        params_.add("tok", {vocab_.size(), cfg_.d_model}, 0.02, rng);
    pos_table_ =
        params_.add("pos", {cfg_.max_tokens, cfg_.d_model}, 0.01, rng);
    block_ = TransformerBlock(params_, "block", cfg_.d_model, cfg_.heads,
                              cfg_.mlp_ratio, rng);
    ln_f_ = LayerNormLayer(params_, "ln_f", cfg_.d_model);
}

std::vector<size_t> TextEncoder::tokenize(const StructuredPrompt& p) const {
    std::vector<std::string> terms;
    terms.push_back(p.modality);
    for (const auto& f : p.findings) terms.push_back(f);
    if (p.severity) terms.push_back(*p.severity);

    std::vector<size_t> ids;
    for (const auto& t : terms) {
        if (ids.size() == cfg_.max_tokens) break;
        auto it = term_to_id_.find(t);
        ids.push_back(it == term_to_id_.end() ? 1 : it->second);
    }
    return ids;
}

Tensor TextEncoder::encode_ids(const std::vector<size_t>& ids) const {
    Tensor x = embedding(tok_table_, ids);
    x = add(x, narrow_rows(pos_table_, 0, ids.size()));
    x = block_.forward(x);
    return ln_f_.forward(x);
}

Tensor TextEncoder::encode(const StructuredPrompt& prompt) const {
    return encode_ids(tokenize(prompt));
}

Tensor TextEncoder::encode_null() const { return encode_ids({0}); }

void TextEncoder::save(CheckpointWriter& w, const std::string& prefix) const {
    params_.save(w, prefix);
    w.set_meta(prefix + "vocab", vocab_);
    w.set_meta(prefix + "config",
               nlohmann::json{{"d_model", cfg_.d_model},
                              {"max_tokens", cfg_.max_tokens},
                              {"heads", cfg_.heads},
                              {"mlp_ratio", cfg_.mlp_ratio}});
}

TextEncoder TextEncoder::load(const Checkpoint& c, const std::string& prefix) {
    const auto& meta = c.meta();
    if (!meta.contains(prefix + "vocab") || !meta.contains(prefix + "config")) {
        throw FormatError("checkpoint lacks text encoder meta under '" +
                          prefix + "'");
    }
    auto vocab = meta.at(prefix + "vocab").get<std::vector<std::string>>();
    if (vocab.size() < 2 || vocab[0] != kNullToken || vocab[1] != kUnkToken) {
        throw FormatError("checkpoint text vocabulary is malformed");
    }
    const auto& jc = meta.at(prefix + "config");
    TextEncoderConfig cfg;
    cfg.d_model = jc.at("d_model").get<size_t>();
    cfg.max_tokens = jc.at("max_tokens").get<size_t>();
    cfg.heads = jc.at("heads").get<size_t>();
    cfg.mlp_ratio = jc.at("mlp_ratio").get<size_t>();

    std::vector<std::string> terms(vocab.begin() + 2, vocab.end());
    Rng rng(0);  // weights are overwritten by load below
    TextEncoder enc(terms, cfg, rng);
    enc.params_.load(c, prefix);
    return enc;
}

}  // namespace diffaug
