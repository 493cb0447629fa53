#include "diffaug/verifier.hpp"

#include <algorithm>
#include <set>

#include "diffaug/errors.hpp"
#include "diffaug/metrics.hpp"
#include "diffaug/ops.hpp"
#include "diffaug/optim.hpp"

namespace diffaug {

using namespace ops;

Verifier::Verifier(VerifierConfig cfg, std::vector<std::string> vocab_terms,
                   uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab_terms)) {
    if (cfg_.image_size % 8 != 0 || cfg_.image_size < 8) {
        throw ConfigError("Verifier: image_size must be a multiple of 8");
    }
    for (size_t i = 0; i < vocab_.size(); ++i) {
        if (!term_to_slot_.emplace(vocab_[i], i + 1).second) {
            throw ContractError("Verifier: duplicate vocabulary term '" +
                                vocab_[i] + "'");
        }
    }
    size_t side = cfg_.image_size / 8;
    size_t flat = 32 * side * side;

    Rng rng(seed);
    c1_ = Conv2dLayer(params_, "c1", 1, 8, 3, 2, 1, rng);
    g1_ = GroupNormLayer(params_, "g1", 8, 4);
    c2_ = Conv2dLayer(params_, "c2", 8, 16, 3, 2, 1, rng);
    g2_ = GroupNormLayer(params_, "g2", 16, 4);
    c3_ = Conv2dLayer(params_, "c3", 16, 32, 3, 2, 1, rng);
    g3_ = GroupNormLayer(params_, "g3", 32, 4);
    img_fc_ = Linear(params_, "img_fc", flat, 64, rng);
    txt_fc_ = Linear(params_, "txt_fc", vocab_.size() + 1, 32, rng);
    joint_fc_ = Linear(params_, "joint_fc", 96, 48, rng);
    out_fc_ = Linear(params_, "out_fc", 48, 1, rng);
}

Tensor Verifier::prompt_bag(const StructuredPrompt& prompt) const {
    std::vector<double> bag(vocab_.size() + 1, 0.0);
    std::vector<std::string> terms;
    terms.push_back(prompt.modality);
    for (const auto& f : prompt.findings) terms.push_back(f);
    if (prompt.severity) terms.push_back(*prompt.severity);
    for (const auto& t : terms) {
        auto it = term_to_slot_.find(t);
        bag[it == term_to_slot_.end() ? 0 : it->second] = 1.0;
    }
    return Tensor::from({1, vocab_.size() + 1}, std::move(bag));
}

Tensor Verifier::score_logit(const Tensor& x,
                             const StructuredPrompt& prompt) const {
    Tensor h = silu(g1_.forward(c1_.forward(x)));
    h = silu(g2_.forward(c2_.forward(h)));
    h = silu(g3_.forward(c3_.forward(h)));
    Tensor flat = reshape(h, {1, h.size()});
    Tensor img_feat = silu(img_fc_.forward(flat));
    Tensor txt_feat = silu(txt_fc_.forward(prompt_bag(prompt)));
    Tensor joint = silu(joint_fc_.forward(concat_cols({img_feat, txt_feat})));
    return out_fc_.forward(joint);
}

double Verifier::score(const Image& img, const StructuredPrompt& prompt) const {
    NoGradGuard ng;
    return sigmoid(score_logit(image_to_tensor(img), prompt)).item();
}

void Verifier::save(const std::filesystem::path& path, uint64_t seed,
                    const std::string& config_hash) const {
    CheckpointWriter w;
    params_.save(w, "verifier.");
    w.set_meta("verifier.vocab", vocab_);
    w.set_meta("verifier.config",
               nlohmann::json{{"image_size", cfg_.image_size},
                              {"epochs", cfg_.epochs},
                              {"batch", cfg_.batch},
                              {"lr", cfg_.lr},
                              {"weight_decay", cfg_.weight_decay}});
    w.write(path, seed, config_hash);
}

Verifier Verifier::load(const std::filesystem::path& path) {
    Checkpoint c = Checkpoint::load(path);
    if (!c.meta().contains("verifier.vocab") ||
        !c.meta().contains("verifier.config")) {
        throw FormatError(path.string() + ": not a verifier checkpoint");
    }
    const auto& jc = c.meta().at("verifier.config");
    VerifierConfig cfg;
    cfg.image_size = jc.at("image_size").get<size_t>();
    cfg.epochs = jc.at("epochs").get<size_t>();
    cfg.batch = jc.at("batch").get<size_t>();
    cfg.lr = jc.at("lr").get<double>();
    cfg.weight_decay = jc.at("weight_decay").get<double>();
    auto vocab = c.meta().at("verifier.vocab").get<std::vector<std::string>>();
    Verifier v(cfg, std::move(vocab), 0);
    v.params_.load(c, "verifier.");
    return v;
}

namespace {

// Mismatched prompt for a record: a uniformly drawn record of a different
// class. Requires at least two classes among recs.
const ImageRecord* pick_mismatch(const std::vector<const ImageRecord*>& recs,
                                 const std::string& cls, Rng& rng) {
    for (size_t tries = 0; tries < 1000; ++tries) {
        const ImageRecord* cand = recs[rng.index(recs.size())];
        if (cand->class_label != cls) return cand;
    }
    throw TrainingError("verifier: could not find a mismatched prompt");
}

}  // namespace

VerifierTrainStats train_verifier(Verifier& v, const Manifest& m,
                                  ImageStore& store, uint64_t seed) {
    const VerifierConfig& cfg = v.config();
    std::vector<const ImageRecord*> train;
    std::set<std::string> classes;
    for (const auto& rec : m.records) {
        if (rec.split == Split::train) {
            train.push_back(&rec);
            classes.insert(rec.class_label);
        }
    }
    if (train.empty()) throw TrainingError("train_verifier: no train records");
    if (classes.size() < 2) {
        throw TrainingError("train_verifier: need at least two train classes");
    }

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    AdamW opt(v.params().tensors(), opt_cfg);

    VerifierTrainStats stats;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng = Rng(seed).derive(epoch);
        // Pair stream: each record appears once matched (target 1) and once
        // with a swapped-in prompt (target 0), then the stream is shuffled.
        struct Pair {
            const ImageRecord* rec;
            const ImageRecord* prompt_from;
            double target;
        };
        std::vector<Pair> pairs;
        pairs.reserve(2 * train.size());
        for (const auto* rec : train) {
            pairs.push_back({rec, rec, 1.0});
            pairs.push_back(
                {rec, pick_mismatch(train, rec->class_label, rng), 0.0});
        }
        for (size_t i = pairs.size(); i > 1; --i) {
            std::swap(pairs[i - 1], pairs[rng.index(i)]);
        }
        double loss_sum = 0.0;
        size_t batches = 0;
        for (size_t off = 0; off < pairs.size(); off += cfg.batch) {
            size_t n = std::min(cfg.batch, pairs.size() - off);
            std::vector<Tensor> logits;
            std::vector<double> targets;
            for (size_t j = 0; j < n; ++j) {
                const Pair& p = pairs[off + j];
                logits.push_back(v.score_logit(
                    image_to_tensor(store.get(m, *p.rec)),
                    p.prompt_from->prompt));
                targets.push_back(p.target);
            }
            Tensor loss = bce_with_logits(
                n == 1 ? reshape(logits[0], {1})
                       : reshape(concat_rows(logits), {n}),
                targets);
            opt.zero_grad();
            backward(loss);
            opt.step();
            loss_sum += loss.item();
            ++batches;
        }
        stats.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    }
    return stats;
}

double verifier_auroc(const Verifier& v, const Manifest& m, ImageStore& store,
                      Split split, uint64_t seed) {
    std::vector<const ImageRecord*> recs;
    std::set<std::string> classes;
    for (const auto& rec : m.records) {
        if (rec.split == split) {
            recs.push_back(&rec);
            classes.insert(rec.class_label);
        }
    }
    if (recs.empty()) throw ContractError("verifier_auroc: empty split");
    if (classes.size() < 2) {
        throw ContractError("verifier_auroc: need at least two classes");
    }
    Rng rng(seed);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto* rec : recs) {
        const Image& img = store.get(m, *rec);
        scores.push_back(v.score(img, rec->prompt));
        labels.push_back(1);
        const ImageRecord* neg = pick_mismatch(recs, rec->class_label, rng);
        scores.push_back(v.score(img, neg->prompt));
        labels.push_back(0);
    }
    return auroc(scores, labels);
}

}  // namespace diffaug
