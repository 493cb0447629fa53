#include "diffaug/classifier.hpp"

#include <algorithm>
#include <set>

#include "diffaug/errors.hpp"
#include "diffaug/ops.hpp"
#include "diffaug/optim.hpp"
#include "diffaug/util.hpp"

namespace diffaug {

using namespace ops;

Classifier::Classifier(ClassifierConfig cfg, std::vector<std::string> classes,
                       uint64_t seed)
    : cfg_(cfg), classes_(std::move(classes)) {
    if (classes_.empty()) throw ContractError("Classifier: no classes");
    if (!std::is_sorted(classes_.begin(), classes_.end()) ||
        std::adjacent_find(classes_.begin(), classes_.end()) !=
            classes_.end()) {
        throw ContractError("Classifier: classes must be sorted and unique");
    }
    if (cfg_.patch == 0 || cfg_.image_size % cfg_.patch != 0) {
        throw ConfigError("Classifier: image_size must be divisible by patch");
    }
    size_t tokens_side = cfg_.image_size / cfg_.patch;
    size_t tokens = tokens_side * tokens_side;

    Rng rng(seed);
    patch_embed_ = Conv2dLayer(params_, "patch", 1, cfg_.embed, cfg_.patch,
                               cfg_.patch, 0, rng);
    pos_ = params_.add("pos", {tokens, cfg_.embed}, 0.01, rng);
    for (size_t i = 0; i < cfg_.blocks; ++i) {
        blocks_.emplace_back(params_, "block" + std::to_string(i), cfg_.embed,
                             cfg_.heads, cfg_.mlp_ratio, rng);
    }
    ln_f_ = LayerNormLayer(params_, "ln_f", cfg_.embed);
    fuse_query_ = params_.add("fuse_query", {1, cfg_.embed}, 0.02, rng);
    fuse_ = MultiHeadAttention(params_, "fuse", cfg_.embed, cfg_.heads, rng);
    head_ = Linear(params_, "head", cfg_.embed, classes_.size(), rng);
}

Tensor Classifier::logits(const Tensor& x) const {
    Tensor h = patch_embed_.forward(x);
    Tensor tok = add(nchw_to_tokens(h), pos_);
    for (const auto& blk : blocks_) tok = blk.forward(tok);
    tok = ln_f_.forward(tok);
    Tensor fused = fuse_.forward(fuse_query_, tok);  // (1, embed)
    return head_.forward(fused);
}

std::vector<double> Classifier::predict(const Image& img) const {
    NoGradGuard ng;
    return softmax(logits(image_to_tensor(img))).value();
}

size_t Classifier::class_index(const std::string& label) const {
    auto it = std::lower_bound(classes_.begin(), classes_.end(), label);
    if (it == classes_.end() || *it != label) {
        throw ContractError("Classifier: unknown class '" + label + "'");
    }
    return static_cast<size_t>(it - classes_.begin());
}

void Classifier::save(const std::filesystem::path& path, uint64_t seed,
                      const std::string& config_hash) const {
    CheckpointWriter w;
    params_.save(w, "clf.");
    w.set_meta("classes", classes_);
    w.set_meta("clf.config",
               nlohmann::json{{"image_size", cfg_.image_size},
                              {"patch", cfg_.patch},
                              {"embed", cfg_.embed},
                              {"blocks", cfg_.blocks},
                              {"heads", cfg_.heads},
                              {"mlp_ratio", cfg_.mlp_ratio},
                              {"epochs", cfg_.epochs},
                              {"batch", cfg_.batch},
                              {"lr", cfg_.lr},
                              {"weight_decay", cfg_.weight_decay},
                              {"patience", cfg_.patience}});
    w.write(path, seed, config_hash);
}

Classifier Classifier::load(const std::filesystem::path& path) {
    Checkpoint c = Checkpoint::load(path);
    if (!c.meta().contains("classes") || !c.meta().contains("clf.config")) {
        throw FormatError(path.string() + ": not a classifier checkpoint");
    }
    const auto& jc = c.meta().at("clf.config");
    ClassifierConfig cfg;
    cfg.image_size = jc.at("image_size").get<size_t>();
    cfg.patch = jc.at("patch").get<size_t>();
    cfg.embed = jc.at("embed").get<size_t>();
    cfg.blocks = jc.at("blocks").get<size_t>();
    cfg.heads = jc.at("heads").get<size_t>();
    cfg.mlp_ratio = jc.at("mlp_ratio").get<size_t>();
    cfg.epochs = jc.at("epochs").get<size_t>();
    cfg.batch = jc.at("batch").get<size_t>();
    cfg.lr = jc.at("lr").get<double>();
    cfg.weight_decay = jc.at("weight_decay").get<double>();
    cfg.patience = jc.at("patience").get<size_t>();
    auto classes = c.meta().at("classes").get<std::vector<std::string>>();
    Classifier clf(cfg, std::move(classes), 0);
    clf.params_.load(c, "clf.");
    return clf;
}

namespace {

double eval_loss(const Classifier& clf, const Manifest& m, ImageStore& store,
                 const std::vector<const ImageRecord*>& recs) {
    NoGradGuard ng;
    double sum = 0.0;
    for (const auto* rec : recs) {
        Tensor lg = clf.logits(image_to_tensor(store.get(m, *rec)));
        sum += cross_entropy_logits(lg, {clf.class_index(rec->class_label)})
                   .item();
    }
    return sum / static_cast<double>(recs.size());
}

}  // namespace

TrainHistory train_classifier(Classifier& clf, const Manifest& m,
                              ImageStore& store, uint64_t seed) {
    const ClassifierConfig& cfg = clf.config();
    if (cfg.batch == 0) throw ConfigError("train_classifier: batch must be > 0");
    if (m.image_size != cfg.image_size) {
        throw ConfigError("train_classifier: manifest image size does not "
                          "match the classifier");
    }

    std::vector<const ImageRecord*> train, val;
    std::set<std::string> train_classes;
    for (const auto& rec : m.records) {
        if (rec.split == Split::train) {
            train.push_back(&rec);
            train_classes.insert(rec.class_label);
        } else if (rec.split == Split::val) {
            val.push_back(&rec);
        }
    }
    if (train.empty()) throw TrainingError("train_classifier: no train records");
    if (train_classes.size() < 2) {
        throw TrainingError("train_classifier: need at least two classes in "
                            "the train split, got " +
                            std::to_string(train_classes.size()));
    }
    for (const auto* rec : train) clf.class_index(rec->class_label);
    for (const auto* rec : val) clf.class_index(rec->class_label);

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    AdamW opt(clf.params().tensors(), opt_cfg);

    TrainHistory hist;
    double best_val = 0.0;
    size_t since_best = 0;
    std::vector<std::vector<double>> best_weights;

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
            std::vector<Tensor> lg;
            std::vector<size_t> labels;
            lg.reserve(n);
            for (size_t j = 0; j < n; ++j) {
                const ImageRecord& rec = *train[order[off + j]];
                lg.push_back(clf.logits(image_to_tensor(store.get(m, rec))));
                labels.push_back(clf.class_index(rec.class_label));
            }
            Tensor loss = cross_entropy_logits(
                n == 1 ? lg[0] : concat_rows(lg), labels);
            opt.zero_grad();
            backward(loss);
            opt.step();
            loss_sum += loss.item();
            ++batches;
        }
        hist.train_loss.push_back(loss_sum / static_cast<double>(batches));

        if (val.empty()) continue;
        double vl = eval_loss(clf, m, store, val);
        hist.val_loss.push_back(vl);
        if (hist.best_epoch == 0 || vl < best_val) {
            best_val = vl;
            hist.best_epoch = epoch + 1;
            since_best = 0;
            best_weights.clear();
            for (auto& t : clf.params().tensors()) {
                best_weights.push_back(t.value());
            }
        } else if (++since_best >= cfg.patience) {
            hist.early_stopped = true;
            break;
        }
    }

    if (!best_weights.empty()) {
        size_t i = 0;
        for (auto& t : clf.params().tensors()) t.value() = best_weights[i++];
    }
    return hist;
}

void write_predictions(const std::filesystem::path& csv, const Classifier& clf,
                       const Manifest& m, ImageStore& store, Split split) {
    std::string out = "path,true_class";
    for (const auto& c : clf.classes()) out += ",p_" + c;
    out += "\n";
    char buf[32];
    for (const auto& rec : m.records) {
        if (rec.split != split) continue;
        std::vector<double> p = clf.predict(store.get(m, rec));
        out += rec.path + "," + rec.class_label;
        for (double v : p) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out += buf;
        }
        out += "\n";
    }
    write_text_file(csv, out);
}

}  // namespace diffaug
