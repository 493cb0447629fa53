#include "diffaug/augmentor.hpp"

#include <algorithm>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "diffaug/errors.hpp"
#include "diffaug/util.hpp"

namespace diffaug {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::none: return "none";
        case Strategy::oversample: return "oversample";
        case Strategy::synthesize: return "synthesize";
    }
    return "?";
}

Strategy parse_strategy(const std::string& s) {
    if (s == "none" || s == "baseline") return Strategy::none;
    if (s == "oversample") return Strategy::oversample;
    if (s == "synthesize") return Strategy::synthesize;
    throw ConfigError("unknown augmentation strategy '" + s + "'");
}

AugmentationPlan plan_balance(const ClassHistogram& hist, Strategy strategy,
                              uint64_t seed) {
    if (hist.counts.empty()) {
        throw ContractError("plan_balance: empty histogram");
    }
    size_t majority = 0;
    for (const auto& [cls, c] : hist.counts) {
        majority = std::max(majority, c[static_cast<size_t>(Split::train)]);
    }
    AugmentationPlan plan;
    plan.strategy = strategy;
    plan.seed = seed;
    for (const auto& [cls, c] : hist.counts) plan.targets[cls] = majority;
    return plan;
}

void write_plan_json(const std::filesystem::path& path,
                     const AugmentationPlan& plan,
                     const std::string& checkpoint_hash) {
    nlohmann::json j{{"strategy", strategy_name(plan.strategy)},
                     {"targets", plan.targets},
                     {"seed", plan.seed},
                     {"checkpoint_hash", checkpoint_hash}};
    write_text_file(path, j.dump(2) + "\n");
}

namespace {

// Current train counts and a target sanity check shared by both appliers.
std::map<std::string, size_t> train_counts_checked(
    const Manifest& m, const AugmentationPlan& plan) {
    std::map<std::string, size_t> counts;
    for (const auto& rec : m.records) {
        if (rec.split == Split::train) counts[rec.class_label]++;
    }
    for (const auto& [cls, target] : plan.targets) {
        auto it = counts.find(cls);
        if (it == counts.end()) {
            throw ContractError("augmentation plan names class '" + cls +
                                "' with no train records");
        }
        if (target < it->second) {
            throw ContractError("augmentation target for class '" + cls +
                                "' is below its current train count");
        }
    }
    return counts;
}

}  // namespace

Manifest apply_oversample(const Manifest& m, const AugmentationPlan& plan) {
    std::map<std::string, size_t> counts = train_counts_checked(m, plan);
    Manifest out = m;
    // std::map iterates in sorted key order.
    for (const auto& [cls, target] : plan.targets) {
        size_t deficit = target - counts.at(cls);
        if (deficit == 0) continue;
        std::vector<const ImageRecord*> pool;
        for (const auto& rec : m.records) {
            if (rec.split == Split::train && rec.class_label == cls) {
                pool.push_back(&rec);
            }
        }
        Rng rng = Rng(plan.seed).derive(fnv1a64(cls));
        for (size_t i = 0; i < deficit; ++i) {
            ImageRecord dup = *pool[rng.index(pool.size())];
            dup.provenance = Provenance::oversampled;
            out.records.push_back(std::move(dup));
        }
    }
    return out;
}

Manifest apply_synthesize(const Manifest& m, const AugmentationPlan& plan,
                          const std::map<std::string, StructuredPrompt>& prompts,
                          SynthesisBackend& backend) {
    std::map<std::string, size_t> counts = train_counts_checked(m, plan);
    for (const auto& [cls, target] : plan.targets) {
        if (target > counts.at(cls) && prompts.find(cls) == prompts.end()) {
            throw ContractError("apply_synthesize: no prompt for class '" +
                                cls + "'");
        }
    }
    Manifest out = m;
    std::vector<std::string> completed;
    for (const auto& [cls, target] : plan.targets) {
        size_t deficit = target - counts.at(cls);
        if (deficit == 0) continue;
        uint64_t cls_seed = mix64(plan.seed ^ fnv1a64(cls));
        std::vector<ImageRecord> made;
        try {
            made = backend.generate(cls, prompts.at(cls), deficit, cls_seed);
        } catch (const std::exception& e) {
            std::string done;
            for (size_t i = 0; i < completed.size(); ++i) {
                if (i) done += ", ";
                done += completed[i];
            }
            throw PartialPlanError(
                "synthesis failed for class '" + cls + "': " + e.what() +
                "; completed classes: " + (done.empty() ? "(none)" : done));
        }
        if (made.size() != deficit) {
            throw ContractError("backend returned " +
                                std::to_string(made.size()) +
                                " records for class '" + cls + "', expected " +
                                std::to_string(deficit));
        }
        for (auto& rec : made) {
            if (rec.class_label != cls || rec.split != Split::train ||
                rec.provenance != Provenance::synthetic) {
                throw ContractError(
                    "backend returned a record violating the synthesis "
                    "contract for class '" + cls + "'");
            }
            if (!std::filesystem::path(rec.path).is_absolute()) {
                throw ContractError("backend must return absolute paths");
            }
            out.records.push_back(std::move(rec));
        }
        completed.push_back(cls);
    }
    return out;
}

Manifest apply_plan(const Manifest& m, const AugmentationPlan& plan,
                    const std::map<std::string, StructuredPrompt>& prompts,
                    SynthesisBackend* backend) {
    switch (plan.strategy) {
        case Strategy::none:
            return m;
        case Strategy::oversample:
            return apply_oversample(m, plan);
        case Strategy::synthesize:
            if (!backend) {
                throw ContractError("apply_plan: synthesize needs a backend");
            }
            return apply_synthesize(m, plan, prompts, *backend);
    }
    throw ContractError("apply_plan: bad strategy");
}

StackSynthesisBackend::StackSynthesisBackend(const GenerativeStack& stack,
                                             std::filesystem::path out_dir,
                                             double guidance)
    : stack_(stack), out_dir_(std::move(out_dir)), guidance_(guidance) {}

std::vector<ImageRecord> StackSynthesisBackend::generate(
    const std::string& class_label, const StructuredPrompt& prompt,
    size_t count, uint64_t seed) {
    std::filesystem::create_directories(out_dir_);
    std::filesystem::path abs_dir = std::filesystem::absolute(out_dir_);
    std::vector<ImageRecord> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        Rng rng = Rng(seed).derive(i);
        Image img = stack_.sample(prompt, guidance_, rng);
        char name[128];
        std::snprintf(name, sizeof(name), "%s_%llu_%04zu.png",
                      class_label.c_str(),
                      static_cast<unsigned long long>(seed), i);
        std::filesystem::path file = abs_dir / name;
        write_png_gray(file, img);
        ImageRecord rec;
        rec.path = file.string();
        rec.prompt = prompt;
        rec.class_label = class_label;
        rec.split = Split::train;
        rec.provenance = Provenance::synthetic;
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace diffaug
