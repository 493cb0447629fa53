#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diffaug/corpus.hpp"
#include "diffaug/diffusion.hpp"

namespace diffaug {

enum class Strategy { none, oversample, synthesize };

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& s);

// Per-class train-count targets for one augmentation pass. Only the train
// split is ever modified; targets below a class's current count are a
// contract violation.
struct AugmentationPlan {
    Strategy strategy = Strategy::none;
    std::map<std::string, size_t> targets;
    uint64_t seed = 0;
};

// Balance-to-majority policy: every class is brought up to the largest
// train count in the histogram.
AugmentationPlan plan_balance(const ClassHistogram& hist, Strategy strategy,
                              uint64_t seed);

// JSON provenance record of an executed plan: strategy, per-class targets,
// seed, and the hash of the generator checkpoint ("" when none was used).
void write_plan_json(const std::filesystem::path& path,
                     const AugmentationPlan& plan,
                     const std::string& checkpoint_hash);

// Duplicates uniformly-with-replacement drawn train records of each
// deficit class (provenance oversampled) until the targets are met
// exactly. Classes are processed in sorted order with independent derived
// streams, so adding a class does not disturb the others. Val and test
// records pass through bit-identically.
Manifest apply_oversample(const Manifest& m, const AugmentationPlan& plan);

// Produces `count` new train images for one class and returns their
// records. Implementations must write the image files themselves and
// return absolute paths with split train and provenance synthetic.
class SynthesisBackend {
 public:
    virtual ~SynthesisBackend() = default;
    virtual std::vector<ImageRecord> generate(const std::string& class_label,
                                              const StructuredPrompt& prompt,
                                              size_t count, uint64_t seed) = 0;
};

// Fills each deficit class with backend-generated records (prompt taken
// from `prompts`). Classes are processed in sorted order; the per-class
// seed is mix64(plan.seed ^ fnv1a64(class)). If the backend throws, the
// error surfaces as PartialPlanError naming the classes already completed.
Manifest apply_synthesize(const Manifest& m, const AugmentationPlan& plan,
                          const std::map<std::string, StructuredPrompt>& prompts,
                          SynthesisBackend& backend);

// Dispatch on plan.strategy; `none` returns the manifest unchanged.
// synthesize requires a backend and prompts.
Manifest apply_plan(const Manifest& m, const AugmentationPlan& plan,
                    const std::map<std::string, StructuredPrompt>& prompts,
                    SynthesisBackend* backend);

// Samples images from a generative stack checkpoint. Files are written to
// out_dir as {class}_{seed}_{index}.png (the per-class seed, a 1-based-
// width-4 index); image i uses the stream Rng(seed).derive(i).
class StackSynthesisBackend : public SynthesisBackend {
 public:
    StackSynthesisBackend(const GenerativeStack& stack,
                          std::filesystem::path out_dir, double guidance);
    std::vector<ImageRecord> generate(const std::string& class_label,
                                      const StructuredPrompt& prompt,
                                      size_t count, uint64_t seed) override;

 private:
    const GenerativeStack& stack_;
    std::filesystem::path out_dir_;
    double guidance_;
};

}  // namespace diffaug
