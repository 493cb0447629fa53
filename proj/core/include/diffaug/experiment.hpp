#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "diffaug/augmentor.hpp"
#include "diffaug/classifier.hpp"
#include "diffaug/diffusion.hpp"
#include "diffaug/report.hpp"
#include "diffaug/vae.hpp"

namespace diffaug {

struct BootstrapConfig {
    size_t resamples = 1000;
    double level = 0.95;
    uint64_t seed = 17;
};

// Declarative description of a full benchmark run: generator pretraining
// corpus and models, the downstream imbalanced task, the augmentation
// arms to compare, and the evaluation protocol. Loaded from JSON;
// relative paths resolve against the config file's directory.
struct ExperimentConfig {
    std::filesystem::path lexicon;
    // Generator stage.
    std::filesystem::path gen_corpus_spec;
    VaeConfig vae;
    VaeTrainConfig vae_train;
    UnetConfig unet;
    TextEncoderConfig text;
    DiffusionConfig diffusion;
    uint64_t generator_seed = 1;
    // Task stage.
    std::filesystem::path task_corpus_spec;
    std::array<double, 3> task_split{0.55, 0.10, 0.35};
    uint64_t task_split_seed = 7;
    ClassifierConfig classifier;
    std::vector<Strategy> strategies;
    std::vector<uint64_t> seeds;
    double guidance = 3.0;
    BootstrapConfig bootstrap;

    static ExperimentConfig load(const std::filesystem::path& path);
    static ExperimentConfig from_json_text(const std::string& text,
                                           const std::filesystem::path& base_dir);
    // Canonical serialization (sorted keys); hash() is its 16-hex FNV-1a.
    std::string canonical_json() const;
    std::string hash() const;
};

// stage -> input hash of the last attempt, persisted as ledger.json so
// reruns skip finished stages whose inputs are unchanged and failures
// leave a record. `artifact` is the content hash of the stage's main
// output (checkpoint or report), empty when the stage has none.
class RunLedger {
 public:
    static RunLedger open(const std::filesystem::path& file);
    bool is_done(const std::string& stage, const std::string& hash) const;
    void mark_done(const std::string& stage, const std::string& hash,
                   double wall_ms, const std::string& artifact = "");
    void mark_failed(const std::string& stage, const std::string& hash,
                     const std::string& message);
    void save() const;

 private:
    struct Entry {
        std::string hash;
        double wall_ms = 0.0;
        std::string artifact;
        std::string status = "done";  // "done" or "failed: <message>"
    };
    std::filesystem::path file_;
    std::map<std::string, Entry> stages_;
};

struct ExperimentResult {
    std::filesystem::path summary_md;
    std::filesystem::path summary_json;
    // strategy name -> one report per seed, in config seed order.
    std::map<std::string, std::vector<MetricReport>> reports;
};

// Runs (or resumes) the whole pipeline under out_dir: generator corpus,
// VAE, diffusion stack, task corpus with stratified split, one classifier
// per seed x strategy (identical initial weights across strategies at a
// given seed), evaluation on the untouched test split, and the aggregate
// summary. Every stage is deterministic for a fixed config, so reruns
// reproduce reports byte for byte. Progress lines go to `log`. A stage
// failure is recorded in the ledger and rethrown with the stage name
// prepended.
//
// Stage names: gen_corpus, vae, diffusion, task_corpus,
// arm_{strategy}_s{seed}, aggregate. A non-empty `until` stops after the
// named stage (the result is then partial: reports only for arms that
// ran).
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::filesystem::path& out_dir,
                                std::ostream& log,
                                const std::string& until = "");

}  // namespace diffaug
