#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diffaug/metrics.hpp"

namespace diffaug {

struct ClassMetrics {
    std::string class_name;
    BootstrapCI auroc_ci;
    BootstrapCI aupr_ci;
};

// Evaluation of one arm at one seed. Serialized as canonical JSON (sorted
// keys, LF newline), so equal reports are byte-equal files.
struct MetricReport {
    std::string arm;
    uint64_t seed = 0;
    std::string config_hash;
    std::string code_version;
    std::string test_split_hash;
    size_t bootstrap_resamples = 0;
    double bootstrap_level = 0.95;
    uint64_t bootstrap_seed = 0;
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;  // in prediction-table class order
    double macro_auroc = 0.0;
    double macro_aupr = 0.0;
    bool has_paired = false;  // false on the baseline arm itself
    double paired_auroc_p = 1.0;
    double paired_aupr_p = 1.0;

    void save(const std::filesystem::path& path) const;
    static MetricReport load(const std::filesystem::path& path);
};

// Per-class one-vs-rest AUROC/AUPR with stratified bootstrap CIs, macro
// averages and accuracy.
MetricReport evaluate_predictions(const PredictionTable& preds,
                                  const std::string& arm, uint64_t seed,
                                  const std::string& config_hash,
                                  const std::string& test_split_hash,
                                  size_t resamples, double level,
                                  uint64_t bootstrap_seed);

// Paired bootstrap p-values on the macro metrics of two arms evaluated on
// the same test rows (paths and true classes must agree). Rows are
// resampled stratified by true class, both arms on the same draw.
struct PairedMacroP {
    double auroc_p = 1.0;
    double aupr_p = 1.0;
};
PairedMacroP paired_macro_p(const PredictionTable& arm,
                            const PredictionTable& baseline, size_t resamples,
                            uint64_t seed);

// "0.826 (0.821, 0.832)".
std::string format_value_ci(double v, double lo, double hi);

struct AggregateCell {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

// Median and interquartile range (linear-interpolation quartiles).
AggregateCell aggregate_values(std::vector<double> values);

// Markdown summary over arms and seeds: per-class and macro tables of
// median (IQR) AUROC and AUPR, an up-arrow where a non-baseline arm beats
// the baseline median on both metrics for that row, accuracy and paired
// p-value tables. `reports[arm]` holds one report per seed.
void write_summary_markdown(
    const std::filesystem::path& path,
    const std::map<std::string, std::vector<MetricReport>>& reports,
    const std::string& baseline_arm);

// Aggregate JSON mirroring the markdown tables (canonical bytes).
void write_summary_json(
    const std::filesystem::path& path,
    const std::map<std::string, std::vector<MetricReport>>& reports,
    const std::string& baseline_arm);

// Bar chart of a macro metric per arm with IQR whiskers.
void write_macro_bar_svg(const std::filesystem::path& path,
                         const std::string& metric_name,
                         const std::vector<std::string>& arms,
                         const std::vector<AggregateCell>& cells);

// One panel per class, PR curve per arm (from one seed's predictions).
void write_pr_curves_svg(
    const std::filesystem::path& path,
    const std::map<std::string, PredictionTable>& arm_preds);

}  // namespace diffaug
