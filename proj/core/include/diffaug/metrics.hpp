#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "diffaug/rng.hpp"

namespace diffaug {

// Binary ranking metrics over parallel score/label vectors; labels are
// 0 or 1. Both throw UndefinedMetricError when the needed class is absent
// (auroc needs both, average_precision needs at least one positive).

// Rank-based (Mann-Whitney) AUROC with average ranks for tied scores.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Area under the precision-recall curve as average precision, integrating
// over descending score groups so tied scores are handled atomically.
double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& labels);

using MetricFn = std::function<double(const std::vector<double>&,
                                      const std::vector<int>&)>;

struct BootstrapCI {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    size_t resamples = 0;
    uint64_t seed = 0;
};

// Stratified percentile bootstrap: every resample draws positives and
// negatives separately (preserving class counts), resample i uses the
// stream Rng(seed).derive(i). Percentiles use linear interpolation and
// the interval is widened if needed so lo <= point <= hi. More than 1% of
// resamples failing to evaluate is an UndefinedMetricError.
BootstrapCI bootstrap_ci(const MetricFn& metric,
                         const std::vector<double>& scores,
                         const std::vector<int>& labels, size_t resamples,
                         double level, uint64_t seed);

// Two-sided paired bootstrap p-value for metric(a) - metric(b): both arms
// are evaluated on the same stratified index resamples, so shared
// variance cancels. Returns min(1, 2 min(frac(d<=0), frac(d>=0))).
// Identical score vectors give exactly 1.
double paired_bootstrap_p(const MetricFn& metric,
                          const std::vector<double>& scores_a,
                          const std::vector<double>& scores_b,
                          const std::vector<int>& labels, size_t resamples,
                          uint64_t seed);

enum class KappaBand { below_moderate, moderate, substantial, almost_perfect };

const char* kappa_band_name(KappaBand b);
// < 0.40, [0.40, 0.60), [0.60, 0.80), [0.80, ...].
KappaBand kappa_band(double kappa);

struct KappaResult {
    double kappa = 0.0;
    KappaBand band = KappaBand::below_moderate;
    bool degenerate = false;  // no expected disagreement; kappa forced to 1
};

// Quadratically weighted Cohen's kappa for two raters on an ordinal scale
// 1..k, weights (i-j)^2/(k-1)^2. Needs k >= 2 and at least two paired
// ratings within range.
KappaResult weighted_kappa(const std::vector<size_t>& r1,
                           const std::vector<size_t>& r2, size_t k);

struct RaterTally {
    size_t judged_real = 0;
    size_t total = 0;
};

struct HumanEvalSummary {
    // Visual quality scores on a 1..5 scale, pooled over raters.
    size_t n_scores = 0;
    double score_mean = 0.0;
    double score_sd = 0.0;  // sample standard deviation (0 for one score)
    // Real-vs-generated calls.
    size_t judged_real = 0;
    size_t total = 0;
    double proportion = 0.0;   // pooled judged_real / total
    double rater_mean = 0.0;   // mean of per-rater proportions
    double rater_sd = 0.0;     // sample standard deviation (0 for one rater)
};

// Either part may be empty (its fields stay zero), but not both.
HumanEvalSummary summarize_human_eval(const std::vector<size_t>& scores,
                                      const std::vector<RaterTally>& raters);

// Per-record class probabilities as written by write_predictions.
struct PredictionRow {
    std::string path;
    std::string true_class;
    std::vector<double> probs;
};

struct PredictionTable {
    std::vector<std::string> classes;
    std::vector<PredictionRow> rows;
};

PredictionTable read_predictions(const std::filesystem::path& csv);

// One-vs-rest scores for one class column.
void scores_for_class(const PredictionTable& t, size_t class_idx,
                      std::vector<double>& scores, std::vector<int>& labels);

// Fraction of rows whose argmax probability matches the true class.
double accuracy(const PredictionTable& t);

}  // namespace diffaug
