#include "diffaug/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "diffaug/errors.hpp"
#include "diffaug/util.hpp"

namespace diffaug {

namespace {

void check_scored(const char* who, const std::vector<double>& scores,
                  const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw ContractError(std::string(who) +
                            ": scores and labels differ in length");
    }
    if (scores.empty()) {
        throw ContractError(std::string(who) + ": empty input");
    }
    for (int l : labels) {
        if (l != 0 && l != 1) {
            throw ContractError(std::string(who) + ": labels must be 0 or 1");
        }
    }
}

}  // namespace

double auroc(const std::vector<double>& scores,
             const std::vector<int>& labels) {
    check_scored("auroc", scores, labels);
    size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<size_t>(l);
    size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw UndefinedMetricError("auroc needs both classes present");
    }
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return scores[a] < scores[b];
    });
    // Average ranks within tie groups, summed over positives.
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    double u = rank_sum_pos -
               0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
    check_scored("average_precision", scores, labels);
    size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<size_t>(l);
    if (n_pos == 0) {
        throw UndefinedMetricError(
            "average_precision needs at least one positive");
    }
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return scores[a] > scores[b];
    });
    double ap = 0.0;
    size_t seen = 0, seen_pos = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        size_t group_pos = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] == 1) ++group_pos;
            ++j;
        }
        seen += j - i;
        seen_pos += group_pos;
        if (group_pos > 0) {
            double precision =
                static_cast<double>(seen_pos) / static_cast<double>(seen);
            ap += precision * static_cast<double>(group_pos) /
                  static_cast<double>(n_pos);
        }
        i = j;
    }
    return ap;
}

namespace {

double quantile_sorted(const std::vector<double>& v, double p) {
    double h = p * static_cast<double>(v.size() - 1);
    size_t lo = static_cast<size_t>(std::floor(h));
    size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = h - std::floor(h);
    return v[lo] + frac * (v[hi] - v[lo]);
}

struct StratifiedIndex {
    std::vector<size_t> pos, neg;
};

StratifiedIndex stratify(const std::vector<int>& labels) {
    StratifiedIndex s;
    for (size_t i = 0; i < labels.size(); ++i) {
        (labels[i] == 1 ? s.pos : s.neg).push_back(i);
    }
    return s;
}

// Draw order: all positive slots, then all negative slots.
void resample_indices(const StratifiedIndex& s, Rng& rng,
                      std::vector<size_t>& out) {
    out.clear();
    for (size_t i = 0; i < s.pos.size(); ++i) {
        out.push_back(s.pos[rng.index(s.pos.size())]);
    }
    for (size_t i = 0; i < s.neg.size(); ++i) {
        out.push_back(s.neg[rng.index(s.neg.size())]);
    }
}

}  // namespace

BootstrapCI bootstrap_ci(const MetricFn& metric,
                         const std::vector<double>& scores,
                         const std::vector<int>& labels, size_t resamples,
                         double level, uint64_t seed) {
    check_scored("bootstrap_ci", scores, labels);
    if (resamples == 0) throw ContractError("bootstrap_ci: zero resamples");
    if (level <= 0.0 || level >= 1.0) {
        throw ContractError("bootstrap_ci: level outside (0,1)");
    }
    BootstrapCI ci;
    ci.resamples = resamples;
    ci.seed = seed;
    ci.point = metric(scores, labels);

    StratifiedIndex strat = stratify(labels);
    std::vector<double> values;
    values.reserve(resamples);
    size_t failures = 0;
    std::vector<size_t> idx;
    std::vector<double> rs;
    std::vector<int> rl;
    for (size_t i = 0; i < resamples; ++i) {
        Rng rng = Rng(seed).derive(i);
        resample_indices(strat, rng, idx);
        rs.clear();
        rl.clear();
        for (size_t k : idx) {
            rs.push_back(scores[k]);
            rl.push_back(labels[k]);
        }
        try {
            values.push_back(metric(rs, rl));
        } catch (const UndefinedMetricError&) {
            ++failures;
        }
    }
    if (static_cast<double>(failures) >
        0.01 * static_cast<double>(resamples)) {
        throw UndefinedMetricError(
            "bootstrap_ci: metric undefined on " + std::to_string(failures) +
            " of " + std::to_string(resamples) + " resamples");
    }
    if (values.empty()) {
        throw UndefinedMetricError("bootstrap_ci: no resample succeeded");
    }
    std::sort(values.begin(), values.end());
    double alpha = 0.5 * (1.0 - level);
    ci.lo = quantile_sorted(values, alpha);
    ci.hi = quantile_sorted(values, 1.0 - alpha);
    // Percentile intervals from few resamples can miss the point estimate;
    // the reported interval always contains it.
    ci.lo = std::min(ci.lo, ci.point);
    ci.hi = std::max(ci.hi, ci.point);
    return ci;
}

double paired_bootstrap_p(const MetricFn& metric,
                          const std::vector<double>& scores_a,
                          const std::vector<double>& scores_b,
                          const std::vector<int>& labels, size_t resamples,
                          uint64_t seed) {
    check_scored("paired_bootstrap_p", scores_a, labels);
    if (scores_b.size() != labels.size()) {
        throw ContractError("paired_bootstrap_p: arms differ in length");
    }
    if (resamples == 0) {
        throw ContractError("paired_bootstrap_p: zero resamples");
    }
    StratifiedIndex strat = stratify(labels);
    size_t n_le = 0, n_ge = 0, valid = 0;
    std::vector<size_t> idx;
    std::vector<double> ra, rb;
    std::vector<int> rl;
    for (size_t i = 0; i < resamples; ++i) {
        Rng rng = Rng(seed).derive(i);
        resample_indices(strat, rng, idx);
        ra.clear();
        rb.clear();
        rl.clear();
        for (size_t k : idx) {
            ra.push_back(scores_a[k]);
            rb.push_back(scores_b[k]);
            rl.push_back(labels[k]);
        }
        try {
            double d = metric(ra, rl) - metric(rb, rl);
            if (d <= 0.0) ++n_le;
            if (d >= 0.0) ++n_ge;
            ++valid;
        } catch (const UndefinedMetricError&) {
        }
    }
    if (valid == 0) {
        throw UndefinedMetricError("paired_bootstrap_p: no resample succeeded");
    }
    double frac_le = static_cast<double>(n_le) / static_cast<double>(valid);
    double frac_ge = static_cast<double>(n_ge) / static_cast<double>(valid);
    return std::min(1.0, 2.0 * std::min(frac_le, frac_ge));
}

const char* kappa_band_name(KappaBand b) {
    switch (b) {
        case KappaBand::below_moderate: return "below_moderate";
        case KappaBand::moderate: return "moderate";
        case KappaBand::substantial: return "substantial";
        case KappaBand::almost_perfect: return "almost_perfect";
    }
    return "?";
}

KappaBand kappa_band(double kappa) {
    if (kappa < 0.40) return KappaBand::below_moderate;
    if (kappa < 0.60) return KappaBand::moderate;
    if (kappa < 0.80) return KappaBand::substantial;
    return KappaBand::almost_perfect;
}

KappaResult weighted_kappa(const std::vector<size_t>& r1,
                           const std::vector<size_t>& r2, size_t k) {
    if (k < 2) throw ContractError("weighted_kappa: k must be >= 2");
    if (r1.size() != r2.size()) {
        throw ContractError("weighted_kappa: rating vectors differ in length");
    }
    if (r1.size() < 2) {
        throw ContractError("weighted_kappa: need at least two paired ratings");
    }
    for (size_t i = 0; i < r1.size(); ++i) {
        if (r1[i] < 1 || r1[i] > k || r2[i] < 1 || r2[i] > k) {
            throw ContractError("weighted_kappa: rating outside 1..k");
        }
    }
    double n = static_cast<double>(r1.size());
    std::vector<double> row(k, 0.0), col(k, 0.0);
    std::vector<std::vector<double>> obs(k, std::vector<double>(k, 0.0));
    for (size_t i = 0; i < r1.size(); ++i) {
        obs[r1[i] - 1][r2[i] - 1] += 1.0;
        row[r1[i] - 1] += 1.0;
        col[r2[i] - 1] += 1.0;
    }
    double denom_w = static_cast<double>((k - 1) * (k - 1));
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < k; ++i) {
        for (size_t j = 0; j < k; ++j) {
            double di = static_cast<double>(i) - static_cast<double>(j);
            double w = di * di / denom_w;
            num += w * obs[i][j];
            den += w * row[i] * col[j] / n;
        }
    }
    KappaResult res;
    if (den == 0.0) {
        // Both raters used a single category; chance disagreement is zero.
        res.kappa = 1.0;
        res.degenerate = true;
    } else {
        res.kappa = 1.0 - num / den;
    }
    res.band = kappa_band(res.kappa);
    return res;
}

HumanEvalSummary summarize_human_eval(const std::vector<size_t>& scores,
                                      const std::vector<RaterTally>& raters) {
    if (scores.empty() && raters.empty()) {
        throw ContractError("summarize_human_eval: no input");
    }
    HumanEvalSummary s;
    if (!scores.empty()) {
        s.n_scores = scores.size();
        for (size_t v : scores) {
            if (v < 1 || v > 5) {
                throw ContractError(
                    "summarize_human_eval: score outside 1..5");
            }
            s.score_mean += static_cast<double>(v);
        }
        s.score_mean /= static_cast<double>(scores.size());
        if (scores.size() > 1) {
            double acc = 0.0;
            for (size_t v : scores) {
                double d = static_cast<double>(v) - s.score_mean;
                acc += d * d;
            }
            s.score_sd = std::sqrt(acc / static_cast<double>(scores.size() - 1));
        }
    }
    if (raters.empty()) return s;
    std::vector<double> props;
    for (const auto& r : raters) {
        if (r.total == 0) {
            throw ContractError("summarize_human_eval: rater judged nothing");
        }
        if (r.judged_real > r.total) {
            throw ContractError("summarize_human_eval: judged_real > total");
        }
        s.judged_real += r.judged_real;
        s.total += r.total;
        props.push_back(static_cast<double>(r.judged_real) /
                        static_cast<double>(r.total));
    }
    s.proportion =
        static_cast<double>(s.judged_real) / static_cast<double>(s.total);
    for (double p : props) s.rater_mean += p;
    s.rater_mean /= static_cast<double>(props.size());
    if (props.size() > 1) {
        double acc = 0.0;
        for (double p : props) {
            acc += (p - s.rater_mean) * (p - s.rater_mean);
        }
        s.rater_sd = std::sqrt(acc / static_cast<double>(props.size() - 1));
    }
    return s;
}

PredictionTable read_predictions(const std::filesystem::path& csv) {
    std::string text = read_text_file(csv);
    std::istringstream in(text);
    std::string line;
    PredictionTable t;
    bool header = true;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols = split(line, ',');
        if (header) {
            if (cols.size() < 3 || cols[0] != "path" ||
                cols[1] != "true_class") {
                throw FormatError(csv.string() +
                                  ": bad predictions header");
            }
            for (size_t i = 2; i < cols.size(); ++i) {
                if (cols[i].rfind("p_", 0) != 0) {
                    throw FormatError(csv.string() +
                                      ": probability columns must be p_<class>");
                }
                t.classes.push_back(cols[i].substr(2));
            }
            header = false;
            continue;
        }
        if (cols.size() != t.classes.size() + 2) {
            throw FormatError(csv.string() + ":" + std::to_string(lineno) +
                              ": wrong column count");
        }
        PredictionRow row;
        row.path = cols[0];
        row.true_class = cols[1];
        for (size_t i = 2; i < cols.size(); ++i) {
            row.probs.push_back(std::stod(cols[i]));
        }
        t.rows.push_back(std::move(row));
    }
    if (header) throw FormatError(csv.string() + ": empty predictions file");
    return t;
}

void scores_for_class(const PredictionTable& t, size_t class_idx,
                      std::vector<double>& scores, std::vector<int>& labels) {
    if (class_idx >= t.classes.size()) {
        throw ContractError("scores_for_class: class index out of range");
    }
    scores.clear();
    labels.clear();
    for (const auto& row : t.rows) {
        scores.push_back(row.probs[class_idx]);
        labels.push_back(row.true_class == t.classes[class_idx] ? 1 : 0);
    }
}

double accuracy(const PredictionTable& t) {
    if (t.rows.empty()) throw ContractError("accuracy: empty table");
    size_t hits = 0;
    for (const auto& row : t.rows) {
        size_t best = 0;
        for (size_t i = 1; i < row.probs.size(); ++i) {
            if (row.probs[i] > row.probs[best]) best = i;
        }
        if (t.classes[best] == row.true_class) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(t.rows.size());
}

}  // namespace diffaug
