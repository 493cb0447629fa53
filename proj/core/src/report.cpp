#include "diffaug/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "diffaug/errors.hpp"
#include "diffaug/rng.hpp"
#include "diffaug/util.hpp"
#include "diffaug/version.hpp"

namespace diffaug {

using nlohmann::json;

namespace {

json ci_to_json(const BootstrapCI& ci) {
    return json{{"point", ci.point}, {"lo", ci.lo}, {"hi", ci.hi}};
}

BootstrapCI ci_from_json(const json& j) {
    BootstrapCI ci;
    ci.point = j.at("point").get<double>();
    ci.lo = j.at("lo").get<double>();
    ci.hi = j.at("hi").get<double>();
    return ci;
}

// Canonical bytes: sorted keys (json object iteration is key-ordered),
// two-space indent, trailing LF.
void write_canonical_json(const std::filesystem::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace

void MetricReport::save(const std::filesystem::path& path) const {
    json per_cls = json::object();
    for (const auto& c : per_class) {
        per_cls[c.class_name] = json{{"auroc", ci_to_json(c.auroc_ci)},
                                     {"aupr", ci_to_json(c.aupr_ci)}};
    }
    json j{{"arm", arm},
           {"seed", seed},
           {"config_hash", config_hash},
           {"code_version", code_version},
           {"test_split_hash", test_split_hash},
           {"bootstrap",
            json{{"resamples", bootstrap_resamples},
                 {"level", bootstrap_level},
                 {"seed", bootstrap_seed}}},
           {"accuracy", accuracy},
           {"per_class", per_cls},
           {"macro", json{{"auroc", macro_auroc}, {"aupr", macro_aupr}}}};
    if (has_paired) {
        j["paired_vs_baseline"] =
            json{{"auroc_p", paired_auroc_p}, {"aupr_p", paired_aupr_p}};
    } else {
        j["paired_vs_baseline"] = nullptr;
    }
    write_canonical_json(path, j);
}

MetricReport MetricReport::load(const std::filesystem::path& path) {
    json j = json::parse(read_text_file(path));
    MetricReport r;
    r.arm = j.at("arm").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.code_version = j.at("code_version").get<std::string>();
    r.test_split_hash = j.at("test_split_hash").get<std::string>();
    r.bootstrap_resamples = j.at("bootstrap").at("resamples").get<size_t>();
    r.bootstrap_level = j.at("bootstrap").at("level").get<double>();
    r.bootstrap_seed = j.at("bootstrap").at("seed").get<uint64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    for (const auto& [cls, jc] : j.at("per_class").items()) {
        ClassMetrics cm;
        cm.class_name = cls;
        cm.auroc_ci = ci_from_json(jc.at("auroc"));
        cm.aupr_ci = ci_from_json(jc.at("aupr"));
        r.per_class.push_back(std::move(cm));
    }
    r.macro_auroc = j.at("macro").at("auroc").get<double>();
    r.macro_aupr = j.at("macro").at("aupr").get<double>();
    if (!j.at("paired_vs_baseline").is_null()) {
        r.has_paired = true;
        r.paired_auroc_p =
            j.at("paired_vs_baseline").at("auroc_p").get<double>();
        r.paired_aupr_p =
            j.at("paired_vs_baseline").at("aupr_p").get<double>();
    }
    return r;
}

MetricReport evaluate_predictions(const PredictionTable& preds,
                                  const std::string& arm, uint64_t seed,
                                  const std::string& config_hash,
                                  const std::string& test_split_hash,
                                  size_t resamples, double level,
                                  uint64_t bootstrap_seed) {
    MetricReport r;
    r.arm = arm;
    r.seed = seed;
    r.config_hash = config_hash;
    r.code_version = kVersion;
    r.test_split_hash = test_split_hash;
    r.bootstrap_resamples = resamples;
    r.bootstrap_level = level;
    r.bootstrap_seed = bootstrap_seed;
    r.accuracy = accuracy(preds);

    std::vector<double> scores;
    std::vector<int> labels;
    for (size_t c = 0; c < preds.classes.size(); ++c) {
        scores_for_class(preds, c, scores, labels);
        ClassMetrics cm;
        cm.class_name = preds.classes[c];
        // Per-class bootstrap streams stay independent of class order.
        uint64_t cls_seed = mix64(bootstrap_seed ^ fnv1a64(cm.class_name));
        cm.auroc_ci =
            bootstrap_ci(auroc, scores, labels, resamples, level, cls_seed);
        cm.aupr_ci = bootstrap_ci(average_precision, scores, labels, resamples,
                                  level, mix64(cls_seed + 1));
        r.macro_auroc += cm.auroc_ci.point;
        r.macro_aupr += cm.aupr_ci.point;
        r.per_class.push_back(std::move(cm));
    }
    r.macro_auroc /= static_cast<double>(preds.classes.size());
    r.macro_aupr /= static_cast<double>(preds.classes.size());
    return r;
}

namespace {

double macro_metric(const PredictionTable& t, const std::vector<size_t>& rows,
                    const MetricFn& metric) {
    double acc = 0.0;
    std::vector<double> scores;
    std::vector<int> labels;
    for (size_t c = 0; c < t.classes.size(); ++c) {
        scores.clear();
        labels.clear();
        for (size_t i : rows) {
            scores.push_back(t.rows[i].probs[c]);
            labels.push_back(t.rows[i].true_class == t.classes[c] ? 1 : 0);
        }
        acc += metric(scores, labels);
    }
    return acc / static_cast<double>(t.classes.size());
}

}  // namespace

PairedMacroP paired_macro_p(const PredictionTable& arm,
                            const PredictionTable& baseline, size_t resamples,
                            uint64_t seed) {
    if (arm.classes != baseline.classes ||
        arm.rows.size() != baseline.rows.size()) {
        throw ContractError("paired_macro_p: arms do not share a test set");
    }
    for (size_t i = 0; i < arm.rows.size(); ++i) {
        if (arm.rows[i].path != baseline.rows[i].path ||
            arm.rows[i].true_class != baseline.rows[i].true_class) {
            throw ContractError("paired_macro_p: test rows differ at line " +
                                std::to_string(i + 1));
        }
    }
    if (resamples == 0) throw ContractError("paired_macro_p: zero resamples");

    // Row indices grouped by true class, in table class order.
    std::vector<std::vector<size_t>> by_class(arm.classes.size());
    for (size_t i = 0; i < arm.rows.size(); ++i) {
        auto it = std::find(arm.classes.begin(), arm.classes.end(),
                            arm.rows[i].true_class);
        if (it == arm.classes.end()) {
            throw ContractError("paired_macro_p: row class '" +
                                arm.rows[i].true_class +
                                "' missing from the class list");
        }
        by_class[static_cast<size_t>(it - arm.classes.begin())].push_back(i);
    }

    size_t n_le_auroc = 0, n_ge_auroc = 0;
    size_t n_le_aupr = 0, n_ge_aupr = 0;
    std::vector<size_t> rows;
    for (size_t i = 0; i < resamples; ++i) {
        Rng rng = Rng(seed).derive(i);
        rows.clear();
        for (const auto& group : by_class) {
            for (size_t k = 0; k < group.size(); ++k) {
                rows.push_back(group[rng.index(group.size())]);
            }
        }
        double da = macro_metric(arm, rows, auroc) -
                    macro_metric(baseline, rows, auroc);
        double dp = macro_metric(arm, rows, average_precision) -
                    macro_metric(baseline, rows, average_precision);
        if (da <= 0.0) ++n_le_auroc;
        if (da >= 0.0) ++n_ge_auroc;
        if (dp <= 0.0) ++n_le_aupr;
        if (dp >= 0.0) ++n_ge_aupr;
    }
    auto two_sided = [&](size_t n_le, size_t n_ge) {
        double fle = static_cast<double>(n_le) / static_cast<double>(resamples);
        double fge = static_cast<double>(n_ge) / static_cast<double>(resamples);
        return std::min(1.0, 2.0 * std::min(fle, fge));
    };
    PairedMacroP p;
    p.auroc_p = two_sided(n_le_auroc, n_ge_auroc);
    p.aupr_p = two_sided(n_le_aupr, n_ge_aupr);
    return p;
}

std::string format_value_ci(double v, double lo, double hi) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.3f (%.3f, %.3f)", v, lo, hi);
    return buf;
}

AggregateCell aggregate_values(std::vector<double> values) {
    if (values.empty()) throw ContractError("aggregate_values: empty input");
    std::sort(values.begin(), values.end());
    auto q = [&](double p) {
        double h = p * static_cast<double>(values.size() - 1);
        size_t lo = static_cast<size_t>(std::floor(h));
        size_t hi = std::min(lo + 1, values.size() - 1);
        double frac = h - std::floor(h);
        return values[lo] + frac * (values[hi] - values[lo]);
    };
    AggregateCell c;
    c.q1 = q(0.25);
    c.median = q(0.5);
    c.q3 = q(0.75);
    return c;
}

namespace {

struct ArmAggregate {
    // Row order: per_class order from the first report, then "macro".
    std::vector<std::string> row_names;
    std::vector<AggregateCell> auroc;
    std::vector<AggregateCell> aupr;
    AggregateCell accuracy;
    AggregateCell auroc_p, aupr_p;
    bool has_p = false;
};

ArmAggregate aggregate_arm(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw ContractError("aggregate_arm: no reports");
    ArmAggregate agg;
    for (const auto& cm : reports[0].per_class) {
        agg.row_names.push_back(cm.class_name);
    }
    agg.row_names.push_back("macro");
    for (size_t row = 0; row < agg.row_names.size(); ++row) {
        std::vector<double> va, vp;
        for (const auto& r : reports) {
            if (r.per_class.size() + 1 != agg.row_names.size()) {
                throw ContractError("aggregate_arm: class sets differ across "
                                    "seeds");
            }
            if (row + 1 < agg.row_names.size()) {
                va.push_back(r.per_class[row].auroc_ci.point);
                vp.push_back(r.per_class[row].aupr_ci.point);
            } else {
                va.push_back(r.macro_auroc);
                vp.push_back(r.macro_aupr);
            }
        }
        agg.auroc.push_back(aggregate_values(va));
        agg.aupr.push_back(aggregate_values(vp));
    }
    std::vector<double> acc, pa, pp;
    for (const auto& r : reports) {
        acc.push_back(r.accuracy);
        if (r.has_paired) {
            pa.push_back(r.paired_auroc_p);
            pp.push_back(r.paired_aupr_p);
        }
    }
    agg.accuracy = aggregate_values(acc);
    if (!pa.empty()) {
        agg.has_p = true;
        agg.auroc_p = aggregate_values(pa);
        agg.aupr_p = aggregate_values(pp);
    }
    return agg;
}

// A non-baseline cell gets the marker when the arm's median beats the
// baseline median on both AUROC and AUPR for that row.
bool beats_baseline(const ArmAggregate& arm, const ArmAggregate& base,
                    size_t row) {
    return arm.auroc[row].median > base.auroc[row].median &&
           arm.aupr[row].median > base.aupr[row].median;
}

}  // namespace

void write_summary_markdown(
    const std::filesystem::path& path,
    const std::map<std::string, std::vector<MetricReport>>& reports,
    const std::string& baseline_arm) {
    if (reports.find(baseline_arm) == reports.end()) {
        throw ContractError("write_summary_markdown: baseline arm '" +
                            baseline_arm + "' missing");
    }
    std::map<std::string, ArmAggregate> agg;
    for (const auto& [arm, reps] : reports) agg[arm] = aggregate_arm(reps);
    const ArmAggregate& base = agg.at(baseline_arm);
    for (const auto& [arm, a] : agg) {
        if (a.row_names != base.row_names) {
            throw ContractError("write_summary_markdown: arms disagree on "
                                "classes");
        }
    }
    // Baseline column first, remaining arms in name order.
    std::vector<std::string> arm_order{baseline_arm};
    for (const auto& [arm, a] : agg) {
        if (arm != baseline_arm) arm_order.push_back(arm);
    }

    const MetricReport& first = reports.at(baseline_arm).front();
    std::string md;
    md += "# Augmentation benchmark summary\n\n";
    md += "- config_hash: `" + first.config_hash + "`\n";
    md += "- code_version: " + first.code_version + "\n";
    md += "- test_split_hash: `" + first.test_split_hash + "`\n";
    md += "- seeds per arm: " +
          std::to_string(reports.at(baseline_arm).size()) + "\n";
    char lvl[64];
    std::snprintf(lvl, sizeof(lvl), "- bootstrap: %zu resamples, level %.2f\n",
                  first.bootstrap_resamples, first.bootstrap_level);
    md += lvl;
    md += "\nValues are median (interquartile range) across seeds. An ↑ "
          "marks arms beating the `" + baseline_arm +
          "` median on both AUROC and AUPR for that row.\n";

    auto table = [&](const char* title, bool use_auroc) {
        md += "\n## " + std::string(title) + "\n\n| class |";
        for (const auto& arm : arm_order) md += " " + arm + " |";
        md += "\n|---|";
        for (size_t i = 0; i < arm_order.size(); ++i) md += "---|";
        md += "\n";
        for (size_t row = 0; row < base.row_names.size(); ++row) {
            md += "| " + base.row_names[row] + " |";
            for (const auto& arm : arm_order) {
                const ArmAggregate& a = agg.at(arm);
                const AggregateCell& c =
                    use_auroc ? a.auroc[row] : a.aupr[row];
                md += " " + format_value_ci(c.median, c.q1, c.q3);
                if (arm != baseline_arm && beats_baseline(a, base, row)) {
                    md += " ↑";
                }
                md += " |";
            }
            md += "\n";
        }
    };
    table("AUROC", true);
    table("AUPR", false);

    md += "\n## Accuracy\n\n| metric |";
    for (const auto& arm : arm_order) md += " " + arm + " |";
    md += "\n|---|";
    for (size_t i = 0; i < arm_order.size(); ++i) md += "---|";
    md += "\n| accuracy |";
    for (const auto& arm : arm_order) {
        const AggregateCell& c = agg.at(arm).accuracy;
        md += " " + format_value_ci(c.median, c.q1, c.q3) + " |";
    }
    md += "\n";

    md += "\n## Paired bootstrap p-values vs `" + baseline_arm + "` "
          "(median across seeds)\n\n| arm | macro AUROC p | macro AUPR p |\n"
          "|---|---|---|\n";
    for (const auto& arm : arm_order) {
        if (arm == baseline_arm) continue;
        const ArmAggregate& a = agg.at(arm);
        char buf[64];
        if (a.has_p) {
            std::snprintf(buf, sizeof(buf), "| %s | %.4f | %.4f |\n",
                          arm.c_str(), a.auroc_p.median, a.aupr_p.median);
        } else {
            std::snprintf(buf, sizeof(buf), "| %s | - | - |\n", arm.c_str());
        }
        md += buf;
    }
    write_text_file(path, md);
}

void write_summary_json(
    const std::filesystem::path& path,
    const std::map<std::string, std::vector<MetricReport>>& reports,
    const std::string& baseline_arm) {
    json arms = json::object();
    for (const auto& [arm, reps] : reports) {
        ArmAggregate a = aggregate_arm(reps);
        json rows = json::object();
        for (size_t row = 0; row < a.row_names.size(); ++row) {
            rows[a.row_names[row]] = json{
                {"auroc",
                 json{{"median", a.auroc[row].median},
                      {"q1", a.auroc[row].q1},
                      {"q3", a.auroc[row].q3}}},
                {"aupr",
                 json{{"median", a.aupr[row].median},
                      {"q1", a.aupr[row].q1},
                      {"q3", a.aupr[row].q3}}}};
        }
        json ja{{"rows", rows},
                {"accuracy",
                 json{{"median", a.accuracy.median},
                      {"q1", a.accuracy.q1},
                      {"q3", a.accuracy.q3}}},
                {"seeds", reps.size()}};
        if (a.has_p) {
            ja["paired_vs_baseline"] = json{{"auroc_p_median", a.auroc_p.median},
                                            {"aupr_p_median", a.aupr_p.median}};
        }
        arms[arm] = ja;
    }
    const MetricReport& first = reports.at(baseline_arm).front();
    json j{{"baseline", baseline_arm},
           {"config_hash", first.config_hash},
           {"code_version", first.code_version},
           {"test_split_hash", first.test_split_hash},
           {"arms", arms}};
    write_text_file(path, j.dump(2) + "\n");
}

namespace {

std::string svg_header(size_t w, size_t h) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%zu\" "
                  "height=\"%zu\" viewBox=\"0 0 %zu %zu\" "
                  "font-family=\"sans-serif\">\n",
                  w, h, w, h);
    return buf;
}

const char* kPalette[4] = {"#4477aa", "#ee6677", "#228833", "#ccbb44"};

}  // namespace

void write_macro_bar_svg(const std::filesystem::path& path,
                         const std::string& metric_name,
                         const std::vector<std::string>& arms,
                         const std::vector<AggregateCell>& cells) {
    if (arms.size() != cells.size() || arms.empty()) {
        throw ContractError("write_macro_bar_svg: arm/cell mismatch");
    }
    size_t width = 120 + arms.size() * 110;
    size_t height = 320;
    double plot_x = 70, plot_y = 30, plot_h = 230;
    std::string svg = svg_header(width, height);
    char buf[512];
    // Y axis 0..1 with gridlines every 0.2.
    for (int g = 0; g <= 5; ++g) {
        double v = 0.2 * g;
        double y = plot_y + plot_h * (1.0 - v);
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                      "stroke=\"#ddd\"/>\n"
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" "
                      "text-anchor=\"end\">%.1f</text>\n",
                      plot_x, y, plot_x + arms.size() * 110.0, y, plot_x - 6,
                      y + 4, v);
        svg += buf;
    }
    for (size_t i = 0; i < arms.size(); ++i) {
        double x = plot_x + 20 + static_cast<double>(i) * 110;
        double ym = plot_y + plot_h * (1.0 - cells[i].median);
        double y1 = plot_y + plot_h * (1.0 - cells[i].q1);
        double y3 = plot_y + plot_h * (1.0 - cells[i].q3);
        std::snprintf(
            buf, sizeof(buf),
            "<rect x=\"%.1f\" y=\"%.1f\" width=\"60\" height=\"%.1f\" "
            "fill=\"%s\"/>\n"
            "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
            "stroke=\"#333\" stroke-width=\"2\"/>\n"
            "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" "
            "text-anchor=\"middle\">%s</text>\n"
            "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" "
            "text-anchor=\"middle\">%.3f</text>\n",
            x, ym, plot_y + plot_h - ym, kPalette[i % 4], x + 30, y3, x + 30,
            y1, x + 30, plot_y + plot_h + 18, arms[i].c_str(), x + 30, ym - 6,
            cells[i].median);
        svg += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"18\" font-size=\"13\">%s (median, "
                  "IQR whiskers)</text>\n</svg>\n",
                  plot_x, metric_name.c_str());
    svg += buf;
    write_text_file(path, svg);
}

namespace {

// PR curve points for one class: (recall, precision) after each descending
// score tie group, starting at recall 0 / precision 1.
std::vector<std::pair<double, double>> pr_points(const PredictionTable& t,
                                                 size_t class_idx) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores_for_class(t, class_idx, scores, labels);
    size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<size_t>(l);
    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return scores[a] > scores[b];
    });
    std::vector<std::pair<double, double>> pts{{0.0, 1.0}};
    if (n_pos == 0) return pts;
    size_t seen = 0, seen_pos = 0, i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] == 1) ++seen_pos;
            ++j;
        }
        seen += j - i;
        pts.emplace_back(static_cast<double>(seen_pos) /
                             static_cast<double>(n_pos),
                         static_cast<double>(seen_pos) /
                             static_cast<double>(seen));
        i = j;
    }
    return pts;
}

}  // namespace

void write_pr_curves_svg(
    const std::filesystem::path& path,
    const std::map<std::string, PredictionTable>& arm_preds) {
    if (arm_preds.empty()) {
        throw ContractError("write_pr_curves_svg: no predictions");
    }
    const PredictionTable& first = arm_preds.begin()->second;
    size_t n_cls = first.classes.size();
    size_t panel = 240, pad = 50;
    size_t width = pad + n_cls * (panel + 30);
    size_t height = panel + 110;
    std::string svg = svg_header(width, height);
    char buf[512];

    for (size_t c = 0; c < n_cls; ++c) {
        double x0 = static_cast<double>(pad + c * (panel + 30));
        double y0 = 40;
        std::snprintf(buf, sizeof(buf),
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"%zu\" "
                      "height=\"%zu\" fill=\"none\" stroke=\"#999\"/>\n"
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" "
                      "text-anchor=\"middle\">%s</text>\n",
                      x0, y0, panel, panel, x0 + panel / 2.0, y0 - 8,
                      first.classes[c].c_str());
        svg += buf;
        size_t arm_i = 0;
        for (const auto& [arm, preds] : arm_preds) {
            if (preds.classes != first.classes) {
                throw ContractError("write_pr_curves_svg: arms disagree on "
                                    "classes");
            }
            auto pts = pr_points(preds, c);
            std::string poly;
            for (const auto& [r, p] : pts) {
                std::snprintf(buf, sizeof(buf), "%.2f,%.2f ",
                              x0 + r * static_cast<double>(panel),
                              y0 + (1.0 - p) * static_cast<double>(panel));
                poly += buf;
            }
            std::snprintf(buf, sizeof(buf),
                          "<polyline points=\"%s\" fill=\"none\" "
                          "stroke=\"%s\" stroke-width=\"1.5\"/>\n",
                          poly.c_str(), kPalette[arm_i % 4]);
            svg += buf;
            ++arm_i;
        }
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" "
                      "text-anchor=\"middle\">recall</text>\n",
                      x0 + panel / 2.0, y0 + panel + 16.0);
        svg += buf;
    }
    // Legend.
    size_t arm_i = 0;
    for (const auto& [arm, preds] : arm_preds) {
        double lx = static_cast<double>(pad + arm_i * 160);
        double ly = static_cast<double>(panel + 90);
        std::snprintf(buf, sizeof(buf),
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"14\" height=\"4\" "
                      "fill=\"%s\"/>\n"
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\">%s</text>\n",
                      lx, ly, kPalette[arm_i % 4], lx + 20, ly + 5,
                      arm.c_str());
        svg += buf;
        ++arm_i;
    }
    svg += "</svg>\n";
    write_text_file(path, svg);
}

}  // namespace diffaug
