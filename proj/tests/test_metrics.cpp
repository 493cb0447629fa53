#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "diffaug/errors.hpp"
#include "diffaug/metrics.hpp"
#include "diffaug/rng.hpp"
#include "diffaug/util.hpp"
#include "doctest.h"
#include "metric_refs.hpp"
#include "test_util.hpp"

using namespace diffaug;

namespace {

void random_scored_set(Rng& rng, size_t max_n, std::vector<double>& scores,
                       std::vector<int>& labels) {
    size_t n = 2 + rng.index(max_n - 1);
    scores.resize(n);
    labels.resize(n);
    bool saw_pos = false, saw_neg = false;
    for (size_t i = 0; i < n; ++i) {
        // Coarse quantization forces plenty of tied scores.
        scores[i] = rng.index(2) ? rng.uniform()
                                 : std::round(rng.uniform() * 8.0) / 8.0;
        labels[i] = rng.uniform() < 0.4 ? 1 : 0;
        saw_pos |= labels[i] == 1;
        saw_neg |= labels[i] == 0;
    }
    if (!saw_pos) labels[0] = 1;
    if (!saw_neg) labels[n - 1] = 0;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("auroc equals brute-force pair counting on random sets") {
    Rng rng(41);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int rep = 0; rep < 40; ++rep) {
        random_scored_set(rng, 200, scores, labels);
        CHECK(std::abs(auroc(scores, labels) -
                       metric_refs::brute_auroc(scores, labels)) < 1e-12);
    }
}

TEST_CASE("auroc known values and degenerate inputs") {
    CHECK(auroc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
    CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);
    CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}) == 0.5);
    CHECK(auroc({0.7, 0.4, 0.5}, {1, 0, 0}) ==
          doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), UndefinedMetricError);
    CHECK_THROWS_AS(auroc({0.1, 0.2}, {0, 0}), UndefinedMetricError);
    CHECK_THROWS_AS(auroc({}, {}), UndefinedMetricError);
}

TEST_CASE("average precision matches hand-computed sweeps") {
    CHECK(average_precision({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 1}) ==
          doctest::Approx(29.0 / 36.0).epsilon(1e-14));
    CHECK(average_precision({0.9, 0.8, 0.7}, {1, 1, 0}) == 1.0);
    CHECK(average_precision({0.9, 0.8, 0.7}, {0, 0, 1}) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(average_precision({0.5, 0.5}, {1, 0}) == 0.5);
    CHECK(average_precision({0.7, 0.5, 0.5, 0.3}, {1, 1, 0, 0}) ==
          doctest::Approx(5.0 / 6.0).epsilon(1e-14));
    CHECK(average_precision({0.9, 0.8, 0.7, 0.6, 0.5}, {0, 1, 0, 1, 1}) ==
          doctest::Approx(8.0 / 15.0).epsilon(1e-14));
    CHECK(average_precision({0.4, 0.4, 0.4, 0.4, 0.4}, {1, 1, 0, 0, 0}) ==
          doctest::Approx(0.4).epsilon(1e-14));
    CHECK(average_precision({0.9, 0.1, 0.1}, {1, 0, 0}) == 1.0);
    CHECK_THROWS_AS(average_precision({0.1, 0.2}, {0, 0}),
                    UndefinedMetricError);

    Rng rng(43);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int rep = 0; rep < 40; ++rep) {
        random_scored_set(rng, 200, scores, labels);
        CHECK(std::abs(average_precision(scores, labels) -
                       metric_refs::sweep_ap(scores, labels)) < 1e-12);
    }
}

TEST_CASE("bootstrap is deterministic, stratified and clamped") {
    Rng rng(47);
    std::vector<double> scores(120);
    std::vector<int> labels(120);
    for (size_t i = 0; i < 120; ++i) {
        labels[i] = i < 30 ? 1 : 0;
        scores[i] = (labels[i] ? 0.6 : 0.4) + 0.3 * rng.normal();
    }
    MetricFn metric = [](const std::vector<double>& s,
                         const std::vector<int>& l) { return auroc(s, l); };

    BootstrapCI a = bootstrap_ci(metric, scores, labels, 300, 0.95, 9);
    BootstrapCI b = bootstrap_ci(metric, scores, labels, 300, 0.95, 9);
    CHECK(a.point == b.point);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
    BootstrapCI c = bootstrap_ci(metric, scores, labels, 300, 0.95, 10);
    CHECK((c.lo != a.lo || c.hi != a.hi));
    CHECK(a.lo <= a.point);
    CHECK(a.point <= a.hi);
    CHECK(a.point == metric(scores, labels));
    CHECK(a.resamples == 300);

    // Every resample must preserve the original class counts.
    MetricFn strat_probe = [&](const std::vector<double>& s,
                               const std::vector<int>& l) {
        size_t pos = 0;
        for (int v : l) pos += (v == 1);
        if (pos != 30 || l.size() != 120)
            throw UndefinedMetricError("stratification violated");
        return auroc(s, l);
    };
    CHECK_NOTHROW(bootstrap_ci(strat_probe, scores, labels, 200, 0.9, 3));

    // A narrower level nests inside a wider one on the same resamples.
    BootstrapCI wide = bootstrap_ci(metric, scores, labels, 400, 0.99, 5);
    BootstrapCI narrow = bootstrap_ci(metric, scores, labels, 400, 0.8, 5);
    CHECK(wide.lo <= narrow.lo);
    CHECK(narrow.hi <= wide.hi);
}

TEST_CASE("bootstrap failure budget is 1 percent") {
    std::vector<double> scores{0.9, 0.8, 0.3, 0.2, 0.7, 0.1};
    std::vector<int> labels{1, 1, 0, 0, 1, 0};
    size_t calls = 0;
    MetricFn flaky_ok = [&](const std::vector<double>& s,
                            const std::vector<int>& l) {
        ++calls;
        if (calls > 1 && calls % 400 == 0)  // 0.25% of resamples
            throw UndefinedMetricError("occasional");
        return auroc(s, l);
    };
    CHECK_NOTHROW(bootstrap_ci(flaky_ok, scores, labels, 800, 0.95, 1));

    size_t calls2 = 0;
    MetricFn flaky_bad = [&](const std::vector<double>& s,
                             const std::vector<int>& l) {
        ++calls2;
        if (calls2 > 1 && calls2 % 20 == 0)  // 5% of resamples
            throw UndefinedMetricError("frequent");
        return auroc(s, l);
    };
    CHECK_THROWS_AS(bootstrap_ci(flaky_bad, scores, labels, 800, 0.95, 1),
                    UndefinedMetricError);
}

TEST_CASE("paired bootstrap p-value properties") {
    MetricFn metric = [](const std::vector<double>& s,
                         const std::vector<int>& l) { return auroc(s, l); };
    Rng rng(53);
    std::vector<double> a(80), b(80);
    std::vector<int> labels(80);
    for (size_t i = 0; i < 80; ++i) {
        labels[i] = i < 25 ? 1 : 0;
        a[i] = (labels[i] ? 0.9 : 0.1) + 0.05 * rng.normal();  // near-perfect
        b[i] = rng.uniform();                                  // noise
    }

    CHECK(paired_bootstrap_p(metric, a, a, labels, 500, 7) == 1.0);
    double pab = paired_bootstrap_p(metric, a, b, labels, 500, 7);
    double pba = paired_bootstrap_p(metric, b, a, labels, 500, 7);
    CHECK(pab == pba);  // two-sided symmetry
    CHECK(pab < 0.05);
    CHECK(paired_bootstrap_p(metric, a, b, labels, 500, 7) == pab);
    CHECK(pab >= 0.0);
    CHECK(pab <= 1.0);
}

TEST_CASE("weighted kappa matches a hand-derived table and the paper bands") {
    // k=3, quadratic weights (i-j)^2/4. Disagreements: one (1,2) and one
    // (1,3) in 8 pairs: Do = 1.25/8; marginal expectation De = 0.359375;
    // kappa = 1 - Do/De = 13/23.
    std::vector<size_t> r1{1, 2, 3, 1, 2, 3, 1, 1};
    std::vector<size_t> r2{1, 2, 3, 1, 2, 3, 2, 3};
    KappaResult k = weighted_kappa(r1, r2, 3);
    CHECK(k.kappa == doctest::Approx(13.0 / 23.0).epsilon(1e-14));
    CHECK(k.band == KappaBand::moderate);
    CHECK_FALSE(k.degenerate);

    KappaResult sym = weighted_kappa(r2, r1, 3);
    CHECK(sym.kappa == k.kappa);

    std::vector<size_t> mixed{1, 3, 2, 2, 1, 3};
    KappaResult ident = weighted_kappa(mixed, mixed, 3);
    CHECK(ident.kappa == 1.0);
    CHECK_FALSE(ident.degenerate);

    std::vector<size_t> flat{2, 2, 2, 2};
    KappaResult degen = weighted_kappa(flat, flat, 3);
    CHECK(degen.kappa == 1.0);
    CHECK(degen.degenerate);

    CHECK(kappa_band(0.870) == KappaBand::almost_perfect);
    CHECK(kappa_band(0.80) == KappaBand::almost_perfect);
    CHECK(kappa_band(0.799) == KappaBand::substantial);
    CHECK(kappa_band(0.60) == KappaBand::substantial);
    CHECK(kappa_band(0.40) == KappaBand::moderate);
    CHECK(kappa_band(0.399) == KappaBand::below_moderate);
    CHECK(kappa_band(-0.2) == KappaBand::below_moderate);
    CHECK(std::string(kappa_band_name(KappaBand::almost_perfect)) ==
          "almost_perfect");

    CHECK_THROWS(weighted_kappa({1, 2}, {1}, 3));       // length mismatch
    CHECK_THROWS(weighted_kappa({1, 4}, {1, 2}, 3));    // out of range
    CHECK_THROWS(weighted_kappa({1}, {1}, 3));          // too few pairs
    CHECK_THROWS(weighted_kappa({1, 2}, {1, 2}, 1));    // scale too small
}

TEST_CASE("human evaluation summary reproduces the fixture numbers") {
    std::ifstream in(testutil::data_dir() / "fixtures" / "human_eval.tsv");
    REQUIRE(in.good());
    std::vector<size_t> scores;
    std::vector<RaterTally> raters;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto parts = split(line, '\t');
        if (parts[0] == "score") {
            scores.push_back(std::stoul(parts[1]));
        } else if (parts[0] == "turing") {
            raters.push_back({std::stoul(parts[2]), std::stoul(parts[3])});
        }
    }
    REQUIRE(scores.size() == 50);
    REQUIRE(raters.size() == 2);

    HumanEvalSummary s = summarize_human_eval(scores, raters);
    CHECK(s.n_scores == 50);
    CHECK(s.score_mean == doctest::Approx(1.94).epsilon(1e-12));
    CHECK(s.score_sd == doctest::Approx(1.1501552690211627).epsilon(1e-12));
    CHECK(s.judged_real == 64);
    CHECK(s.total == 100);
    CHECK(s.proportion == doctest::Approx(0.64).epsilon(1e-12));
    CHECK(s.rater_mean == doctest::Approx(0.64).epsilon(1e-12));
    CHECK(s.rater_sd ==
          doctest::Approx(0.028284271247461926).epsilon(1e-9));

    HumanEvalSummary only_scores = summarize_human_eval(scores, {});
    CHECK(only_scores.total == 0);
    CHECK(only_scores.score_mean == doctest::Approx(1.94).epsilon(1e-12));
    CHECK_THROWS(summarize_human_eval({}, {}));
}

TEST_CASE("prediction tables round-trip and derive per-class scores") {
    testutil::TempDir tmp;
    auto csv = tmp.path / "preds.csv";
    write_text_file(csv,
                    "path,true_class,p_apple,p_pear\n"
                    "a.png,apple,0.75,0.25\n"
                    "b.png,pear,0.4,0.6\n"
                    "c.png,apple,0.3,0.7\n");
    PredictionTable t = read_predictions(csv);
    REQUIRE(t.classes == std::vector<std::string>{"apple", "pear"});
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0].path == "a.png");
    CHECK(t.rows[0].probs == std::vector<double>{0.75, 0.25});

    std::vector<double> scores;
    std::vector<int> labels;
    scores_for_class(t, 0, scores, labels);
    CHECK(scores == std::vector<double>{0.75, 0.4, 0.3});
    CHECK(labels == std::vector<int>{1, 0, 1});

    CHECK(accuracy(t) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

    write_text_file(csv, "path,wrong\n");
    CHECK_THROWS_AS(read_predictions(csv), FormatError);
}

}  // TEST_SUITE
