#include <fstream>
#include <string>
#include <vector>

#include "diffaug/errors.hpp"
#include "diffaug/lexicon.hpp"
#include "diffaug/util.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace diffaug;

namespace {

TermLexicon shipped() {
    return TermLexicon::compile(testutil::data_dir() / "lexicon.tsv");
}

struct LabelRow {
    std::string raw;
    std::string expected;
};

std::vector<LabelRow> label_fixtures() {
    std::ifstream in(testutil::data_dir() / "fixtures" / "raw_labels.tsv");
    REQUIRE(in.good());
    std::vector<LabelRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto parts = split(line, '\t');
        REQUIRE(parts.size() == 2);
        rows.push_back({parts[0], parts[1]});
    }
    return rows;
}

}  // namespace

TEST_SUITE("lexicon") {

TEST_CASE("the shipped lexicon compiles with sorted rules") {
    TermLexicon lex = shipped();
    CHECK(lex.rules().size() == 40);
    CHECK(lex.exclusion_patterns().size() == 3);
    for (size_t i = 1; i < lex.rules().size(); ++i) {
        const auto& a = lex.rules()[i - 1];
        const auto& b = lex.rules()[i];
        bool ordered = a.field < b.field ||
                       (a.field == b.field && a.priority < b.priority);
        CHECK(ordered);
    }
    auto terms = lex.canonical_terms();
    CHECK(terms.size() == 40);
    CHECK(std::is_sorted(terms.begin(), terms.end()));
}

TEST_CASE("every fixture label normalizes to its expected prompt") {
    TermLexicon lex = shipped();
    auto rows = label_fixtures();
    REQUIRE(rows.size() == 28);
    for (const auto& row : rows) {
        CAPTURE(row.raw);
        StructuredPrompt p = lex.normalize(row.raw);
        CHECK(p.render() == row.expected);
    }
}

TEST_CASE("normalization is idempotent on every fixture") {
    TermLexicon lex = shipped();
    for (const auto& row : label_fixtures()) {
        CAPTURE(row.expected);
        StructuredPrompt again = lex.normalize(row.expected);
        CHECK(again.render() == row.expected);
    }
}

TEST_CASE("severity qualifying a finding is not double-reported") {
    TermLexicon lex = shipped();
    StructuredPrompt p = lex.normalize("fundus photo, severe NPDR");
    CHECK(p.render() == "fundus image, severe diabetic retinopathy");
    CHECK_FALSE(p.severity.has_value());

    StructuredPrompt q = lex.normalize("fundus photo, severe cataract");
    CHECK(q.severity.has_value());
    CHECK(*q.severity == "severe");
}

TEST_CASE("excluded modalities and unmappable records raise typed errors") {
    TermLexicon lex = shipped();
    CHECK_THROWS_AS(lex.normalize("slit lamp photo of cataract"),
                    ExcludedModalityError);
    CHECK_THROWS_AS(lex.normalize("histological section of retina"),
                    ExcludedModalityError);
    CHECK_THROWS_AS(lex.normalize("b-scan ultrasound, retinal detachment"),
                    ExcludedModalityError);
    CHECK_THROWS_AS(lex.normalize("chest x-ray, pneumonia"),
                    UnmappableRecordError);
    CHECK_THROWS_AS(lex.normalize(""), UnmappableRecordError);
}

TEST_CASE("matching is case-insensitive and findings keep priority order") {
    TermLexicon lex = shipped();
    StructuredPrompt a = lex.normalize("FUNDUS: DRUSEN AND NORMAL-LOOKING disc");
    CHECK(a.modality == "fundus image");
    REQUIRE(a.findings.size() == 2);
    // priority 10 (normal) sorts before priority 110 (drusen).
    CHECK(a.findings[0] == "normal");
    CHECK(a.findings[1] == "drusen");

    // The same canonical term is reported once no matter how often it hits.
    StructuredPrompt b =
        lex.normalize("fundus, drusen, drusen everywhere, more drusen");
    CHECK(b.findings == std::vector<std::string>{"drusen"});
}

TEST_CASE("compile_text validates grammar, priorities and patterns") {
    const char* ok =
        "modality\t10\tx-ray\tx-ray\n"
        "finding\t10\t(?i)Pneumonia\tpneumonia\n";
    TermLexicon lex = TermLexicon::compile_text(ok, "inline");
    CHECK(lex.rules().size() == 2);
    // The (?i) prefix is accepted and stripped; matching is already
    // case-insensitive.
    StructuredPrompt p = lex.normalize("X-RAY with PNEUMONIA");
    CHECK(p.render() == "x-ray, pneumonia");

    CHECK_THROWS_AS(TermLexicon::compile_text(
                        "modality\t10\ta\ta\nmodality\t10\tb\tb\n", "dup"),
                    FormatError);
    CHECK_THROWS_AS(TermLexicon::compile_text("bogus\t10\ta\ta\n", "field"),
                    FormatError);
    CHECK_THROWS_AS(TermLexicon::compile_text("modality\tten\ta\ta\n", "pri"),
                    FormatError);
    CHECK_THROWS_AS(TermLexicon::compile_text("modality\t10\t[a\ta\n", "re"),
                    FormatError);
    CHECK_THROWS_AS(TermLexicon::compile_text("modality\t10\ta\tA\n", "case"),
                    FormatError);
    CHECK_THROWS_AS(TermLexicon::compile_text("modality\t10\ta\n", "cols"),
                    FormatError);
    CHECK_THROWS_AS(
        TermLexicon::compile_text("finding\t10\ta\ta\n", "nomodality"),
        FormatError);
}

TEST_CASE("term counting and rare-term filtering") {
    TermLexicon lex = shipped();
    std::vector<StructuredPrompt> prompts = {
        lex.normalize("fundus, drusen"),
        lex.normalize("fundus, drusen and hard exudates"),
        lex.normalize("oct, macular hole"),
    };
    VocabularyStats stats = count_terms(prompts);
    CHECK(stats.counts.at("fundus image") == 2);
    CHECK(stats.counts.at("drusen") == 2);
    CHECK(stats.counts.at("hard exudates") == 1);
    CHECK(stats.counts.at("oct") == 1);
    CHECK(stats.counts.at("macular hole") == 1);
    CHECK(stats.excluded.empty());

    // count == min_count is retained; only strictly rarer terms move.
    VocabularyStats f2 = filter_rare(stats, 2);
    CHECK(f2.counts.count("drusen") == 1);
    CHECK(f2.counts.count("hard exudates") == 0);
    CHECK(f2.counts.at("fundus image") == 2);
    bool found = false;
    for (const auto& [term, reason] : f2.excluded)
        if (term == "hard exudates") {
            found = true;
            CHECK(reason == "below_min_count");
        }
    CHECK(found);

    // Raising the threshold never brings a term back.
    VocabularyStats f3 = filter_rare(stats, 3);
    CHECK(f3.counts.empty());
    CHECK(f3.excluded.size() == 5);
}

TEST_CASE("the term histogram fixture filters at the documented boundary") {
    std::ifstream in(testutil::data_dir() / "fixtures" / "term_histogram.tsv");
    REQUIRE(in.good());
    VocabularyStats stats;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto parts = split(line, '\t');
        REQUIRE(parts.size() == 2);
        stats.counts[parts[0]] = std::stoul(parts[1]);
    }
    REQUIRE(stats.counts.size() == 100);

    VocabularyStats filtered = filter_rare(stats, 30);
    size_t want_keep = 0;
    for (const auto& [term, count] : stats.counts)
        if (count >= 30) ++want_keep;
    CHECK(filtered.counts.size() == want_keep);
    CHECK(filtered.excluded.size() == 100 - want_keep);
    for (const auto& [term, count] : filtered.counts) {
        CHECK(count >= 30);
        CHECK(count == stats.counts.at(term));
    }
}

}  // TEST_SUITE
