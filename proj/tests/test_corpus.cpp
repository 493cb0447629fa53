#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "diffaug/corpus.hpp"
#include "diffaug/errors.hpp"
#include "diffaug/image_io.hpp"
#include "diffaug/lexicon.hpp"
#include "diffaug/util.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace diffaug;

namespace {

TermLexicon shipped() {
    return TermLexicon::compile(testutil::data_dir() / "lexicon.tsv");
}

const char* kSmallSpec =
    "total = 120\n"
    "size = 32\n"
    "seed = 11\n"
    "contrast = 2.0\n"
    "class = normal radial clear 0.4\n"
    "class = cws radial spots 0.3\n"
    "class = detachment banding wedges 0.3\n";

// Per-image summary used to check that the generated classes are separable
// without training anything: nearest class centroid in z-scored feature
// space.
std::array<double, 6> image_features(const Image& img) {
    double mean = 0.0, mx = -1e9, mn = 1e9;
    for (double p : img.pixels) {
        mean += p;
        mx = std::max(mx, p);
        mn = std::min(mn, p);
    }
    mean /= static_cast<double>(img.pixels.size());
    double var = 0.0;
    for (double p : img.pixels) var += (p - mean) * (p - mean);
    var /= static_cast<double>(img.pixels.size());

    double row_mean_var = 0.0;
    std::vector<double> row_means(img.height);
    for (size_t r = 0; r < img.height; ++r) {
        double s = 0.0;
        for (size_t c = 0; c < img.width; ++c) s += img.at(r, c);
        row_means[r] = s / static_cast<double>(img.width);
    }
    double rm = 0.0;
    for (double v : row_means) rm += v;
    rm /= static_cast<double>(row_means.size());
    for (double v : row_means) row_mean_var += (v - rm) * (v - rm);
    row_mean_var /= static_cast<double>(row_means.size());

    double hgrad = 0.0;
    for (size_t r = 0; r < img.height; ++r) {
        for (size_t c = 0; c + 1 < img.width; ++c) {
            hgrad += std::abs(img.at(r, c + 1) - img.at(r, c));
        }
    }
    hgrad /= static_cast<double>(img.height * (img.width - 1));

    return {mean, std::sqrt(var), mx, mn, std::sqrt(row_mean_var), hgrad};
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("split and provenance tokens round trip") {
    for (Split s : {Split::train, Split::val, Split::test}) {
        CHECK(parse_split(split_name(s)) == s);
    }
    for (Provenance p :
         {Provenance::real, Provenance::oversampled, Provenance::synthetic}) {
        CHECK(parse_provenance(provenance_name(p)) == p);
    }
    CHECK(std::string(split_name(Split::val)) == "val");
    CHECK(std::string(provenance_name(Provenance::oversampled)) ==
          "oversampled");
    CHECK_THROWS_AS(parse_split("validation"), FormatError);
    CHECK_THROWS_AS(parse_provenance("generated"), FormatError);
}

TEST_CASE("manifest fixture loads with frozen class histogram") {
    TermLexicon lex = shipped();
    ManifestLoad load =
        load_manifest(testutil::data_dir() / "fixtures" / "manifest_600.csv",
                      lex);
    CHECK(load.row_errors.empty());
    CHECK(load.manifest.records.size() == 600);
    CHECK(load.manifest.image_size == 32);
    CHECK(load.manifest.channels == 1);
    CHECK(load.manifest.root == testutil::data_dir() / "fixtures");

    ClassHistogram hist = class_histogram(load.manifest);
    REQUIRE(hist.counts.size() == 3);
    CHECK(hist.counts.at("normal") == std::array<size_t, 3>{210, 30, 60});
    CHECK(hist.counts.at("macular hole") == std::array<size_t, 3>{140, 20, 40});
    CHECK(hist.counts.at("retinal vein occlusion") ==
          std::array<size_t, 3>{70, 10, 20});
    CHECK(hist.total() == 600);
    CHECK(hist.split_total(Split::train) == 420);
    CHECK(hist.split_total(Split::val) == 60);
    CHECK(hist.split_total(Split::test) == 120);

    // Without a provenance column every record is real.
    for (const auto& rec : load.manifest.records) {
        CHECK(rec.provenance == Provenance::real);
    }
}

TEST_CASE("manifest rows normalize through the lexicon") {
    TermLexicon lex = shipped();
    ManifestLoad load =
        load_manifest(testutil::data_dir() / "fixtures" / "manifest_600.csv",
                      lex);
    std::set<std::string> prompts;
    for (const auto& rec : load.manifest.records) {
        prompts.insert(rec.prompt.render());
    }
    CHECK(prompts.count("fundus image, normal") == 1);
    CHECK(prompts.count("optical coherence tomography, macular hole") == 1);
    for (const auto& p : prompts) {
        CAPTURE(p);
        CHECK(p.find("fundus image") != std::string::npos ||
              p.find("optical coherence tomography") != std::string::npos);
    }
}

TEST_CASE("manifest collects row errors without dropping good rows") {
    TermLexicon lex = shipped();
    testutil::TempDir tmp;
    std::string csv =
        "# image_size=16,channels=1\n"
        "path,modality,disease,severity,class,split\n"
        "a.png,fundus,normal,,normal,train\n"
        "b.png,fundus,normal,,normal,banana\n"          // bad split token
        "c.png,fundus,normal,,normal\n"                  // 5 columns
        "d.png,chest x-ray,pneumonia,,normal,train\n"    // unmappable modality
        "e.png,slit lamp photo,cataract,,normal,train\n" // excluded modality
        ",fundus,normal,,normal,train\n"                 // empty path
        "f.png,fundus,normal,,,train\n"                  // empty class
        "a.png,fundus,normal,,normal,test\n"             // split conflict
        "a.png,fundus,normal,,normal,train\n"            // same split is fine
        "g.png,optical coherence tomography,macular hole,,mh,val\n";
    write_text_file(tmp.path() / "m.csv", csv);

    ManifestLoad load = load_manifest(tmp.path() / "m.csv", lex);
    CHECK(load.manifest.image_size == 16);
    REQUIRE(load.manifest.records.size() == 3);
    CHECK(load.manifest.records[0].path == "a.png");
    CHECK(load.manifest.records[1].path == "a.png");
    CHECK(load.manifest.records[2].path == "g.png");
    CHECK(load.manifest.records[2].split == Split::val);
    CHECK(load.manifest.records[2].prompt.render() ==
          "optical coherence tomography, macular hole");

    REQUIRE(load.row_errors.size() == 7);
    std::map<size_t, std::string> by_line;
    for (const auto& e : load.row_errors) by_line[e.line] = e.message;
    CHECK(by_line.at(4).find("unknown split token") != std::string::npos);
    CHECK(by_line.at(5).find("expected 6 columns, got 5") != std::string::npos);
    CHECK(by_line.count(6) == 1);   // unmappable
    CHECK(by_line.count(7) == 1);   // excluded modality
    CHECK(by_line.at(8) == "empty path");
    CHECK(by_line.at(9) == "empty class");
    CHECK(by_line.at(10).find("already assigned to split train") !=
          std::string::npos);
}

TEST_CASE("manifest header and empty-file failures") {
    TermLexicon lex = shipped();
    testutil::TempDir tmp;

    write_text_file(tmp.path() / "noheader.csv",
                    "a.png,fundus,normal,,normal,train\n");
    CHECK_THROWS_AS(load_manifest(tmp.path() / "noheader.csv", lex),
                    FormatError);

    write_text_file(tmp.path() / "empty.csv", "");
    CHECK_THROWS_AS(load_manifest(tmp.path() / "empty.csv", lex), FormatError);

    // Header present but every row invalid.
    write_text_file(tmp.path() / "allbad.csv",
                    "path,modality,disease,severity,class,split\n"
                    "a.png,fundus,normal,,normal,nope\n");
    CHECK_THROWS_AS(load_manifest(tmp.path() / "allbad.csv", lex), FormatError);

    CHECK_THROWS_AS(load_manifest(tmp.path() / "missing.csv", lex), IoError);
}

TEST_CASE("manifest with provenance column parses and rejects bad tokens") {
    TermLexicon lex = shipped();
    testutil::TempDir tmp;
    std::string csv =
        "path,modality,disease,severity,class,split,provenance\n"
        "a.png,fundus,normal,,normal,train,real\n"
        "b.png,fundus,normal,,normal,train,synthetic\n"
        "c.png,fundus,normal,,normal,train,oversampled\n"
        "d.png,fundus,normal,,normal,train,fake\n"
        "e.png,fundus,normal,,normal,train\n";  // 6 cols in a 7-col file
    write_text_file(tmp.path() / "m.csv", csv);
    ManifestLoad load = load_manifest(tmp.path() / "m.csv", lex);
    REQUIRE(load.manifest.records.size() == 3);
    CHECK(load.manifest.records[0].provenance == Provenance::real);
    CHECK(load.manifest.records[1].provenance == Provenance::synthetic);
    CHECK(load.manifest.records[2].provenance == Provenance::oversampled);
    REQUIRE(load.row_errors.size() == 2);
    CHECK(load.row_errors[0].message.find("unknown provenance token") !=
          std::string::npos);
    CHECK(load.row_errors[1].message.find("expected 7 columns, got 6") !=
          std::string::npos);
}

TEST_CASE("manifest write and reload round trips records") {
    TermLexicon lex = shipped();
    ManifestLoad orig =
        load_manifest(testutil::data_dir() / "fixtures" / "manifest_600.csv",
                      lex);
    testutil::TempDir tmp;
    Manifest m = orig.manifest;
    m.records[5].provenance = Provenance::synthetic;
    m.records[6].provenance = Provenance::oversampled;
    write_manifest(tmp.path() / "out.csv", m);

    ManifestLoad again = load_manifest(tmp.path() / "out.csv", lex);
    CHECK(again.row_errors.empty());
    REQUIRE(again.manifest.records.size() == m.records.size());
    CHECK(again.manifest.image_size == m.image_size);
    CHECK(again.manifest.channels == m.channels);
    for (size_t i = 0; i < m.records.size(); ++i) {
        CAPTURE(i);
        CHECK(again.manifest.records[i] == m.records[i]);
    }

    // A rewrite of the reloaded manifest is byte-identical.
    write_manifest(tmp.path() / "out2.csv", again.manifest);
    CHECK(read_text_file(tmp.path() / "out2.csv") ==
          read_text_file(tmp.path() / "out.csv"));
}

TEST_CASE("largest remainder rounding matches hand-worked cases") {
    CHECK(largest_remainder({1.0}, 7) == std::vector<size_t>{7});
    // Equal remainders break ties toward the lower index.
    CHECK(largest_remainder({1.0 / 3, 1.0 / 3, 1.0 / 3}, 10) ==
          std::vector<size_t>{4, 3, 3});
    CHECK(largest_remainder({0.5, 0.25, 0.25}, 2) ==
          std::vector<size_t>{1, 1, 0});
    CHECK(largest_remainder({0.49, 0.49, 0.02}, 500) ==
          std::vector<size_t>{245, 245, 10});
    CHECK(largest_remainder({0.8, 0.1, 0.1}, 300) ==
          std::vector<size_t>{240, 30, 30});
    CHECK(largest_remainder({0.0, 1.0, 0.0}, 5) ==
          std::vector<size_t>{0, 5, 0});
    CHECK(largest_remainder({0.7, 0.3}, 0) == std::vector<size_t>{0, 0});
    CHECK_THROWS_AS(largest_remainder({-0.1, 1.1}, 10), ContractError);

    // Counts always sum to the requested total.
    for (size_t total : {1u, 17u, 100u, 999u}) {
        auto counts = largest_remainder({0.55, 0.1, 0.35}, total);
        size_t sum = 0;
        for (size_t c : counts) sum += c;
        CHECK(sum == total);
    }
}

TEST_CASE("stratified split hits exact per-class quotas") {
    TermLexicon lex = shipped();
    ManifestLoad load =
        load_manifest(testutil::data_dir() / "fixtures" / "manifest_600.csv",
                      lex);

    Manifest split = stratified_split(load.manifest, {0.8, 0.1, 0.1}, 13);
    ClassHistogram hist = class_histogram(split);
    CHECK(hist.counts.at("normal") == std::array<size_t, 3>{240, 30, 30});
    CHECK(hist.counts.at("macular hole") == std::array<size_t, 3>{160, 20, 20});
    CHECK(hist.counts.at("retinal vein occlusion") ==
          std::array<size_t, 3>{80, 10, 10});

    // Record order and everything except the split is untouched.
    REQUIRE(split.records.size() == load.manifest.records.size());
    for (size_t i = 0; i < split.records.size(); ++i) {
        CHECK(split.records[i].path == load.manifest.records[i].path);
        CHECK(split.records[i].class_label ==
              load.manifest.records[i].class_label);
        CHECK(split.records[i].provenance ==
              load.manifest.records[i].provenance);
    }

    // Deterministic in the seed, and different seeds shuffle differently.
    Manifest again = stratified_split(load.manifest, {0.8, 0.1, 0.1}, 13);
    CHECK(again.records == split.records);
    Manifest other = stratified_split(load.manifest, {0.8, 0.1, 0.1}, 14);
    ClassHistogram other_hist = class_histogram(other);
    CHECK(other_hist.counts == hist.counts);
    CHECK(other.records != split.records);
}

TEST_CASE("stratified split honors zero ratios and validates input") {
    TermLexicon lex = shipped();
    ManifestLoad load =
        load_manifest(testutil::data_dir() / "fixtures" / "manifest_600.csv",
                      lex);

    Manifest no_val = stratified_split(load.manifest, {0.9, 0.0, 0.1}, 3);
    ClassHistogram hist = class_histogram(no_val);
    CHECK(hist.split_total(Split::val) == 0);
    CHECK(hist.counts.at("normal") == std::array<size_t, 3>{270, 0, 30});

    CHECK_THROWS_AS(
        stratified_split(load.manifest, {1.1, -0.1, 0.0}, 3), ConfigError);
    CHECK_THROWS_AS(
        stratified_split(load.manifest, {0.5, 0.3, 0.3}, 3), ConfigError);

    Manifest tiny;
    for (size_t i = 0; i < 2; ++i) {
        ImageRecord rec;
        rec.path = "t" + std::to_string(i) + ".png";
        rec.class_label = "only";
        tiny.records.push_back(rec);
    }
    CHECK_THROWS_AS(stratified_split(tiny, {0.8, 0.1, 0.1}, 3), ContractError);
}

TEST_CASE("synthetic spec parser validates structure") {
    SyntheticSpec spec = SyntheticSpec::parse_text(kSmallSpec, "inline");
    CHECK(spec.total == 120);
    CHECK(spec.size == 32);
    CHECK(spec.seed == 11);
    CHECK(spec.contrast == doctest::Approx(2.0));
    CHECK_FALSE(spec.do_split);
    REQUIRE(spec.classes.size() == 3);
    CHECK(spec.classes[1].name == "cws");
    CHECK(spec.classes[1].style == "radial");
    CHECK(spec.classes[1].motif == "spots");
    CHECK(spec.classes[1].fraction == doctest::Approx(0.3));

    SyntheticSpec with_split = SyntheticSpec::parse_text(
        "total = 30\nseed = 1\nsplit = 0.6 0.2 0.2\n"
        "class = a radial clear 1.0\n",
        "inline");
    CHECK(with_split.do_split);
    CHECK(with_split.split_ratios ==
          std::array<double, 3>{0.6, 0.2, 0.2});

    CHECK_THROWS_AS(SyntheticSpec::parse_text("total = 10\n", "x"),
                    ConfigError);  // no classes
    CHECK_THROWS_AS(
        SyntheticSpec::parse_text(
            "total = 10\nclass = a radial clear 0.5\n", "x"),
        ConfigError);  // fractions sum != 1
    CHECK_THROWS_AS(
        SyntheticSpec::parse_text(
            "total = 10\nclass = a radial clear 0.5\n"
            "class = a banding wedges 0.5\n",
            "x"),
        ConfigError);  // duplicate class
    CHECK_THROWS_AS(
        SyntheticSpec::parse_text(
            "total = 10\nclass = a watercolor clear 1.0\n", "x"),
        ConfigError);  // unknown style
    CHECK_THROWS_AS(
        SyntheticSpec::parse_text(
            "total = 10\nclass = a radial sparkles 1.0\n", "x"),
        ConfigError);  // unknown motif
    CHECK_THROWS_AS(
        SyntheticSpec::parse_text(
            "total = 1\nclass = a radial clear 0.5\n"
            "class = b radial clear 0.5\n",
            "x"),
        ConfigError);  // total below class count
    CHECK_THROWS_AS(
        SyntheticSpec::parse_text(
            "total = 10\nsize = 4\nclass = a radial clear 1.0\n", "x"),
        ConfigError);  // size too small
    CHECK_THROWS_AS(SyntheticSpec::parse_text("total banana\n", "x"),
                    ConfigError);  // not key = value
    CHECK_THROWS_AS(SyntheticSpec::parse_text("total = banana\n", "x"),
                    ConfigError);  // unparsable number
    CHECK_THROWS_AS(SyntheticSpec::parse_text(
                        "bogus = 1\nclass = a radial clear 1.0\n", "x"),
                    ConfigError);  // unknown key
}

TEST_CASE("generator prompt vocabulary is fixed") {
    CHECK(modality_for_style("radial") == "fundus image");
    CHECK(modality_for_style("banding") == "optical coherence tomography");
    CHECK(finding_for_motif("clear") == "normal");
    CHECK(finding_for_motif("spots") == "cotton-wool spots");
    CHECK(finding_for_motif("rings") == "laser scars");
    CHECK(finding_for_motif("wedges") == "retinal detachment");
    CHECK_THROWS_AS(modality_for_style("cubist"), ConfigError);
    CHECK_THROWS_AS(finding_for_motif("stripes"), ConfigError);
}

TEST_CASE("synthetic corpus generation is byte-stable") {
    SyntheticSpec spec = SyntheticSpec::parse_text(kSmallSpec, "inline");
    spec.total = 30;
    testutil::TempDir tmp;
    Manifest a = generate_synthetic_corpus(spec, tmp.path() / "a");
    Manifest b = generate_synthetic_corpus(spec, tmp.path() / "b");

    REQUIRE(a.records.size() == 30);
    CHECK(a.image_size == 32);
    ClassHistogram hist = class_histogram(a);
    CHECK(hist.counts.at("normal")[0] == 12);
    CHECK(hist.counts.at("cws")[0] == 9);
    CHECK(hist.counts.at("detachment")[0] == 9);

    REQUIRE(b.records.size() == a.records.size());
    for (size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].path == b.records[i].path);
        CHECK(read_binary_file(tmp.path() / "a" / a.records[i].path) ==
              read_binary_file(tmp.path() / "b" / b.records[i].path));
    }

    // Every record trains as real data, prompts follow the style/motif maps.
    for (const auto& rec : a.records) {
        CHECK(rec.split == Split::train);
        CHECK(rec.provenance == Provenance::real);
    }
    CHECK(a.records[0].prompt.render() == "fundus image, normal");
    CHECK(a.records[12].prompt.render() == "fundus image, cotton-wool spots");
    CHECK(a.records[21].prompt.render() ==
          "optical coherence tomography, retinal detachment");

    // File names carry the class and a running global index.
    CHECK(a.records[0].path == "images/normal_000000.png");
    CHECK(a.records[12].path == "images/cws_000012.png");
    CHECK(a.records[29].path == "images/detachment_000029.png");
}

TEST_CASE("generated classes separate in feature space") {
    SyntheticSpec spec = SyntheticSpec::parse_text(kSmallSpec, "inline");
    spec.total = 240;
    testutil::TempDir tmp;
    Manifest m = generate_synthetic_corpus(spec, tmp.path() / "c");

    std::vector<std::array<double, 6>> feats;
    std::vector<std::string> labels;
    ImageStore store;
    for (const auto& rec : m.records) {
        feats.push_back(image_features(store.get(m, rec)));
        labels.push_back(rec.class_label);
    }

    // z-score each feature, then classify by nearest class centroid.
    for (size_t f = 0; f < 6; ++f) {
        double mean = 0.0;
        for (const auto& v : feats) mean += v[f];
        mean /= static_cast<double>(feats.size());
        double var = 0.0;
        for (const auto& v : feats) var += (v[f] - mean) * (v[f] - mean);
        double sd = std::sqrt(var / static_cast<double>(feats.size()));
        for (auto& v : feats) v[f] = (v[f] - mean) / (sd > 0 ? sd : 1.0);
    }
    std::map<std::string, std::array<double, 6>> centroid;
    std::map<std::string, size_t> n;
    for (size_t i = 0; i < feats.size(); ++i) {
        auto& c = centroid[labels[i]];
        for (size_t f = 0; f < 6; ++f) c[f] += feats[i][f];
        n[labels[i]]++;
    }
    for (auto& [cls, c] : centroid) {
        for (double& v : c) v /= static_cast<double>(n[cls]);
    }
    size_t correct = 0;
    for (size_t i = 0; i < feats.size(); ++i) {
        std::string best;
        double best_d = 1e18;
        for (const auto& [cls, c] : centroid) {
            double d = 0.0;
            for (size_t f = 0; f < 6; ++f) {
                d += (feats[i][f] - c[f]) * (feats[i][f] - c[f]);
            }
            if (d < best_d) {
                best_d = d;
                best = cls;
            }
        }
        if (best == labels[i]) ++correct;
    }
    double acc =
        static_cast<double>(correct) / static_cast<double>(feats.size());
    CAPTURE(acc);
    CHECK(acc > 0.95);
}

TEST_CASE("image store caches, audits, and validates geometry") {
    SyntheticSpec spec = SyntheticSpec::parse_text(kSmallSpec, "inline");
    spec.total = 6;
    testutil::TempDir tmp;
    Manifest m = generate_synthetic_corpus(spec, tmp.path() / "imgs");

    ImageStore store;
    const Image& first = store.get(m, m.records[0]);
    CHECK(first.height == 32);
    CHECK(first.width == 32);
    CHECK(store.accessed().size() == 1);

    // Cached: the same record returns the same object.
    const Image& again = store.get(m, m.records[0]);
    CHECK(&again == &first);
    CHECK(store.accessed().size() == 1);

    store.get(m, m.records[1]);
    CHECK(store.accessed().size() == 2);
    store.clear_audit();
    CHECK(store.accessed().empty());

    ImageRecord missing = m.records[0];
    missing.path = "images/nope.png";
    CHECK_THROWS_AS(store.get(m, missing), IoError);

    // Geometry mismatch between manifest and pixels is an error.
    Manifest wrong = m;
    wrong.image_size = 64;
    ImageStore fresh;
    CHECK_THROWS_AS(fresh.get(wrong, wrong.records[0]), FormatError);
}

}  // TEST_SUITE
