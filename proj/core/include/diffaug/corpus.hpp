#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "diffaug/image_io.hpp"
#include "diffaug/lexicon.hpp"
#include "diffaug/rng.hpp"

namespace diffaug {

enum class Split { train = 0, val = 1, test = 2 };
enum class Provenance { real, oversampled, synthetic };

const char* split_name(Split s);
Split parse_split(const std::string& s);  // throws FormatError
const char* provenance_name(Provenance p);
Provenance parse_provenance(const std::string& s);

struct ImageRecord {
    std::string path;  // relative to Manifest::root unless absolute
    StructuredPrompt prompt;
    std::string class_label;
    Split split = Split::train;
    Provenance provenance = Provenance::real;

    bool operator==(const ImageRecord&) const = default;
};

struct Manifest {
    std::vector<ImageRecord> records;
    size_t image_size = 32;
    size_t channels = 1;
    std::filesystem::path root;  // directory record paths resolve against
};

struct RowError {
    size_t line;
    std::string message;
};

struct ManifestLoad {
    Manifest manifest;
    std::vector<RowError> row_errors;
};

// CSV columns: path,modality,disease,severity,class,split[,provenance].
// A leading "# image_size=N,channels=C" comment carries the image geometry.
// Invalid rows are collected in row_errors, not thrown; a manifest with zero
// valid rows is a FormatError. Image paths are validated when pixels are
// first read (ImageStore), not at load time.
ManifestLoad load_manifest(const std::filesystem::path& csv,
                           const TermLexicon& lexicon);
void write_manifest(const std::filesystem::path& csv, const Manifest& m);

struct ClassHistogram {
    // class -> counts per split, indexed by Split.
    std::map<std::string, std::array<size_t, 3>> counts;

    size_t total() const;
    size_t split_total(Split s) const;
};

ClassHistogram class_histogram(const Manifest& m);

// Reassigns splits class-by-class with largest-remainder rounding of the
// ratios (non-negative, summing to 1; a zero ratio empties that split).
// Record order is preserved. Deterministic given seed.
Manifest stratified_split(const Manifest& m, std::array<double, 3> ratios,
                          uint64_t seed);

// floor(f_i * total) plus leftover units by descending fractional remainder
// (ties broken by lower index).
std::vector<size_t> largest_remainder(const std::vector<double>& fractions,
                                      size_t total);

struct SyntheticClassSpec {
    std::string name;
    std::string style;  // background: "radial" or "banding"
    std::string motif;  // foreground: "clear", "spots", "rings" or "wedges"
    double fraction;
};

struct SyntheticSpec {
    std::vector<SyntheticClassSpec> classes;
    size_t total = 0;
    uint64_t seed = 0;
    size_t size = 32;
    // Optional split ratios from the spec file; all-train when absent.
    bool do_split = false;
    std::array<double, 3> split_ratios{1.0, 0.0, 0.0};
    // Foreground contrast scale; lower values make classes harder to tell
    // apart. 1.0 is the calibrated default.
    double contrast = 1.0;

    // key=value format, one pair per line; classes as repeated
    // `class = name style motif fraction` lines. '#' starts a comment.
    static SyntheticSpec parse_file(const std::filesystem::path& path);
    static SyntheticSpec parse_text(const std::string& text,
                                    const std::string& origin);
};

// Canonical prompt vocabulary used by the generator.
std::string modality_for_style(const std::string& style);
std::string finding_for_motif(const std::string& motif);

// Writes `images/{class}_{index}.png` files under out_dir and returns the
// matching manifest (root = out_dir, every record split=train,
// provenance=real). Deterministic given spec.seed.
Manifest generate_synthetic_corpus(const SyntheticSpec& spec,
                                   const std::filesystem::path& out_dir);

// Decoded-image cache that records every path it touches, so tests can audit
// which splits a training run actually read.
class ImageStore {
   public:
    const Image& get(const Manifest& m, const ImageRecord& rec);

    const std::set<std::string>& accessed() const { return accessed_; }
    void clear_audit() { accessed_.clear(); }

   private:
    std::map<std::string, Image> cache_;
    std::set<std::string> accessed_;
};

}  // namespace diffaug
