#include "diffaug/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "diffaug/errors.hpp"
#include "diffaug/util.hpp"

namespace diffaug {

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw FormatError("unknown split token '" + s + "'");
}

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::real: return "real";
        case Provenance::oversampled: return "oversampled";
        case Provenance::synthetic: return "synthetic";
    }
    return "?";
}

Provenance parse_provenance(const std::string& s) {
    if (s == "real") return Provenance::real;
    if (s == "oversampled") return Provenance::oversampled;
    if (s == "synthetic") return Provenance::synthetic;
    throw FormatError("unknown provenance token '" + s + "'");
}

namespace {

constexpr const char* kHeader6 = "path,modality,disease,severity,class,split";
constexpr const char* kHeader7 =
    "path,modality,disease,severity,class,split,provenance";

}  // namespace

ManifestLoad load_manifest(const std::filesystem::path& csv,
                           const TermLexicon& lexicon) {
    std::string text = read_text_file(csv);
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;

    ManifestLoad out;
    out.manifest.root = csv.parent_path();

    bool header_seen = false;
    bool has_provenance = false;
    std::map<std::string, Split> split_of_path;

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            size_t sz = 0, ch = 0;
            if (std::sscanf(line.c_str(), "# image_size=%zu,channels=%zu",
                            &sz, &ch) == 2) {
                out.manifest.image_size = sz;
                out.manifest.channels = ch;
            }
            continue;
        }
        if (!header_seen) {
            if (line == kHeader6) {
                has_provenance = false;
            } else if (line == kHeader7) {
                has_provenance = true;
            } else {
                throw FormatError(csv.string() + ": missing header '" +
                                  kHeader6 + "'");
            }
            header_seen = true;
            continue;
        }

        std::vector<std::string> cols = split(line, ',');
        size_t expected = has_provenance ? 7 : 6;
        if (cols.size() != expected) {
            out.row_errors.push_back(
                {lineno, "expected " + std::to_string(expected) +
                             " columns, got " + std::to_string(cols.size())});
            continue;
        }
        ImageRecord rec;
        rec.path = trim(cols[0]);
        std::string modality = trim(cols[1]);
        std::string disease = trim(cols[2]);
        std::string severity = trim(cols[3]);
        rec.class_label = trim(cols[4]);
        std::string split_str = trim(cols[5]);

        if (rec.path.empty()) {
            out.row_errors.push_back({lineno, "empty path"});
            continue;
        }
        if (rec.class_label.empty()) {
            out.row_errors.push_back({lineno, "empty class"});
            continue;
        }
        std::string raw = modality;
        if (!disease.empty()) raw += ", " + disease;
        if (!severity.empty()) raw += ", " + severity;
        try {
            rec.prompt = lexicon.normalize(raw);
            rec.split = parse_split(split_str);
            rec.provenance = has_provenance ? parse_provenance(trim(cols[6]))
                                            : Provenance::real;
        } catch (const Error& e) {
            out.row_errors.push_back({lineno, e.what()});
            continue;
        }
        auto [it, inserted] = split_of_path.emplace(rec.path, rec.split);
        if (!inserted && it->second != rec.split) {
            out.row_errors.push_back(
                {lineno, "path '" + rec.path + "' already assigned to split " +
                             split_name(it->second)});
            continue;
        }
        out.manifest.records.push_back(std::move(rec));
    }
    if (!header_seen) {
        throw FormatError(csv.string() + ": missing header '" + kHeader6 + "'");
    }
    if (out.manifest.records.empty()) {
        throw FormatError(csv.string() + ": no valid rows");
    }
    return out;
}

void write_manifest(const std::filesystem::path& csv, const Manifest& m) {
    std::string out;
    out += "# image_size=" + std::to_string(m.image_size) +
           ",channels=" + std::to_string(m.channels) + "\n";
    out += kHeader7;
    out += "\n";
    for (const auto& rec : m.records) {
        std::string disease;
        for (size_t i = 0; i < rec.prompt.findings.size(); ++i) {
            if (i) disease += "; ";
            disease += rec.prompt.findings[i];
        }
        out += rec.path + "," + rec.prompt.modality + "," + disease + "," +
               rec.prompt.severity.value_or("") + "," + rec.class_label + "," +
               split_name(rec.split) + "," + provenance_name(rec.provenance) +
               "\n";
    }
    write_text_file(csv, out);
}

size_t ClassHistogram::total() const {
    size_t n = 0;
    for (const auto& [cls, c] : counts) n += c[0] + c[1] + c[2];
    return n;
}

size_t ClassHistogram::split_total(Split s) const {
    size_t n = 0;
    for (const auto& [cls, c] : counts) n += c[static_cast<size_t>(s)];
    return n;
}

ClassHistogram class_histogram(const Manifest& m) {
    ClassHistogram hist;
    for (const auto& rec : m.records) {
        hist.counts[rec.class_label][static_cast<size_t>(rec.split)]++;
    }
    return hist;
}

std::vector<size_t> largest_remainder(const std::vector<double>& fractions,
                                      size_t total) {
    std::vector<size_t> counts(fractions.size());
    std::vector<double> remainders(fractions.size());
    size_t assigned = 0;
    for (size_t i = 0; i < fractions.size(); ++i) {
        if (fractions[i] < 0.0) {
            throw ContractError("largest_remainder: negative fraction");
        }
        double exact = fractions[i] * static_cast<double>(total);
        counts[i] = static_cast<size_t>(std::floor(exact));
        remainders[i] = exact - std::floor(exact);
        assigned += counts[i];
    }
    std::vector<size_t> order(fractions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return remainders[a] > remainders[b];
    });
    for (size_t j = 0; assigned < total; ++j) {
        counts[order[j % order.size()]]++;
        ++assigned;
    }
    return counts;
}

Manifest stratified_split(const Manifest& m, std::array<double, 3> ratios,
                          uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (ratios[0] < 0.0 || ratios[1] < 0.0 || ratios[2] < 0.0 ||
        std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("stratified_split: ratios must be non-negative and "
                          "sum to 1");
    }
    std::map<std::string, std::vector<size_t>> by_class;
    for (size_t i = 0; i < m.records.size(); ++i) {
        by_class[m.records[i].class_label].push_back(i);
    }
    Manifest out = m;
    for (auto& [cls, idx] : by_class) {
        if (idx.size() < 3) {
            throw ContractError("stratified_split: class '" + cls + "' has " +
                                std::to_string(idx.size()) +
                                " records; need at least 3");
        }
        Rng rng = Rng(seed).derive(fnv1a64(cls));
        for (size_t i = idx.size(); i > 1; --i) {
            std::swap(idx[i - 1], idx[rng.index(i)]);
        }
        std::vector<size_t> counts =
            largest_remainder({ratios[0], ratios[1], ratios[2]}, idx.size());
        size_t pos = 0;
        for (size_t s = 0; s < 3; ++s) {
            for (size_t j = 0; j < counts[s]; ++j) {
                out.records[idx[pos++]].split = static_cast<Split>(s);
            }
        }
    }
    return out;
}

SyntheticSpec SyntheticSpec::parse_file(const std::filesystem::path& path) {
    return parse_text(read_text_file(path), path.string());
}

SyntheticSpec SyntheticSpec::parse_text(const std::string& text,
                                        const std::string& origin) {
    SyntheticSpec spec;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::string where = origin + ":" + std::to_string(lineno);

        size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + ": expected key = value");
        }
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        std::istringstream vs(value);
        try {
            if (key == "total") {
                spec.total = std::stoul(value);
            } else if (key == "size") {
                spec.size = std::stoul(value);
            } else if (key == "seed") {
                spec.seed = std::stoull(value);
            } else if (key == "contrast") {
                spec.contrast = std::stod(value);
            } else if (key == "split") {
                if (!(vs >> spec.split_ratios[0] >> spec.split_ratios[1] >>
                      spec.split_ratios[2])) {
                    throw ConfigError(where + ": split needs three ratios");
                }
                spec.do_split = true;
            } else if (key == "class") {
                SyntheticClassSpec c;
                if (!(vs >> c.name >> c.style >> c.motif >> c.fraction)) {
                    throw ConfigError(
                        where + ": class needs 'name style motif fraction'");
                }
                spec.classes.push_back(std::move(c));
            } else {
                throw ConfigError(where + ": unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw ConfigError(where + ": bad value for '" + key + "'");
        } catch (const std::out_of_range&) {
            throw ConfigError(where + ": bad value for '" + key + "'");
        }
    }
    if (spec.classes.empty()) {
        throw ConfigError(origin + ": no classes defined");
    }
    double fsum = 0.0;
    std::set<std::string> names;
    for (const auto& c : spec.classes) {
        fsum += c.fraction;
        if (!names.insert(c.name).second) {
            throw ConfigError(origin + ": duplicate class '" + c.name + "'");
        }
        // Validates the vocabulary early.
        modality_for_style(c.style);
        finding_for_motif(c.motif);
    }
    if (std::abs(fsum - 1.0) > 1e-9) {
        throw ConfigError(origin + ": class fractions sum to " +
                          std::to_string(fsum) + ", expected 1");
    }
    if (spec.total < spec.classes.size()) {
        throw ConfigError(origin + ": total is smaller than the class count");
    }
    if (spec.size < 8) {
        throw ConfigError(origin + ": size must be at least 8");
    }
    return spec;
}

std::string modality_for_style(const std::string& style) {
    if (style == "radial") return "fundus image";
    if (style == "banding") return "optical coherence tomography";
    throw ConfigError("unknown modality style '" + style + "'");
}

std::string finding_for_motif(const std::string& motif) {
    if (motif == "clear") return "normal";
    if (motif == "spots") return "cotton-wool spots";
    if (motif == "rings") return "laser scars";
    if (motif == "wedges") return "retinal detachment";
    throw ConfigError("unknown lesion motif '" + motif + "'");
}

namespace {

double central_coord(Rng& rng, size_t size) {
    return 0.1 * static_cast<double>(size) +
           rng.uniform() * 0.8 * static_cast<double>(size);
}

void draw_disc(Image& img, double cx, double cy, double rad, double delta) {
    for (size_t r = 0; r < img.height; ++r) {
        for (size_t c = 0; c < img.width; ++c) {
            double dy = static_cast<double>(r) - cy;
            double dx = static_cast<double>(c) - cx;
            if (dx * dx + dy * dy <= rad * rad) img.at(r, c) += delta;
        }
    }
}

void draw_ring(Image& img, double cx, double cy, double rad, double thick,
               double delta) {
    for (size_t r = 0; r < img.height; ++r) {
        for (size_t c = 0; c < img.width; ++c) {
            double dy = static_cast<double>(r) - cy;
            double dx = static_cast<double>(c) - cx;
            double d = std::sqrt(dx * dx + dy * dy);
            if (std::abs(d - rad) <= thick) img.at(r, c) += delta;
        }
    }
}

void draw_wedge(Image& img, double cx, double cy, double rad, double ang0,
                double span, double delta) {
    for (size_t r = 0; r < img.height; ++r) {
        for (size_t c = 0; c < img.width; ++c) {
            double dy = static_cast<double>(r) - cy;
            double dx = static_cast<double>(c) - cx;
            if (dx * dx + dy * dy > rad * rad) continue;
            double a = std::atan2(dy, dx) - ang0;
            a -= 2.0 * M_PI * std::floor(a / (2.0 * M_PI));
            if (a <= span) img.at(r, c) += delta;
        }
    }
}

// One image per call. All randomness comes from `rng` in a fixed draw order
// (background, motif, pixel noise), so a derived per-image stream makes the
// output byte-stable.
Image render_class_image(const std::string& style, const std::string& motif,
                         size_t size, double contrast, Rng& rng) {
    Image img = make_image(size, size);
    double n = static_cast<double>(size);
    if (style == "radial") {
        double cx = n / 2.0 + rng.uniform(-2.0, 2.0);
        double cy = n / 2.0 + rng.uniform(-2.0, 2.0);
        double base = 0.55 + rng.uniform(-0.05, 0.05);
        double rmax = 0.75 * n;
        for (size_t r = 0; r < size; ++r) {
            for (size_t c = 0; c < size; ++c) {
                double dy = static_cast<double>(r) - cy;
                double dx = static_cast<double>(c) - cx;
                double d = std::sqrt(dx * dx + dy * dy) / rmax;
                img.at(r, c) = base - 0.35 * std::pow(d, 1.2);
            }
        }
    } else if (style == "banding") {
        double freq = 2.0 + 2.0 * rng.uniform();
        double phase = rng.uniform(0.0, 2.0 * M_PI);
        double base = 0.45 + rng.uniform(-0.05, 0.05);
        for (size_t r = 0; r < size; ++r) {
            double v = base + 0.16 * std::sin(2.0 * M_PI * freq *
                                                  static_cast<double>(r) / n +
                                              phase);
            for (size_t c = 0; c < size; ++c) img.at(r, c) = v;
        }
    } else {
        throw ConfigError("unknown modality style '" + style + "'");
    }

    if (motif == "spots") {
        // Disc radius stays above one latent-grid cell at the default 4x
        // downsampling so the motif survives encoding.
        size_t count = 3 + rng.index(3);
        for (size_t i = 0; i < count; ++i) {
            double cx = central_coord(rng, size);
            double cy = central_coord(rng, size);
            double rad = 2.4 * std::pow(2.0, rng.uniform());
            double delta = (0.22 + 0.14 * rng.uniform()) * contrast;
            draw_disc(img, cx, cy, rad, delta);
        }
    } else if (motif == "rings") {
        size_t count = 1 + rng.index(2);
        for (size_t i = 0; i < count; ++i) {
            double cx = central_coord(rng, size);
            double cy = central_coord(rng, size);
            double rad = 3.5 * std::pow(2.0, rng.uniform());
            double delta = (0.24 + 0.12 * rng.uniform()) * contrast;
            draw_ring(img, cx, cy, rad, 0.9, delta);
        }
    } else if (motif == "wedges") {
        size_t count = 1 + rng.index(2);
        for (size_t i = 0; i < count; ++i) {
            double cx = central_coord(rng, size);
            double cy = central_coord(rng, size);
            double rad = 4.5 * std::pow(2.0, rng.uniform());
            double ang0 = rng.uniform(0.0, 2.0 * M_PI);
            double span = 0.7 + 0.5 * rng.uniform();
            double delta = -(0.16 + 0.12 * rng.uniform()) * contrast;
            draw_wedge(img, cx, cy, rad, ang0, span, delta);
        }
    } else if (motif != "clear") {
        throw ConfigError("unknown lesion motif '" + motif + "'");
    }

    for (double& px : img.pixels) {
        px += 0.02 * rng.normal();
        px = std::min(1.0, std::max(0.0, px));
    }
    return img;
}

}  // namespace

Manifest generate_synthetic_corpus(const SyntheticSpec& spec,
                                   const std::filesystem::path& out_dir) {
    std::vector<double> fractions;
    for (const auto& c : spec.classes) fractions.push_back(c.fraction);
    std::vector<size_t> counts = largest_remainder(fractions, spec.total);

    Manifest m;
    m.image_size = spec.size;
    m.channels = 1;
    m.root = out_dir;

    size_t g = 0;
    for (size_t ci = 0; ci < spec.classes.size(); ++ci) {
        const auto& cls = spec.classes[ci];
        StructuredPrompt prompt;
        prompt.modality = modality_for_style(cls.style);
        prompt.findings = {finding_for_motif(cls.motif)};
        for (size_t i = 0; i < counts[ci]; ++i, ++g) {
            Rng rng = Rng(spec.seed).derive(g);
            Image img = render_class_image(cls.style, cls.motif, spec.size,
                                           spec.contrast, rng);
            char name[64];
            std::snprintf(name, sizeof(name), "images/%s_%06zu.png",
                          cls.name.c_str(), g);
            write_png_gray(out_dir / name, img);
            ImageRecord rec;
            rec.path = name;
            rec.prompt = prompt;
            rec.class_label = cls.name;
            rec.split = Split::train;
            rec.provenance = Provenance::real;
            m.records.push_back(std::move(rec));
        }
    }
    return m;
}

const Image& ImageStore::get(const Manifest& m, const ImageRecord& rec) {
    std::filesystem::path p(rec.path);
    std::filesystem::path abs = p.is_absolute() ? p : m.root / p;
    std::string key = abs.lexically_normal().string();
    accessed_.insert(key);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Image img = read_png_gray(abs);
    if (img.height != m.image_size || img.width != m.image_size) {
        throw FormatError(key + ": image is " + std::to_string(img.width) +
                          "x" + std::to_string(img.height) + ", manifest says " +
                          std::to_string(m.image_size));
    }
    return cache_.emplace(std::move(key), std::move(img)).first->second;
}

}  // namespace diffaug
