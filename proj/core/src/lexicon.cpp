#include "diffaug/lexicon.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "diffaug/errors.hpp"
#include "diffaug/util.hpp"

namespace diffaug {

namespace {

// Composes the common Latin base + combining-mark pairs (NFC for the inputs
// this pipeline actually sees) and lowercases ASCII plus the Latin-1 block.
// Codepoints outside that range pass through unchanged.
uint32_t compose_pair(uint32_t base, uint32_t mark) {
    struct Entry {
        uint32_t base, mark, composed;
    };
    static const Entry table[] = {
        {'a', 0x300, 0xE0}, {'a', 0x301, 0xE1}, {'a', 0x302, 0xE2},
        {'a', 0x303, 0xE3}, {'a', 0x308, 0xE4}, {'e', 0x300, 0xE8},
        {'e', 0x301, 0xE9}, {'e', 0x302, 0xEA}, {'e', 0x308, 0xEB},
        {'i', 0x300, 0xEC}, {'i', 0x301, 0xED}, {'i', 0x302, 0xEE},
        {'i', 0x308, 0xEF}, {'o', 0x300, 0xF2}, {'o', 0x301, 0xF3},
        {'o', 0x302, 0xF4}, {'o', 0x303, 0xF5}, {'o', 0x308, 0xF6},
        {'u', 0x300, 0xF9}, {'u', 0x301, 0xFA}, {'u', 0x302, 0xFB},
        {'u', 0x308, 0xFC}, {'n', 0x303, 0xF1}, {'c', 0x327, 0xE7},
    };
    for (const auto& e : table) {
        if (e.base == base && e.mark == mark) return e.composed;
    }
    return 0;
}

std::vector<uint32_t> decode_utf8(std::string_view s) {
    std::vector<uint32_t> cps;
    cps.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        auto b0 = static_cast<unsigned char>(s[i]);
        uint32_t cp = b0;
        size_t len = 1;
        if (b0 >= 0xF0) len = 4;
        else if (b0 >= 0xE0) len = 3;
        else if (b0 >= 0xC0) len = 2;
        if (len > 1 && i + len <= s.size()) {
            cp = b0 & (0x7F >> len);
            bool ok = true;
            for (size_t j = 1; j < len; ++j) {
                auto bj = static_cast<unsigned char>(s[i + j]);
                if ((bj & 0xC0) != 0x80) {
                    ok = false;
                    break;
                }
                cp = (cp << 6) | (bj & 0x3F);
            }
            if (!ok) {
                cp = b0;
                len = 1;
            }
        } else if (len > 1) {
            len = 1;
        }
        cps.push_back(cp);
        i += len;
    }
    return cps;
}

void encode_utf8(uint32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string fold_text(std::string_view raw) {
    std::vector<uint32_t> cps = decode_utf8(raw);
    std::vector<uint32_t> out;
    out.reserve(cps.size());
    for (uint32_t cp : cps) {
        if (!out.empty()) {
            uint32_t composed = compose_pair(out.back(), cp);
            if (composed) {
                out.back() = composed;
                continue;
            }
        }
        out.push_back(cp);
    }
    std::string folded;
    folded.reserve(raw.size());
    for (uint32_t cp : out) {
        if (cp >= 'A' && cp <= 'Z') cp += 0x20;
        // Latin-1 uppercase block, skipping the multiplication sign.
        else if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) cp += 0x20;
        encode_utf8(cp, folded);
    }
    return folded;
}

std::regex compile_pattern(std::string pattern, const std::string& where) {
    // Patterns are case-insensitive by contract; a leading (?i) marker is
    // accepted and stripped since ECMAScript regexes lack inline flags.
    if (pattern.rfind("(?i)", 0) == 0) pattern = pattern.substr(4);
    try {
        return std::regex(pattern, std::regex::ECMAScript | std::regex::icase |
                                       std::regex::optimize);
    } catch (const std::regex_error& e) {
        throw FormatError(where + ": pattern does not compile: " + e.what());
    }
}

}  // namespace

const char* rule_field_name(RuleField f) {
    switch (f) {
        case RuleField::modality: return "modality";
        case RuleField::finding: return "finding";
        case RuleField::severity: return "severity";
    }
    return "?";
}

std::string StructuredPrompt::render() const {
    std::string out = modality;
    for (const auto& f : findings) {
        out += ", ";
        out += f;
    }
    if (severity) {
        out += ", ";
        out += *severity;
    }
    return out;
}

TermLexicon TermLexicon::compile(const std::filesystem::path& rules_file) {
    return compile_text(read_text_file(rules_file), rules_file.string());
}

TermLexicon TermLexicon::compile_text(const std::string& text,
                                      const std::string& origin) {
    TermLexicon lex;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    std::set<std::pair<RuleField, int>> seen_priorities;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::string where = origin + ":" + std::to_string(lineno);

        std::vector<std::string> cols = split(line, '\t');
        if (cols.size() < 3 || cols.size() > 4) {
            throw FormatError(where + ": expected field<TAB>priority<TAB>"
                                      "pattern<TAB>canonical");
        }
        std::string field_str = trim(cols[0]);
        std::string pattern = cols[2];
        std::string canonical = cols.size() == 4 ? trim(cols[3]) : "";

        if (field_str == "exclude") {
            if (!canonical.empty()) {
                throw FormatError(where +
                                  ": exclusion lines take no canonical term");
            }
            lex.exclusions_.push_back(compile_pattern(pattern, where));
            lex.exclusion_patterns_.push_back(pattern);
            continue;
        }

        RuleField field;
        if (field_str == "modality") field = RuleField::modality;
        else if (field_str == "finding") field = RuleField::finding;
        else if (field_str == "severity") field = RuleField::severity;
        else throw FormatError(where + ": unknown field '" + field_str + "'");

        int priority;
        try {
            priority = std::stoi(trim(cols[1]));
        } catch (const std::exception&) {
            throw FormatError(where + ": priority is not an integer");
        }
        if (!seen_priorities.insert({field, priority}).second) {
            throw FormatError(where + ": duplicate priority " +
                              std::to_string(priority) + " in field " +
                              field_str);
        }
        if (canonical.empty()) {
            throw FormatError(where + ": canonical term is empty");
        }
        if (canonical != lower(canonical)) {
            throw FormatError(where + ": canonical term must be lowercase");
        }
        lex.rules_.push_back(
            {field, priority, pattern, canonical, compile_pattern(pattern, where)});
    }
    if (std::none_of(lex.rules_.begin(), lex.rules_.end(), [](const auto& r) {
            return r.field == RuleField::modality;
        })) {
        throw FormatError(origin + ": lexicon has no modality rule");
    }
    std::stable_sort(lex.rules_.begin(), lex.rules_.end(),
                     [](const MappingRule& a, const MappingRule& b) {
                         if (a.field != b.field) return a.field < b.field;
                         return a.priority < b.priority;
                     });
    return lex;
}

StructuredPrompt TermLexicon::normalize(const std::string& raw_text) const {
    std::string text = fold_text(raw_text);
    for (size_t i = 0; i < exclusions_.size(); ++i) {
        if (std::regex_search(text, exclusions_[i])) {
            throw ExcludedModalityError("excluded modality (pattern '" +
                                        exclusion_patterns_[i] + "'): " +
                                        raw_text);
        }
    }
    StructuredPrompt p;
    std::set<std::string> seen_findings;
    for (const auto& rule : rules_) {
        switch (rule.field) {
            case RuleField::modality:
                if (p.modality.empty() && std::regex_search(text, rule.re)) {
                    p.modality = rule.canonical;
                }
                break;
            case RuleField::finding:
                if (std::regex_search(text, rule.re) &&
                    seen_findings.insert(rule.canonical).second) {
                    p.findings.push_back(rule.canonical);
                }
                break;
            case RuleField::severity:
                if (!p.severity && std::regex_search(text, rule.re)) {
                    p.severity = rule.canonical;
                }
                break;
        }
    }
    if (p.modality.empty()) {
        throw UnmappableRecordError("no modality rule matches: " + raw_text);
    }
    return p;
}

std::vector<std::string> TermLexicon::canonical_terms() const {
    std::set<std::string> terms;
    for (const auto& r : rules_) terms.insert(r.canonical);
    return {terms.begin(), terms.end()};
}

VocabularyStats count_terms(const std::vector<StructuredPrompt>& prompts) {
    VocabularyStats stats;
    for (const auto& p : prompts) {
        ++stats.counts[p.modality];
        for (const auto& f : p.findings) ++stats.counts[f];
        if (p.severity) ++stats.counts[*p.severity];
    }
    return stats;
}

VocabularyStats filter_rare(const VocabularyStats& stats, size_t min_count) {
    VocabularyStats out;
    out.excluded = stats.excluded;
    for (const auto& [term, count] : stats.counts) {
        if (count < min_count) {
            out.excluded.emplace_back(term, "below_min_count");
        } else {
            out.counts.emplace(term, count);
        }
    }
    return out;
}

}  // namespace diffaug
