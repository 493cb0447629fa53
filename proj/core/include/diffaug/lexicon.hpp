#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace diffaug {

enum class RuleField { modality, finding, severity };

const char* rule_field_name(RuleField f);

struct MappingRule {
    RuleField field;
    int priority;
    std::string pattern;    // as written in the lexicon file
    std::string canonical;  // non-empty lowercase
    std::regex re;          // compiled case-insensitive
};

// Canonical prompt: "modality, finding1, finding2[, severity]".
struct StructuredPrompt {
    std::string modality;
    std::vector<std::string> findings;  // deduplicated, rule-priority order
    std::optional<std::string> severity;

    std::string render() const;
    bool operator==(const StructuredPrompt&) const = default;
};

// Compiled rule table. Immutable after compile; normalization is pure, so a
// lexicon may be shared across threads freely.
class TermLexicon {
   public:
    static TermLexicon compile(const std::filesystem::path& rules_file);
    // Same grammar, from an in-memory string. `origin` names the source in
    // error messages.
    static TermLexicon compile_text(const std::string& text,
                                    const std::string& origin);

    // Maps free text to a canonical prompt. Matching runs on NFC-composed,
    // lowercased text. Throws ExcludedModalityError if an exclusion pattern
    // matches and UnmappableRecordError if no modality rule does.
    StructuredPrompt normalize(const std::string& raw_text) const;

    // Rules sorted by (field, priority).
    const std::vector<MappingRule>& rules() const { return rules_; }
    const std::vector<std::string>& exclusion_patterns() const {
        return exclusion_patterns_;
    }
    // Distinct canonical terms across all fields, sorted.
    std::vector<std::string> canonical_terms() const;

   private:
    std::vector<MappingRule> rules_;
    std::vector<std::string> exclusion_patterns_;
    std::vector<std::regex> exclusions_;
};

struct VocabularyStats {
    std::map<std::string, size_t> counts;
    std::vector<std::pair<std::string, std::string>> excluded;  // (term, reason)
};

// Counts every canonical term occurrence across the prompts.
VocabularyStats count_terms(const std::vector<StructuredPrompt>& prompts);

// Moves terms with count < min_count to the excluded list with reason
// "below_min_count". Retained counts are unchanged.
VocabularyStats filter_rare(const VocabularyStats& stats, size_t min_count);

}  // namespace diffaug
