#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "supertracy/errors.hpp"
#include "supertracy/lang.hpp"
#include "supertracy/prompt_factory.hpp"
#include "supertracy/text.hpp"

namespace supertracy::nl_io {

using supertracy::LanguageCode;

// Character-trigram frequency profile of one language.
struct LangProfile {
    LanguageCode language = LanguageCode::other;
    std::map<std::string, double> trigram_freq;  // sums to 1 within 1e-6
};

// Lowercase, map everything outside [a-z] to a space, collapse runs, trim,
// then pad both ends with one space. Must stay in lockstep with the profile
// builder that produced the bundled profiles.
inline std::string normalize_for_trigrams(const std::string& text) {
    std::string mapped;
    mapped.reserve(text.size());
    for (char c : text) {
        unsigned char u = static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(c)));
        mapped.push_back((u >= 'a' && u <= 'z') ? static_cast<char>(u) : ' ');
    }
    std::string collapsed;
    bool prev_space = true;
    for (char c : mapped) {
        if (c == ' ') {
            if (!prev_space) collapsed.push_back(' ');
            prev_space = true;
        } else {
            collapsed.push_back(c);
            prev_space = false;
        }
    }
    while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
    if (collapsed.empty()) return "";
    return " " + collapsed + " ";
}

inline std::map<std::string, double> trigram_profile(const std::string& text) {
    std::map<std::string, double> counts;
    std::string norm = normalize_for_trigrams(text);
    double total = 0.0;
    for (size_t i = 0; i + 3 <= norm.size(); ++i) {
        std::string tri = norm.substr(i, 3);
        if (tri == "   ") continue;
        counts[tri] += 1.0;
        total += 1.0;
    }
    if (total > 0.0)
        for (auto& [tri, c] : counts) c /= total;
    return counts;
}

inline double profile_cosine(const std::map<std::string, double>& a,
                             const std::map<std::string, double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [tri, v] : a) {
        na += v * v;
        auto it = b.find(tri);
        if (it != b.end()) dot += v * it->second;
    }
    for (const auto& [tri, v] : b) nb += v * v;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct LanguageProfiles {
    std::vector<LangProfile> profiles;

    static LanguageProfiles load_json_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open language profiles: " + path);
        nlohmann::json j;
        in >> j;
        LanguageProfiles out;
        for (auto it = j.begin(); it != j.end(); ++it) {
            LangProfile p;
            p.language = language_from_string(it.key());
            double sum = 0.0;
            for (auto f = it.value().begin(); f != it.value().end(); ++f) {
                p.trigram_freq[f.key()] = f.value().get<double>();
                sum += f.value().get<double>();
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw SchemaMismatch("profile frequencies for " + it.key() + " do not sum to 1");
            out.profiles.push_back(std::move(p));
        }
        return out;
    }
};

struct DetectionResult {
    LanguageCode language = LanguageCode::other;
    double confidence = 0.0;
};

// Cosine similarity between the input's trigram profile and each bundled
// profile. Inputs shorter than three letters, weak best matches, and
// near-ties between languages all fall back to `other`.
inline DetectionResult detect_language(const std::string& text, const LanguageProfiles& profiles) {
    constexpr double kMinSimilarity = 0.06;
    constexpr double kMinMargin = 0.008;
    std::string norm = normalize_for_trigrams(text);
    size_t letters = 0;
    for (char c : norm)
        if (c != ' ') ++letters;
    if (letters < 3) return {LanguageCode::other, 0.0};

    auto input = trigram_profile(text);
    LanguageCode best_lang = LanguageCode::other;
    double best = -1.0, second = -1.0;
    for (const auto& p : profiles.profiles) {
        double sim = profile_cosine(input, p.trigram_freq);
        if (sim > best) {
            second = best;
            best = sim;
            best_lang = p.language;
        } else if (sim > second) {
            second = sim;
        }
    }
    if (best < kMinSimilarity) return {LanguageCode::other, std::max(best, 0.0)};
    if (second >= 0.0 && best - second < kMinMargin)
        return {LanguageCode::other, std::max(best, 0.0)};
    return {best_lang, best};
}

struct TranslatedTemplate {
    prompt_factory::PromptTemplate tmpl;
    std::optional<std::string> fallback_notice;
};

// Returns the target-language catalog entry, or the English entry plus a
// notice when the target variant is missing.
inline TranslatedTemplate translate_template(const prompt_factory::TemplateCatalog& catalog,
                                             const std::string& template_id, LanguageCode target) {
    bool fallback = false;
    const auto& tmpl = catalog.get_by_id(template_id, target, &fallback);
    TranslatedTemplate out{tmpl, std::nullopt};
    if (fallback && target != LanguageCode::en)
        out.fallback_notice = "template " + template_id + " not available in " +
                              supertracy::to_string(target) + "; using English";
    return out;
}

struct BarcodeVerdict {
    bool valid = false;
    std::string matched_rule;
    double confidence = 0.0;
};

constexpr const char* kDefaultBarcodeGrammar = "^3S[A-Z0-9]{4}[0-9]{7}$";

// Stage 1 is the grammar regex, stage 2 a transparent weighted-rule score
// over surface features. Input is case-folded first, so validation is
// case-insensitive.
inline BarcodeVerdict validate_barcode(const std::string& s,
                                       const std::string& grammar = kDefaultBarcodeGrammar) {
    std::string t = to_upper(trim(s));
    BarcodeVerdict verdict;

    bool regex_ok = std::regex_match(t, std::regex(grammar));
    double score = 0.0;
    if (t.rfind("3S", 0) == 0) score += 0.25;
    bool alnum = !t.empty();
    for (char c : t)
        if (!std::isalnum(static_cast<unsigned char>(c))) alnum = false;
    if (alnum) score += 0.2;
    if (t.size() == 13) score += 0.25;
    size_t digit_run = 0;
    for (auto it = t.rbegin(); it != t.rend() && std::isdigit(static_cast<unsigned char>(*it)); ++it)
        ++digit_run;
    if (digit_run >= 7) score += 0.3;
    verdict.confidence = std::min(score, 1.0);

    if (!regex_ok) {
        verdict.valid = false;
        verdict.matched_rule = "regex";
        return verdict;
    }
    verdict.valid = verdict.confidence >= 0.5;
    verdict.matched_rule = verdict.valid ? "regex+rules" : "rules";
    return verdict;
}

}  // namespace supertracy::nl_io
