#pragma once

#include <string>

#include "supertracy/errors.hpp"

namespace supertracy {

enum class LanguageCode { en, nl, other };

inline std::string to_string(LanguageCode c) {
    switch (c) {
        case LanguageCode::en: return "en";
        case LanguageCode::nl: return "nl";
        case LanguageCode::other: return "other";
    }
    return "other";
}

inline LanguageCode language_from_string(const std::string& s) {
    if (s == "en") return LanguageCode::en;
    if (s == "nl") return LanguageCode::nl;
    if (s == "other") return LanguageCode::other;
    throw SchemaMismatch("unknown language code: " + s);
}

}  // namespace supertracy
