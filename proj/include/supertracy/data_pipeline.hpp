#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "supertracy/csv.hpp"
#include "supertracy/embed_store.hpp"
#include "supertracy/errors.hpp"
#include "supertracy/event_model.hpp"
#include "supertracy/rng.hpp"
#include "supertracy/text.hpp"
#include "supertracy/time_util.hpp"

namespace supertracy::data_pipeline {

using event_model::EventCode;
using event_model::EventTaxonomy;
using event_model::LocationCatalog;
using event_model::ObservedEvent;
using event_model::ParcelRecord;

struct CorpusConfig {
    size_t n_parcels = 2000;
    uint64_t seed = 42;
    double unhappy_rate = 0.30;
    double in_progress_rate = 0.10;  // parcels cut mid-journey, delivered=false
    int64_t date_start = utc_seconds(2024, 6, 1);
    int64_t date_end = utc_seconds(2024, 8, 31);
    size_t n_columns = 159;
};

struct RawTable {
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> rows;

    std::string to_csv() const {
        std::ostringstream os;
        write_csv(os, headers, rows);
        return os.str();
    }
};

// First-order Markov journey template. The canned template additionally
// carries a scripted literal sequence; its transition table is the bigram
// form of the script so the type invariants hold either way.
struct JourneyTemplate {
    std::string id;
    std::string start_code;
    std::map<std::string, std::vector<std::pair<std::string, double>>> transitions;
    std::set<std::string> terminal_codes;
    std::vector<std::string> scripted;  // when non-empty, replayed verbatim
    bool unhappy = false;
    double weight = 1.0;

    void validate() const {
        for (const auto& [code, dist] : transitions) {
            if (terminal_codes.count(code))
                throw InvalidConfig("terminal code " + code + " has outgoing edges");
            double sum = 0.0;
            for (const auto& [succ, p] : dist) sum += p;
            if (std::abs(sum - 1.0) > 1e-9)
                throw InvalidConfig("transition distribution for " + code + " does not sum to 1");
        }
    }
};

// The canonical delivered journey; the first parcel of every corpus replays
// it so the canonical barcode always resolves.
inline const std::vector<std::string>& canonical_journey() {
    static const std::vector<std::string> seq = {
        "A01", "A98", "A95", "B01", "G03", "V06", "A04", "K50", "B01", "A96", "J01", "J40", "A19",
        "J05", "A19", "H01", "J30", "B01", "J17", "B01", "J01", "J01", "J40", "A19", "A19", "J05",
        "I01"};
    return seq;
}

inline constexpr const char* kCanonicalBarcode = "3SCANN0000001";

namespace detail {

inline JourneyTemplate make_template(
    const std::string& id, const std::string& start, bool unhappy, double weight,
    std::initializer_list<std::pair<std::string, std::vector<std::pair<std::string, double>>>> edges,
    std::initializer_list<std::string> terminals) {
    JourneyTemplate t;
    t.id = id;
    t.start_code = start;
    t.unhappy = unhappy;
    t.weight = weight;
    for (const auto& [code, dist] : edges) t.transitions[code] = dist;
    for (const auto& term : terminals) t.terminal_codes.insert(term);
    t.validate();
    return t;
}

inline JourneyTemplate make_canned_template() {
    JourneyTemplate t;
    t.id = "canonical_delivery";
    t.scripted = canonical_journey();
    t.start_code = t.scripted.front();
    t.unhappy = false;
    t.weight = 0.0;  // never drawn from the mixture; parcel 0 always uses it
    t.terminal_codes.insert(t.scripted.back());
    // bigram form of the script, normalized per source code
    std::map<std::string, std::map<std::string, double>> counts;
    for (size_t i = 0; i + 1 < t.scripted.size(); ++i)
        counts[t.scripted[i]][t.scripted[i + 1]] += 1.0;
    for (const auto& [code, succ] : counts) {
        double total = 0.0;
        for (const auto& [s, c] : succ) total += c;
        for (const auto& [s, c] : succ) t.transitions[code].push_back({s, c / total});
    }
    t.validate();
    return t;
}

}  // namespace detail

inline std::vector<JourneyTemplate> default_journey_templates() {
    using detail::make_template;
    std::vector<JourneyTemplate> out;
    out.push_back(detail::make_canned_template());

    out.push_back(make_template(
        "retail_happy", "A01", false, 0.30,
        {
            {"A01", {{"A98", 1.0}}},
            {"A98", {{"B01", 1.0}}},
            {"B01", {{"J05", 0.8}, {"G03", 0.2}}},
            {"G03", {{"K50", 1.0}}},
            {"K50", {{"J05", 1.0}}},
            {"J05", {{"H01", 0.85}, {"A19", 0.15}}},
            {"A19", {{"H01", 1.0}}},
            {"H01", {{"J30", 1.0}}},
            {"J30", {{"I01", 0.9}, {"I03", 0.1}}},
        },
        {"I01", "I03"}));

    out.push_back(make_template(
        "standard_happy", "A01", false, 0.32,
        {
            {"A01", {{"A95", 0.6}, {"A98", 0.4}}},
            {"A95", {{"B01", 1.0}}},
            {"A98", {{"B01", 1.0}}},
            {"B01", {{"G03", 0.7}, {"J17", 0.3}}},
            {"G03", {{"V06", 0.5}, {"K50", 0.5}}},
            {"V06", {{"K50", 1.0}}},
            {"J17", {{"K50", 1.0}}},
            {"K50", {{"J40", 0.75}, {"J01", 0.25}}},
            {"J01", {{"J40", 1.0}}},
            {"J40", {{"A19", 0.6}, {"J05", 0.4}}},
            {"A19", {{"J05", 1.0}}},
            {"J05", {{"H01", 1.0}}},
            {"H01", {{"J30", 1.0}}},
            {"J30", {{"I01", 0.85}, {"I02", 0.15}}},
        },
        {"I01", "I02"}));

    out.push_back(make_template(
        "long_happy", "A01", false, 0.20,
        {
            {"A01", {{"A98", 1.0}}},
            {"A98", {{"A95", 1.0}}},
            {"A95", {{"B01", 1.0}}},
            {"B01", {{"G03", 1.0}}},
            {"G03", {{"K50", 1.0}}},
            {"K50", {{"J01", 0.7}, {"J40", 0.3}}},
            {"J01", {{"J01", 0.35}, {"J40", 0.65}}},
            {"J40", {{"A19", 1.0}}},
            {"A19", {{"A19", 0.45}, {"J05", 0.55}}},
            {"J05", {{"H01", 1.0}}},
            {"H01", {{"J30", 1.0}}},
            {"J30", {{"I01", 1.0}}},
        },
        {"I01"}));

    out.push_back(make_template(
        "warehouse_happy", "A02", false, 0.18,
        {
            {"A02", {{"A98", 1.0}}},
            {"A98", {{"B01", 1.0}}},
            {"B01", {{"J17", 0.5}, {"G03", 0.5}}},
            {"J17", {{"G03", 1.0}}},
            {"G03", {{"K50", 1.0}}},
            {"K50", {{"J40", 1.0}}},
            {"J40", {{"J05", 0.6}, {"A19", 0.4}}},
            {"A19", {{"J05", 1.0}}},
            {"J05", {{"H01", 1.0}}},
            {"H01", {{"J30", 1.0}}},
            {"J30", {{"I01", 0.9}, {"I05", 0.1}}},
        },
        {"I01", "I05"}));

    out.push_back(make_template(
        "unhappy_missort", "A01", true, 0.44,
        {
            {"A01", {{"A98", 1.0}}},
            {"A98", {{"B01", 1.0}}},
            {"B01", {{"B03", 1.0}}},
            {"B03", {{"X01", 1.0}}},
            {"X01", {{"B05", 1.0}}},
            {"B05", {{"G03", 1.0}}},
            {"G03", {{"K50", 1.0}}},
            {"K50", {{"J01", 0.6}, {"J40", 0.4}}},
            {"J01", {{"J01", 0.45}, {"K50", 0.25}, {"J40", 0.3}}},
            {"J40", {{"A19", 0.9}, {"J05", 0.1}}},
            {"A19", {{"A19", 0.68}, {"J05", 0.32}}},
            {"J05", {{"H01", 1.0}}},
            {"H01", {{"J30", 1.0}}},
            {"J30", {{"I01", 1.0}}},
        },
        {"I01"}));

    out.push_back(make_template(
        "unhappy_retry", "A01", true, 0.42,
        {
            {"A01", {{"A95", 1.0}}},
            {"A95", {{"B01", 1.0}}},
            {"B01", {{"J05", 1.0}}},
            {"J05", {{"H01", 1.0}}},
            {"H01", {{"J30", 1.0}}},
            {"J30", {{"X11", 1.0}}},
            {"X11", {{"A19", 1.0}}},
            {"A19", {{"A19", 0.6}, {"J06", 0.4}}},
            {"J06", {{"H05", 1.0}}},
            {"H05", {{"J35", 1.0}}},
            {"J35", {{"X12", 0.25}, {"I01", 0.65}, {"I02", 0.10}}},
            {"X12", {{"A19", 1.0}}},
        },
        {"I01", "I02"}));

    out.push_back(make_template(
        "unhappy_damaged", "A01", true, 0.14,
        {
            {"A01", {{"A98", 1.0}}},
            {"A98", {{"B01", 1.0}}},
            {"B01", {{"X05", 1.0}}},
            {"X05", {{"B06", 1.0}}},
            {"B06", {{"G03", 1.0}}},
            {"G03", {{"K50", 1.0}}},
            {"K50", {{"J40", 1.0}}},
            {"J40", {{"J05", 1.0}}},
            {"J05", {{"H01", 1.0}}},
            {"H01", {{"J30", 1.0}}},
            {"J30", {{"I01", 1.0}}},
        },
        {"I01"}));

    return out;
}

// ---------------------------------------------------------------------------
// Corpus schema

namespace detail {

inline std::vector<std::string> dutch_headers(size_t n_columns) {
    std::vector<std::string> core_translated = {
        "waarneming",   "waarneming_omschrijving", "tijdstip",     "locatie_id",
        "locatie_naam", "locatie_soort",           "bron_systeem", "afgeleverd",
        "klant_naam",   "verzender_stad",          "ontvanger_stad", "gewicht_gram",
        "service_niveau"};
    std::vector<std::string> headers = {"barcode", "collo_id", "sscc"};
    headers.insert(headers.end(), core_translated.begin(), core_translated.end());
    if (n_columns < headers.size() + 2) throw InvalidConfig("n_columns too small for the schema");
    // 119 translated filler columns for the default width, sys_ref for the rest
    size_t remaining = n_columns - headers.size();
    size_t n_kenmerk = std::min<size_t>(119, remaining > 24 ? remaining - 24 : remaining);
    size_t n_sysref = remaining - n_kenmerk;
    char buf[32];
    for (size_t i = 1; i <= n_kenmerk; ++i) {
        std::snprintf(buf, sizeof(buf), "kenmerk_%03zu", i);
        headers.push_back(buf);
    }
    for (size_t i = 1; i <= n_sysref; ++i) {
        std::snprintf(buf, sizeof(buf), "sys_ref_%02zu", i);
        headers.push_back(buf);
    }
    return headers;
}

inline std::string source_system_for(event_model::Category cat) {
    switch (cat) {
        case event_model::Category::Collect: return "RETAIL-SCAN";
        case event_model::Category::Sort: return "SORT-MACH";
        case event_model::Category::Transport: return "DEPOT-SCAN";
        case event_model::Category::Deliver: return "COURIER-APP";
        case event_model::Category::Exception: return "OPS-DESK";
        case event_model::Category::Admin: return "PLANNER";
    }
    return "PLANNER";
}

struct RoutePlan {
    std::string origin;       // retail or warehouse
    std::string sorting;      // sorting center
    std::string hub;          // regional hub
    std::string destination;  // delivery depot (distribution center)
};

inline RoutePlan draw_route(const LocationCatalog& locations, const std::string& start_code,
                            Rng& rng) {
    auto pick = [&](event_model::LocationKind kind) {
        auto options = locations.of_kind(kind);
        if (options.empty()) throw InvalidConfig("location catalog lacks a required kind");
        return options[static_cast<size_t>(rng.next_below(options.size()))]->id;
    };
    RoutePlan plan;
    plan.origin = pick(start_code == "A02" ? event_model::LocationKind::Warehouse
                                           : event_model::LocationKind::RetailLocation);
    plan.sorting = pick(event_model::LocationKind::SortingCenter);
    plan.hub = pick(event_model::LocationKind::Hub);
    plan.destination = pick(event_model::LocationKind::DistributionCenter);
    return plan;
}

// Physical place of an event; admin events stay wherever the parcel is.
inline std::string location_for(const EventCode& code, event_model::Category cat,
                                const RoutePlan& plan, const std::string& current) {
    if (cat == event_model::Category::Collect) return plan.origin;
    if (cat == event_model::Category::Sort)
        return code.raw == "J05" || code.raw == "J06" ? plan.destination
               : code.raw == "J17"                    ? plan.hub
                                                      : plan.sorting;
    if (cat == event_model::Category::Transport) {
        if (code.raw == "G03") return plan.sorting;
        if (code.raw == "J01") return plan.hub;
        return plan.destination;  // K50, J40, H01, H05, J30, J35
    }
    if (cat == event_model::Category::Deliver) return plan.destination;
    if (cat == event_model::Category::Exception) return current;
    return current;  // Admin
}

inline int64_t gap_seconds(event_model::Category cat, Rng& rng) {
    switch (cat) {
        case event_model::Category::Admin:
            return 600 + static_cast<int64_t>(rng.next_below(5400));  // 10m - 1h40m
        case event_model::Category::Sort:
            return 1800 + static_cast<int64_t>(rng.next_below(10800));  // 30m - 3h30m
        case event_model::Category::Transport:
            return 3600 + static_cast<int64_t>(rng.next_below(28800));  // 1h - 9h
        case event_model::Category::Deliver:
            return 7200 + static_cast<int64_t>(rng.next_below(36000));  // 2h - 12h
        case event_model::Category::Exception:
            return 900 + static_cast<int64_t>(rng.next_below(7200));  // 15m - 2h15m
        case event_model::Category::Collect:
            return 900 + static_cast<int64_t>(rng.next_below(3600));
    }
    return 3600;
}

inline std::vector<std::string> walk_template(const JourneyTemplate& tmpl, Rng& rng,
                                              size_t max_events) {
    if (!tmpl.scripted.empty()) return tmpl.scripted;
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<std::string> seq = {tmpl.start_code};
        while (seq.size() < max_events) {
            const std::string& cur = seq.back();
            if (tmpl.terminal_codes.count(cur)) break;
            auto it = tmpl.transitions.find(cur);
            if (it == tmpl.transitions.end()) break;
            double roll = rng.next_double();
            double acc = 0.0;
            std::string next = it->second.back().first;
            for (const auto& [succ, p] : it->second) {
                acc += p;
                if (roll < acc) {
                    next = succ;
                    break;
                }
            }
            seq.push_back(next);
        }
        if (tmpl.terminal_codes.count(seq.back())) return seq;
        // walk hit the length cap before a terminal; redraw
    }
    throw InvalidConfig("journey template " + tmpl.id + " cannot reach a terminal code");
}

static const char* kSenderPool[] = {"Jansen Webshop B.V.", "Bloemen Express",   "Van Dijk Boeken",
                                    "Tulip Trading Co.",   "De Haan Elektro",   "Noord Kleding",
                                    "Groene Vingers B.V.", "Sport & Spel N.V.", "Kaashandel Smit",
                                    "Atelier Vermeer"};
static const char* kCityPool[] = {"Amsterdam", "Rotterdam", "Utrecht",  "Eindhoven", "Groningen",
                                  "Zwolle",    "Nijmegen",  "Tilburg",  "Breda",     "Apeldoorn",
                                  "Leiden",    "Haarlem",   "Den Haag", "Arnhem",    "Maastricht"};
static const char* kServicePool[] = {"standaard", "avond", "ochtend", "xl"};
static const char* kBarcodePrefixPool[] = {"ABCD", "KLMP", "XRTW", "EFGH", "QRSZ", "MNOP"};

}  // namespace detail

// ---------------------------------------------------------------------------
// generate_corpus

// Deterministic per seed. Parcel 0 replays the canonical journey under the
// canonical barcode; the unhappy count is allocated exactly; a slice of
// parcels is cut mid-journey and left undelivered.
inline std::pair<RawTable, std::vector<ParcelRecord>> generate_corpus(
    const CorpusConfig& config, const EventTaxonomy& taxonomy, const LocationCatalog& locations,
    const std::vector<JourneyTemplate>& templates = default_journey_templates()) {
    if (config.n_parcels < 1) throw InvalidConfig("n_parcels must be at least 1");
    if (config.unhappy_rate < 0.0 || config.unhappy_rate > 1.0)
        throw InvalidConfig("unhappy_rate must lie in [0, 1]");
    if (config.in_progress_rate < 0.0 || config.in_progress_rate > 1.0)
        throw InvalidConfig("in_progress_rate must lie in [0, 1]");
    if (config.date_start >= config.date_end) throw InvalidConfig("date range is empty");

    const JourneyTemplate* canned = nullptr;
    std::vector<const JourneyTemplate*> happy, unhappy;
    for (const auto& t : templates) {
        if (!t.scripted.empty()) canned = &t;
        else if (t.unhappy) unhappy.push_back(&t);
        else happy.push_back(&t);
    }
    if (!canned || happy.empty() || unhappy.empty())
        throw InvalidConfig("template set needs a scripted, a happy and an unhappy template");

    Rng master(config.seed);

    // exact allocation of unhappy and in-progress parcels
    size_t n = config.n_parcels;
    size_t n_unhappy = static_cast<size_t>(std::llround(config.unhappy_rate * static_cast<double>(n)));
    if (n_unhappy > n) n_unhappy = n;
    std::vector<uint8_t> is_unhappy(n, 0);
    // parcel 0 is the canonical happy journey; allocate unhappy among 1..n-1
    {
        std::vector<size_t> ids;
        for (size_t i = 1; i < n; ++i) ids.push_back(i);
        Rng alloc = master.fork("unhappy-allocation");
        alloc.shuffle(ids);
        for (size_t i = 0; i < std::min(n_unhappy, ids.size()); ++i) is_unhappy[ids[i]] = 1;
    }
    size_t n_progress =
        static_cast<size_t>(std::llround(config.in_progress_rate * static_cast<double>(n)));
    std::vector<uint8_t> in_progress(n, 0);
    {
        std::vector<size_t> ids;
        for (size_t i = 1; i < n; ++i) ids.push_back(i);
        Rng alloc = master.fork("progress-allocation");
        alloc.shuffle(ids);
        for (size_t i = 0; i < std::min(n_progress, ids.size()); ++i) in_progress[ids[i]] = 1;
    }

    auto pick_weighted = [](const std::vector<const JourneyTemplate*>& pool, Rng& rng) {
        double total = 0.0;
        for (const auto* t : pool) total += t->weight;
        double roll = rng.next_double() * total;
        double acc = 0.0;
        for (const auto* t : pool) {
            acc += t->weight;
            if (roll < acc) return t;
        }
        return pool.back();
    };

    RawTable table;
    table.headers = detail::dutch_headers(config.n_columns);
    std::vector<ParcelRecord> records;
    records.reserve(n);

    int64_t span = config.date_end - config.date_start - 3 * 86400;
    if (span < 1) span = 1;
    size_t collo_id = 1;

    for (size_t i = 0; i < n; ++i) {
        Rng rng = master.fork("parcel:" + std::to_string(i));
        const JourneyTemplate* tmpl =
            (i == 0) ? canned : pick_weighted(is_unhappy[i] ? unhappy : happy, rng);

        std::vector<std::string> codes = detail::walk_template(*tmpl, rng, 44);

        // cut in-progress journeys after the last exception (so the unhappy
        // label survives) and at least two events before the end
        bool truncated = false;
        if (in_progress[i] && codes.size() >= 5) {
            size_t min_cut = 3;
            for (size_t e = 0; e < codes.size(); ++e) {
                auto cat = taxonomy.lookup(event_model::parse_event_code(codes[e])).category;
                if (cat == event_model::Category::Exception) min_cut = std::max(min_cut, e + 1);
            }
            if (min_cut <= codes.size() - 2) {
                size_t cut =
                    min_cut + static_cast<size_t>(rng.next_below(codes.size() - 1 - min_cut));
                codes.resize(cut);
                truncated = true;
            }
        }

        ParcelRecord rec;
        if (i == 0) {
            rec.barcode = kCanonicalBarcode;
        } else {
            const char* prefix = detail::kBarcodePrefixPool[rng.next_below(6)];
            char digits[32];
            std::snprintf(digits, sizeof(digits), "%07llu",
                          static_cast<unsigned long long>(i + 1) % 10000000ULL);
            rec.barcode = std::string("3S") + prefix + digits;
        }
        detail::RoutePlan plan = detail::draw_route(locations, codes.front(), rng);

        int64_t ts = config.date_start + static_cast<int64_t>(rng.next_below(
                                             static_cast<uint64_t>(span)));
        ts -= ts % 60;  // minute resolution
        std::string current_location = plan.origin;
        for (const auto& raw_code : codes) {
            EventCode code = event_model::parse_event_code(raw_code);
            const auto& def = taxonomy.lookup(code);
            current_location = detail::location_for(code, def.category, plan, current_location);
            ObservedEvent ev;
            ev.code = code;
            ev.timestamp = ts;
            ev.location = current_location;
            ev.source_system = detail::source_system_for(def.category);
            rec.events.push_back(ev);
            ts += detail::gap_seconds(def.category, rng);
            ts -= ts % 60;
        }
        const auto& last_def = taxonomy.lookup(rec.events.back().code);
        rec.delivered = !truncated && last_def.category == event_model::Category::Deliver;

        std::string sender = detail::kSenderPool[rng.next_below(10)];
        std::string sender_city = detail::kCityPool[rng.next_below(15)];
        std::string recipient_city = detail::kCityPool[rng.next_below(15)];
        int weight_grams = 100 + static_cast<int>(rng.next_below(19900));
        std::string service = detail::kServicePool[rng.next_below(4)];
        rec.customer_meta["customer_name"] = trim(strip_punctuation(to_lower(sender)));
        rec.customer_meta["sender_city"] = to_lower(sender_city);
        rec.customer_meta["recipient_city"] = to_lower(recipient_city);
        rec.customer_meta["weight_grams"] = std::to_string(weight_grams);
        rec.customer_meta["service_level"] = service;

        // raw rows: one per event, with occasional noise
        for (const auto& ev : rec.events) {
            const auto& def = taxonomy.lookup(ev.code);
            const auto& loc = locations.lookup(ev.location);
            std::vector<std::string> row(table.headers.size(), "");
            size_t c = 0;
            row[c++] = rec.barcode;
            row[c++] = std::to_string(collo_id++);
            char sscc[32];
            std::snprintf(sscc, sizeof(sscc), "%018llu",
                          370000000000000000ULL + static_cast<unsigned long long>(i));
            row[c++] = sscc;
            row[c++] = rng.next_double() < 0.07 ? to_lower(ev.code.raw) : ev.code.raw;
            row[c++] = def.description;
            if (rng.next_double() < 0.3) {
                row[c++] = format_iso8601(ev.timestamp);
            } else {
                int y, mo, d;
                int64_t days = ev.timestamp / 86400;
                int64_t rem = ev.timestamp % 86400;
                civil_from_days(days, y, mo, d);
                char buf[24];
                std::snprintf(buf, sizeof(buf), "%02d-%02d-%04d %02d:%02d", d, mo, y,
                              static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60));
                row[c++] = buf;
            }
            row[c++] = ev.location;
            row[c++] = loc.name;
            row[c++] = event_model::to_string(loc.kind);
            row[c++] = ev.source_system;
            row[c++] = rec.delivered ? "ja" : "nee";
            row[c++] = sender;
            row[c++] = sender_city;
            row[c++] = recipient_city;
            row[c++] = std::to_string(weight_grams);
            row[c++] = service;
            // kenmerk_001..003 carry small free-text tokens, the rest stay empty
            row[c] = "n.v.t.";
            row[c + 1] = weight_grams > 10000 ? "zwaar" : "licht";
            row[c + 2] = def.default_auto ? "auto" : "handmatig";
            table.rows.push_back(row);
            if (rng.next_double() < 0.01) table.rows.push_back(row);  // duplicate noise
        }
        if (rng.next_double() < 0.005) {
            std::vector<std::string> junk(table.headers.size(), "");
            junk[1] = std::to_string(collo_id++);
            junk[3] = "A00";
            table.rows.push_back(junk);  // row with a missing barcode
        }

        records.push_back(std::move(rec));
    }

    return {std::move(table), std::move(records)};
}

// ---------------------------------------------------------------------------
// transform

using ColumnDictionary = std::map<std::string, std::string>;

inline ColumnDictionary load_column_dictionary(const std::string& path) {
    CsvFile f = read_csv(path);
    if (f.headers != std::vector<std::string>{"nl", "en"})
        throw SchemaMismatch("unexpected dictionary header in " + path);
    ColumnDictionary dict;
    for (const auto& row : f.rows) {
        if (row.size() != 2) throw SchemaMismatch("bad dictionary row in " + path);
        dict[row[0]] = row[1];
    }
    return dict;
}

struct TransformReport {
    size_t rows_in = 0;
    size_t duplicates_removed = 0;
    size_t dropped_missing_barcode = 0;
    size_t parcels = 0;
};

// Cleansing and normalization pass: translate headers, drop duplicate rows,
// drop and count rows without a barcode, case-fold and strip punctuation in
// free-text cells, standardize dates to ISO-8601 UTC, then group rows into
// parcel records ordered by timestamp.
inline std::vector<ParcelRecord> transform(const RawTable& raw, const ColumnDictionary& dictionary,
                                           TransformReport* report = nullptr) {
    std::vector<std::string> headers;
    headers.reserve(raw.headers.size());
    for (const auto& h : raw.headers) {
        auto it = dictionary.find(h);
        headers.push_back(it == dictionary.end() ? h : it->second);
    }
    std::map<std::string, size_t> col;
    for (size_t i = 0; i < headers.size(); ++i) col[headers[i]] = i;
    for (const char* required : {"barcode", "observation", "timestamp", "location_id",
                                 "source_system", "delivered"}) {
        if (!col.count(required))
            throw SchemaMismatch(std::string("required column missing: ") + required);
    }

    const std::set<std::string> free_text_prefixes = {"observation_description", "customer_name",
                                                      "sender_city", "recipient_city",
                                                      "service_level", "location_name"};
    auto is_free_text = [&](const std::string& name) {
        return free_text_prefixes.count(name) > 0 || name.rfind("kenmerk_", 0) == 0 ||
               name.rfind("attribute_", 0) == 0;
    };

    TransformReport rep;
    rep.rows_in = raw.rows.size();

    std::set<std::string> seen_rows;
    struct EventRow {
        ObservedEvent event;
        size_t order;
    };
    std::map<std::string, std::vector<EventRow>> events_by_barcode;
    std::map<std::string, std::map<std::string, std::string>> meta_by_barcode;
    std::map<std::string, bool> delivered_by_barcode;
    std::vector<std::string> barcode_order;

    size_t order = 0;
    for (const auto& row_in : raw.rows) {
        if (row_in.size() != raw.headers.size())
            throw SchemaMismatch("row width differs from header width");
        std::string key = csv_join(row_in);
        if (!seen_rows.insert(key).second) {
            ++rep.duplicates_removed;
            continue;
        }
        const std::string barcode = trim(row_in[col["barcode"]]);
        if (barcode.empty()) {
            ++rep.dropped_missing_barcode;
            continue;
        }

        EventRow er;
        er.order = order++;
        er.event.code = event_model::parse_event_code(row_in[col["observation"]]);
        er.event.timestamp = parse_timestamp(trim(row_in[col["timestamp"]]));
        er.event.location = trim(row_in[col["location_id"]]);
        er.event.source_system = trim(row_in[col["source_system"]]);

        if (!events_by_barcode.count(barcode)) barcode_order.push_back(barcode);
        events_by_barcode[barcode].push_back(er);
        delivered_by_barcode[barcode] = to_lower(trim(row_in[col["delivered"]])) == "ja" ||
                                        to_lower(trim(row_in[col["delivered"]])) == "true" ||
                                        trim(row_in[col["delivered"]]) == "1";

        auto put_meta = [&](const char* name) {
            auto it = col.find(name);
            if (it == col.end()) return;
            std::string value = trim(row_in[it->second]);
            if (is_free_text(name)) value = trim(strip_punctuation(to_lower(value)));
            meta_by_barcode[barcode][name] = value;
        };
        put_meta("customer_name");
        put_meta("sender_city");
        put_meta("recipient_city");
        put_meta("weight_grams");
        put_meta("service_level");
    }

    std::vector<ParcelRecord> records;
    records.reserve(barcode_order.size());
    for (const auto& barcode : barcode_order) {
        auto& rows = events_by_barcode[barcode];
        std::stable_sort(rows.begin(), rows.end(), [](const EventRow& a, const EventRow& b) {
            if (a.event.timestamp != b.event.timestamp) return a.event.timestamp < b.event.timestamp;
            return a.order < b.order;
        });
        ParcelRecord rec;
        rec.barcode = barcode;
        for (auto& er : rows) rec.events.push_back(er.event);
        rec.customer_meta = meta_by_barcode[barcode];
        rec.delivered = delivered_by_barcode[barcode];
        records.push_back(std::move(rec));
    }
    rep.parcels = records.size();
    if (report) *report = rep;
    return records;
}

// ---------------------------------------------------------------------------
// split

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;

    void validate() const {
        if (train < 0 || val < 0 || test < 0) throw InvalidRatios("ratios must be non-negative");
        if (std::abs(train + val + test - 1.0) > 1e-9) throw InvalidRatios("ratios must sum to 1");
    }
};

struct SplitResult {
    std::vector<ParcelRecord> train;
    std::vector<ParcelRecord> val;
    std::vector<ParcelRecord> test;
};

// Disjoint, exhaustive, deterministic per seed; sizes by largest remainder.
inline SplitResult split(const std::vector<ParcelRecord>& records, const SplitRatios& ratios,
                         uint64_t seed) {
    ratios.validate();
    size_t n = records.size();
    double exact[3] = {ratios.train * n, ratios.val * n, ratios.test * n};
    size_t counts[3];
    size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        counts[i] = static_cast<size_t>(exact[i]);
        assigned += counts[i];
    }
    double fractions[3];
    for (int i = 0; i < 3; ++i) fractions[i] = exact[i] - static_cast<double>(counts[i]);
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (fractions[i] > fractions[best]) best = i;
        ++counts[best];
        fractions[best] = -1.0;
        ++assigned;
    }

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng(seed).fork("split");
    rng.shuffle(order);

    SplitResult out;
    size_t cursor = 0;
    for (size_t i = 0; i < counts[0]; ++i) out.train.push_back(records[order[cursor++]]);
    for (size_t i = 0; i < counts[1]; ++i) out.val.push_back(records[order[cursor++]]);
    for (size_t i = 0; i < counts[2]; ++i) out.test.push_back(records[order[cursor++]]);
    return out;
}

// ---------------------------------------------------------------------------
// journey store and load

class JourneyStore {
public:
    // returns true when an existing record was replaced (last writer wins)
    bool upsert(const ParcelRecord& record) {
        auto [it, inserted] = records_.insert_or_assign(record.barcode, record);
        (void)it;
        return !inserted;
    }

    bool contains(const std::string& barcode) const { return records_.count(barcode) > 0; }

    const ParcelRecord& lookup(const std::string& barcode) const {
        auto it = records_.find(barcode);
        if (it == records_.end()) throw UnknownBarcode("no parcel with barcode " + barcode);
        return it->second;
    }

    size_t size() const { return records_.size(); }

    const std::map<std::string, ParcelRecord>& records() const { return records_; }

private:
    std::map<std::string, ParcelRecord> records_;
};

struct LoadReport {
    size_t parcels = 0;
    size_t chunks = 0;
    size_t duplicate_barcodes = 0;
};

// One retrieval chunk per record; duplicate barcodes upsert with a warning.
// Repeated codes collapse to one mention so a long replanning run cannot
// dominate the chunk's feature vector.
inline std::string record_chunk_text(const ParcelRecord& record, const EventTaxonomy& taxonomy) {
    std::string text = "Parcel " + record.barcode;
    auto sender = record.customer_meta.find("sender_city");
    auto recipient = record.customer_meta.find("recipient_city");
    if (sender != record.customer_meta.end() && recipient != record.customer_meta.end())
        text += " from " + sender->second + " to " + recipient->second;
    text += record.delivered ? " delivered journey:" : " journey in progress:";
    std::map<std::string, size_t> counts;
    for (const auto& ev : record.events) counts[ev.code.raw] += 1;
    std::set<std::string> mentioned;
    for (const auto& ev : record.events) {
        if (!mentioned.insert(ev.code.raw).second) continue;
        text += " " + ev.code.raw;
        if (taxonomy.contains(ev.code))
            text += " " + to_lower(taxonomy.lookup(ev.code).description);
        size_t n = counts[ev.code.raw];
        if (n > 1) text += " (" + std::to_string(n) + " times)";
        text += ";";
    }
    return text;
}

inline LoadReport load(const std::vector<ParcelRecord>& records, JourneyStore& journey_store,
                       embed_store::VectorIndex& index, const EventTaxonomy& taxonomy) {
    LoadReport report;
    for (const auto& rec : records) {
        bool replaced = journey_store.upsert(rec);
        if (replaced) ++report.duplicate_barcodes;
        embed_store::DocumentChunk chunk;
        chunk.id = "parcel:" + rec.barcode;
        chunk.text = record_chunk_text(rec, taxonomy);
        chunk.source = embed_store::ChunkSource::ParcelRecord;
        chunk.metadata["barcode"] = rec.barcode;
        index.upsert(chunk);
        if (!replaced) {
            ++report.parcels;
            ++report.chunks;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// alpaca export

struct AlpacaExample {
    std::string instruction;
    std::string input;
    std::string response;
};

inline constexpr const char* kAlpacaInstruction =
    "Describe the key events in the package's journey from sender to receiver, focusing on "
    "crucial moments.";

// The realizer maps a record to (tracking details, narrative); the agents
// module supplies its deterministic story realizer here.
using StoryRealizerFn =
    std::function<std::pair<std::string, std::string>(const ParcelRecord&)>;

inline std::vector<AlpacaExample> export_alpaca(const std::vector<ParcelRecord>& records,
                                                const StoryRealizerFn& realizer) {
    std::vector<AlpacaExample> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        auto [input, response] = realizer(rec);
        out.push_back({kAlpacaInstruction, input, response});
    }
    return out;
}

inline void save_alpaca_jsonl(std::ostream& out, const std::vector<AlpacaExample>& examples) {
    for (const auto& e : examples) {
        nlohmann::json j;
        j["instruction"] = e.instruction;
        j["input"] = e.input;
        j["response"] = e.response;
        out << j.dump() << "\n";
    }
}

// ---------------------------------------------------------------------------
// record serialization (JSONL corpus)

inline nlohmann::json record_to_json(const ParcelRecord& rec) {
    nlohmann::json j;
    j["barcode"] = rec.barcode;
    j["delivered"] = rec.delivered;
    j["customer_meta"] = rec.customer_meta;
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : rec.events) {
        events.push_back({{"code", ev.code.raw},
                          {"ts", format_iso8601(ev.timestamp)},
                          {"location", ev.location},
                          {"source", ev.source_system}});
    }
    j["events"] = std::move(events);
    return j;
}

inline ParcelRecord record_from_json(const nlohmann::json& j) {
    ParcelRecord rec;
    rec.barcode = j.at("barcode").get<std::string>();
    rec.delivered = j.at("delivered").get<bool>();
    for (auto it = j.at("customer_meta").begin(); it != j.at("customer_meta").end(); ++it)
        rec.customer_meta[it.key()] = it.value().get<std::string>();
    for (const auto& e : j.at("events")) {
        ObservedEvent ev;
        ev.code = event_model::parse_event_code(e.at("code").get<std::string>());
        ev.timestamp = parse_timestamp(e.at("ts").get<std::string>());
        ev.location = e.at("location").get<std::string>();
        ev.source_system = e.at("source").get<std::string>();
        rec.events.push_back(std::move(ev));
    }
    return rec;
}

inline void save_records_jsonl(std::ostream& out, const std::vector<ParcelRecord>& records) {
    for (const auto& rec : records) out << record_to_json(rec).dump() << "\n";
}

inline std::vector<ParcelRecord> load_records_jsonl(std::istream& in) {
    std::vector<ParcelRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        out.push_back(record_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

inline std::vector<ParcelRecord> load_records_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);
    return load_records_jsonl(in);
}

// Re-serialize records into an English-headed table; used to demonstrate
// that the transform is idempotent.
inline RawTable records_to_table(const std::vector<ParcelRecord>& records) {
    RawTable table;
    table.headers = {"barcode",     "observation",   "timestamp",      "location_id",
                     "source_system", "delivered",   "customer_name",  "sender_city",
                     "recipient_city", "weight_grams", "service_level"};
    for (const auto& rec : records) {
        for (const auto& ev : rec.events) {
            std::vector<std::string> row(table.headers.size(), "");
            row[0] = rec.barcode;
            row[1] = ev.code.raw;
            row[2] = format_iso8601(ev.timestamp);
            row[3] = ev.location;
            row[4] = ev.source_system;
            row[5] = rec.delivered ? "ja" : "nee";
            auto get = [&](const char* key) {
                auto it = rec.customer_meta.find(key);
                return it == rec.customer_meta.end() ? std::string() : it->second;
            };
            row[6] = get("customer_name");
            row[7] = get("sender_city");
            row[8] = get("recipient_city");
            row[9] = get("weight_grams");
            row[10] = get("service_level");
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

}  // namespace supertracy::data_pipeline
