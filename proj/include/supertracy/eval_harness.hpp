#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "supertracy/agents.hpp"
#include "supertracy/data_pipeline.hpp"
#include "supertracy/errors.hpp"
#include "supertracy/event_model.hpp"
#include "supertracy/rng.hpp"

namespace supertracy::eval_harness {

using agents::JourneyStory;
using event_model::EventTaxonomy;
using event_model::LocationCatalog;
using event_model::ParcelRecord;

enum class QualitativeFlag {
    FabricatedEvent,
    MissingKeyEvent,
    MisreadEtaUpdateAsDelay,
    DefaultEventMentioned,
    WrongLocationKind,
};

inline std::string to_string(QualitativeFlag f) {
    switch (f) {
        case QualitativeFlag::FabricatedEvent: return "FabricatedEvent";
        case QualitativeFlag::MissingKeyEvent: return "MissingKeyEvent";
        case QualitativeFlag::MisreadEtaUpdateAsDelay: return "MisreadEtaUpdateAsDelay";
        case QualitativeFlag::DefaultEventMentioned: return "DefaultEventMentioned";
        case QualitativeFlag::WrongLocationKind: return "WrongLocationKind";
    }
    return "FabricatedEvent";
}

struct RubricScore {
    int value = 5;  // 1..5
};

// Words the realizer must never attach to an ETA update.
inline const std::vector<std::string>& delay_vocabulary() {
    static const std::vector<std::string> words = {"delay",      "delayed",  "delays",
                                                   "vertraging", "vertraagd", "unforeseen"};
    return words;
}

// n distinct barcodes of parcels with at least one exception event,
// deterministic per seed.
inline std::vector<std::string> sample_unhappy(const std::vector<ParcelRecord>& corpus, size_t n,
                                               uint64_t seed, const EventTaxonomy& taxonomy) {
    std::vector<std::string> unhappy;
    for (const auto& rec : corpus) {
        bool has_exception = false;
        for (const auto& ev : rec.events) {
            if (taxonomy.contains(ev.code) &&
                taxonomy.lookup(ev.code).category == event_model::Category::Exception) {
                has_exception = true;
                break;
            }
        }
        if (has_exception) unhappy.push_back(rec.barcode);
    }
    std::sort(unhappy.begin(), unhappy.end());
    if (unhappy.size() < n)
        throw InsufficientUnhappyParcels("corpus holds " + std::to_string(unhappy.size()) +
                                         " unhappy parcels, need " + std::to_string(n));
    Rng rng = Rng(seed).fork("unhappy-sample");
    rng.shuffle(unhappy);
    unhappy.resize(n);
    return unhappy;
}

// Start at 5; deduct 2 when the story fabricates an event, 1 for each other
// flag kind present (each kind counted once); clamp to [1, 5].
inline std::pair<RubricScore, std::vector<QualitativeFlag>> score_story(
    const JourneyStory& story, const ParcelRecord& truth, const EventTaxonomy& taxonomy,
    const LocationCatalog& locations) {
    if (story.barcode != truth.barcode)
        throw BarcodeMismatch("story is about " + story.barcode + ", truth about " + truth.barcode);

    std::set<QualitativeFlag> flags;

    // fabricated: a narrated event that matches no registered occurrence
    auto matches_truth = [&](const agents::KeyEvent& ke) {
        for (const auto& ev : truth.events) {
            if (ev.code.raw == ke.code && ev.timestamp == ke.timestamp &&
                ev.location == ke.location)
                return true;
        }
        return false;
    };
    for (const auto& ke : story.key_events) {
        if (!matches_truth(ke)) {
            flags.insert(QualitativeFlag::FabricatedEvent);
            break;
        }
    }

    // missing: an external, non-default occurrence not covered by the story
    for (const auto& ev : truth.events) {
        if (!taxonomy.contains(ev.code)) continue;
        const auto& def = taxonomy.lookup(ev.code);
        if (def.visibility != event_model::Visibility::External || def.default_auto) continue;
        bool covered = false;
        for (const auto& ke : story.key_events) {
            if (ke.code == ev.code.raw && ke.timestamp == ev.timestamp) {
                covered = true;
                break;
            }
        }
        if (!covered) {
            flags.insert(QualitativeFlag::MissingKeyEvent);
            break;
        }
    }

    // ETA updates narrated with delay wording, checked per sentence
    {
        std::string lower = to_lower(story.narrative);
        std::vector<std::string> sentences = split(lower, '.');
        for (const auto& sentence : sentences) {
            bool about_eta = contains(sentence, "estimated time of arrival") ||
                             contains(sentence, "eta ");
            if (!about_eta) continue;
            for (const auto& word : delay_vocabulary()) {
                if (contains(sentence, word)) {
                    flags.insert(QualitativeFlag::MisreadEtaUpdateAsDelay);
                    break;
                }
            }
        }
    }

    // automatically released default events have no place in a story
    {
        std::string lower = to_lower(story.narrative);
        for (const auto& ke : story.key_events) {
            auto code = event_model::parse_event_code(ke.code);
            if (taxonomy.contains(code) && taxonomy.lookup(code).default_auto) {
                flags.insert(QualitativeFlag::DefaultEventMentioned);
                break;
            }
        }
        for (const auto& ev : truth.events) {
            if (!taxonomy.contains(ev.code)) continue;
            const auto& def = taxonomy.lookup(ev.code);
            if (def.default_auto && contains(lower, to_lower(def.description))) {
                flags.insert(QualitativeFlag::DefaultEventMentioned);
                break;
            }
        }
    }

    // stated location kind must match the catalog
    for (const auto& ke : story.key_events) {
        if (!locations.contains(ke.location)) continue;
        if (ke.narrated_kind != event_model::kind_phrase(locations.lookup(ke.location).kind)) {
            flags.insert(QualitativeFlag::WrongLocationKind);
            break;
        }
    }

    int score = 5;
    for (auto f : flags) score -= (f == QualitativeFlag::FabricatedEvent) ? 2 : 1;
    score = std::max(1, std::min(5, score));
    return {RubricScore{score}, std::vector<QualitativeFlag>(flags.begin(), flags.end())};
}

struct EvalCase {
    std::string barcode;
    int score = 0;
    std::vector<QualitativeFlag> flags;
    double latency_ms = 0.0;
    std::string error;  // empty on success
};

struct EvalReport {
    std::vector<EvalCase> cases;
    std::map<int, size_t> histogram;  // score -> count
    double median = 0.0;
    double fraction_ge_3 = 0.0;
    size_t errors = 0;
    // runtime stats; reported on stderr, excluded from deterministic output
    double mean_latency_ms = 0.0;
    double max_latency_ms = 0.0;
};

struct EvalPipeline {
    const data_pipeline::JourneyStore& store;
    const seq_model::ModelParams& model;
    const seq_model::Vocabulary& vocab;
    const EventTaxonomy& taxonomy;
    const LocationCatalog& locations;
    const prompt_factory::TemplateCatalog& catalog;
    prompt_factory::GenerationParams params{};
    uint64_t seed = 0;
};

// Generates and scores one story per barcode. Per-case failures are recorded
// and never abort the run. Aggregation is order-independent.
inline EvalReport run_eval(const EvalPipeline& pipeline, const std::vector<std::string>& barcodes) {
    EvalReport report;
    for (int s = 1; s <= 5; ++s) report.histogram[s] = 0;

    for (const auto& barcode : barcodes) {
        EvalCase c;
        c.barcode = barcode;
        auto t0 = std::chrono::steady_clock::now();
        try {
            JourneyStory story =
                agents::parcel_reply(barcode, pipeline.store, pipeline.model, pipeline.vocab,
                                     pipeline.taxonomy, pipeline.locations, pipeline.catalog,
                                     pipeline.params, pipeline.seed);
            auto [score, flags] =
                score_story(story, pipeline.store.lookup(barcode), pipeline.taxonomy,
                            pipeline.locations);
            c.score = score.value;
            c.flags = flags;
        } catch (const std::exception& e) {
            c.error = e.what();
            ++report.errors;
        }
        auto t1 = std::chrono::steady_clock::now();
        c.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        report.cases.push_back(std::move(c));
    }

    std::vector<int> scores;
    double latency_sum = 0.0;
    for (const auto& c : report.cases) {
        latency_sum += c.latency_ms;
        report.max_latency_ms = std::max(report.max_latency_ms, c.latency_ms);
        if (!c.error.empty()) continue;
        scores.push_back(c.score);
        report.histogram[c.score] += 1;
    }
    if (!report.cases.empty())
        report.mean_latency_ms = latency_sum / static_cast<double>(report.cases.size());
    if (!scores.empty()) {
        std::sort(scores.begin(), scores.end());
        size_t n = scores.size();
        report.median = (n % 2 == 1)
                            ? static_cast<double>(scores[n / 2])
                            : (static_cast<double>(scores[n / 2 - 1] + scores[n / 2]) / 2.0);
        size_t ge3 = 0;
        for (int s : scores)
            if (s >= 3) ++ge3;
        report.fraction_ge_3 = static_cast<double>(ge3) / static_cast<double>(n);
    }
    return report;
}

// Deterministic JSON view: everything except wall-clock latencies.
inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& c : report.cases) {
        nlohmann::json cj;
        cj["barcode"] = c.barcode;
        cj["score"] = c.score;
        nlohmann::json flags = nlohmann::json::array();
        for (auto f : c.flags) flags.push_back(to_string(f));
        cj["flags"] = std::move(flags);
        if (!c.error.empty()) cj["error"] = c.error;
        cases.push_back(std::move(cj));
    }
    j["cases"] = std::move(cases);
    nlohmann::json hist;
    for (const auto& [score, count] : report.histogram) hist[std::to_string(score)] = count;
    j["histogram"] = std::move(hist);
    j["median"] = report.median;
    j["fraction_ge_3"] = report.fraction_ge_3;
    j["errors"] = report.errors;
    return j;
}

// Markdown summary with an ASCII histogram; deterministic.
inline std::string report_to_markdown(const EvalReport& report) {
    std::string out = "# Story evaluation\n\n";
    out += "Cases: " + std::to_string(report.cases.size()) + "\n";
    out += "Errors: " + std::to_string(report.errors) + "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "Median score: %.1f\n", report.median);
    out += buf;
    std::snprintf(buf, sizeof(buf), "Fraction >= 3: %.2f\n\n", report.fraction_ge_3);
    out += buf;
    out += "## Score histogram\n\n";
    for (int s = 1; s <= 5; ++s) {
        size_t count = report.histogram.count(s) ? report.histogram.at(s) : 0;
        out += "score " + std::to_string(s) + " | ";
        out += std::string(count, '#');
        out += " " + std::to_string(count) + "\n";
    }
    out += "\n## Flags\n\n";
    std::map<std::string, size_t> flag_counts;
    for (const auto& c : report.cases)
        for (auto f : c.flags) flag_counts[to_string(f)] += 1;
    if (flag_counts.empty()) out += "none\n";
    for (const auto& [name, count] : flag_counts)
        out += "- " + name + ": " + std::to_string(count) + "\n";
    return out;
}

}  // namespace supertracy::eval_harness
