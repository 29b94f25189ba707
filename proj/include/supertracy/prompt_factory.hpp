#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "supertracy/errors.hpp"
#include "supertracy/event_model.hpp"
#include "supertracy/lang.hpp"
#include "supertracy/seq_model.hpp"
#include "supertracy/text.hpp"

namespace supertracy::prompt_factory {

enum class AgentId { Reception, Parcel, KnowledgeExpert };

inline std::string to_string(AgentId a) {
    switch (a) {
        case AgentId::Reception: return "Reception";
        case AgentId::Parcel: return "Parcel";
        case AgentId::KnowledgeExpert: return "KnowledgeExpert";
    }
    return "Reception";
}

inline AgentId agent_from_string(const std::string& s) {
    if (s == "Reception") return AgentId::Reception;
    if (s == "Parcel") return AgentId::Parcel;
    if (s == "KnowledgeExpert") return AgentId::KnowledgeExpert;
    throw SchemaMismatch("unknown agent: " + s);
}

enum class TemplateKind { AgentPersona, AgentInstruction, ParcelReport, OutputGeneration };

inline std::string to_string(TemplateKind k) {
    switch (k) {
        case TemplateKind::AgentPersona: return "AgentPersona";
        case TemplateKind::AgentInstruction: return "AgentInstruction";
        case TemplateKind::ParcelReport: return "ParcelReport";
        case TemplateKind::OutputGeneration: return "OutputGeneration";
    }
    return "AgentPersona";
}

inline TemplateKind template_kind_from_string(const std::string& s) {
    if (s == "AgentPersona") return TemplateKind::AgentPersona;
    if (s == "AgentInstruction") return TemplateKind::AgentInstruction;
    if (s == "ParcelReport") return TemplateKind::ParcelReport;
    if (s == "OutputGeneration") return TemplateKind::OutputGeneration;
    throw SchemaMismatch("unknown template kind: " + s);
}

// Natural-language scaffolding with {variable} placeholders.
struct PromptTemplate {
    std::string id;
    AgentId agent = AgentId::Reception;
    TemplateKind kind = TemplateKind::AgentPersona;
    LanguageCode language = LanguageCode::en;
    std::string body;
    std::vector<std::string> variables;
};

struct GenerationParams {
    double temperature = 0.0;  // 0 selects canonical phrasing
    int context_window = 2048;
    std::string chat_mode = "single_turn";
    bool follow_up_questions = false;
    bool memory_enabled = false;
};

// Placeholders found in a body, in order of first appearance.
inline std::set<std::string> placeholders_in(const std::string& body) {
    std::set<std::string> out;
    size_t pos = 0;
    while (pos < body.size()) {
        size_t open = body.find('{', pos);
        if (open == std::string::npos) break;
        size_t close = body.find('}', open + 1);
        if (close == std::string::npos) break;
        std::string name = body.substr(open + 1, close - open - 1);
        bool ident = !name.empty();
        for (char c : name)
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') ident = false;
        if (ident) out.insert(name);
        pos = close + 1;
    }
    return out;
}

// Substitutes every declared placeholder. A declared variable without a
// binding raises UnboundVariable; bindings that match no declared variable
// are collected as warnings rather than errors.
inline std::string render(const PromptTemplate& tmpl,
                          const std::map<std::string, std::string>& bindings,
                          std::vector<std::string>* warnings = nullptr) {
    for (const auto& var : tmpl.variables) {
        if (!bindings.count(var))
            throw UnboundVariable("no binding for {" + var + "} in template " + tmpl.id);
    }
    if (warnings) {
        for (const auto& [name, value] : bindings) {
            bool declared = false;
            for (const auto& var : tmpl.variables)
                if (var == name) declared = true;
            if (!declared) warnings->push_back("unknown variable: " + name);
        }
    }
    std::string out = tmpl.body;
    for (const auto& var : tmpl.variables) {
        const std::string needle = "{" + var + "}";
        const std::string& value = bindings.at(var);
        size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return out;
}

// Catalog keyed by (agent, kind, language). A missing language variant falls
// back to English with a notice; a template missing in every language raises
// MissingTemplate.
class TemplateCatalog {
public:
    void add(const PromptTemplate& tmpl) {
        auto declared = std::set<std::string>(tmpl.variables.begin(), tmpl.variables.end());
        if (placeholders_in(tmpl.body) != declared)
            throw SchemaMismatch("template " + tmpl.id + "/" + to_string(tmpl.language) +
                                 ": placeholders and declared variables differ");
        templates_[key(tmpl.agent, tmpl.kind, tmpl.language)] = tmpl;
        by_id_[tmpl.id + "/" + supertracy::to_string(tmpl.language)] = tmpl;
    }

    size_t size() const { return templates_.size(); }

    const PromptTemplate& get(AgentId agent, TemplateKind kind, LanguageCode language,
                              bool* used_fallback = nullptr) const {
        if (used_fallback) *used_fallback = false;
        auto it = templates_.find(key(agent, kind, language));
        if (it != templates_.end()) return it->second;
        it = templates_.find(key(agent, kind, LanguageCode::en));
        if (it != templates_.end()) {
            if (used_fallback) *used_fallback = true;
            return it->second;
        }
        throw MissingTemplate("no template for (" + to_string(agent) + ", " + to_string(kind) +
                              ") in any language");
    }

    // Lookup by template id for the translation surface.
    const PromptTemplate& get_by_id(const std::string& id, LanguageCode language,
                                    bool* used_fallback = nullptr) const {
        if (used_fallback) *used_fallback = false;
        auto it = by_id_.find(id + "/" + supertracy::to_string(language));
        if (it != by_id_.end()) return it->second;
        it = by_id_.find(id + "/en");
        if (it != by_id_.end()) {
            if (used_fallback) *used_fallback = true;
            return it->second;
        }
        throw MissingTemplate("no template with id " + id);
    }

    static TemplateCatalog load_json_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open template catalog: " + path);
        nlohmann::json j;
        in >> j;
        TemplateCatalog catalog;
        for (const auto& e : j.at("templates")) {
            PromptTemplate t;
            t.id = e.at("id").get<std::string>();
            t.agent = agent_from_string(e.at("agent").get<std::string>());
            t.kind = template_kind_from_string(e.at("kind").get<std::string>());
            t.language = language_from_string(e.at("language").get<std::string>());
            t.body = e.at("body").get<std::string>();
            t.variables = e.at("variables").get<std::vector<std::string>>();
            catalog.add(t);
        }
        return catalog;
    }

private:
    static std::string key(AgentId agent, TemplateKind kind, LanguageCode language) {
        return to_string(agent) + "|" + to_string(kind) + "|" + supertracy::to_string(language);
    }

    std::map<std::string, PromptTemplate> templates_;
    std::map<std::string, PromptTemplate> by_id_;
};

inline const PromptTemplate& get_template(const TemplateCatalog& catalog, AgentId agent,
                                          TemplateKind kind, LanguageCode language,
                                          bool* used_fallback = nullptr) {
    return catalog.get(agent, kind, language, used_fallback);
}

// The fixed reasoning chain behind the parcel report: extract the barcode,
// gather events, resolve descriptions and location kinds, order the
// timeline, mark exceptions, drop automatically released default events
// (keeping the acceptance and terminal events), and label any prediction.
inline std::string build_parcel_report(const event_model::ParcelRecord& record,
                                       const event_model::EventTaxonomy& taxonomy,
                                       const event_model::LocationCatalog& locations,
                                       const seq_model::PredictedSuffix* prediction,
                                       const TemplateCatalog& catalog,
                                       LanguageCode language = LanguageCode::en) {
    std::vector<event_model::ObservedEvent> ordered = record.events;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });

    std::string timeline;
    std::string issues;
    for (size_t i = 0; i < ordered.size(); ++i) {
        const auto& ev = ordered[i];
        const auto& def = taxonomy.lookup(ev.code);
        const auto& loc = locations.lookup(ev.location);
        bool is_edge = i == 0 || i + 1 == ordered.size();
        if (def.default_auto && !is_edge) continue;
        timeline += "- " + format_iso8601(ev.timestamp) + "  " + ev.code.raw + "  " +
                    def.description + "  at " + loc.name + " (" +
                    event_model::kind_phrase(loc.kind) + ")";
        if (def.category == event_model::Category::Exception) {
            timeline += "  [issue]";
            issues += "- " + ev.code.raw + " " + def.description + " at " + loc.name + " on " +
                      format_iso8601(ev.timestamp) + "\n";
        }
        timeline += "\n";
    }
    if (issues.empty()) issues = "- none\n";

    std::string prediction_section;
    if (prediction && !prediction->codes.empty()) {
        prediction_section = "Prediction (expected continuation, not yet observed):\n";
        for (const auto& code : prediction->codes) {
            prediction_section += "- " + code.raw + " " + taxonomy.lookup(code).description + "\n";
        }
    }

    const PromptTemplate& tmpl =
        catalog.get(AgentId::Parcel, TemplateKind::ParcelReport, language);
    return render(tmpl, {{"barcode", record.barcode},
                         {"timeline", timeline},
                         {"issues", issues},
                         {"prediction_section", prediction_section}});
}

}  // namespace supertracy::prompt_factory
