#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "supertracy/csv.hpp"
#include "supertracy/errors.hpp"
#include "supertracy/text.hpp"
#include "supertracy/time_util.hpp"

namespace supertracy::event_model {

// A logistic event code: one uppercase letter followed by two digits.
struct EventCode {
    char letter = 'A';
    int number = 0;
    std::string raw;  // canonical 3-character form, e.g. "A01"

    bool operator==(const EventCode& o) const { return raw == o.raw; }
    bool operator!=(const EventCode& o) const { return raw != o.raw; }
    bool operator<(const EventCode& o) const { return raw < o.raw; }
};

enum class Visibility { Internal, External };
enum class Category { Collect, Sort, Transport, Deliver, Exception, Admin };

inline std::string to_string(Visibility v) {
    return v == Visibility::Internal ? "Internal" : "External";
}

inline std::string to_string(Category c) {
    switch (c) {
        case Category::Collect: return "Collect";
        case Category::Sort: return "Sort";
        case Category::Transport: return "Transport";
        case Category::Deliver: return "Deliver";
        case Category::Exception: return "Exception";
        case Category::Admin: return "Admin";
    }
    return "Admin";
}

inline Visibility visibility_from_string(const std::string& s) {
    if (s == "Internal") return Visibility::Internal;
    if (s == "External") return Visibility::External;
    throw SchemaMismatch("unknown visibility: " + s);
}

inline Category category_from_string(const std::string& s) {
    if (s == "Collect") return Category::Collect;
    if (s == "Sort") return Category::Sort;
    if (s == "Transport") return Category::Transport;
    if (s == "Deliver") return Category::Deliver;
    if (s == "Exception") return Category::Exception;
    if (s == "Admin") return Category::Admin;
    throw SchemaMismatch("unknown category: " + s);
}

struct EventDefinition {
    EventCode code;
    std::string description;
    Visibility visibility = Visibility::Internal;
    Category category = Category::Admin;
    bool default_auto = false;  // automatically released default event
};

// Case-folds then matches one letter plus exactly two digits.
inline EventCode parse_event_code(const std::string& s) {
    std::string t = to_upper(trim(s));
    if (t.size() != 3 || t[0] < 'A' || t[0] > 'Z' || t[1] < '0' || t[1] > '9' || t[2] < '0' ||
        t[2] > '9') {
        throw MalformedCode("not a letter plus two digits: '" + s + "'");
    }
    EventCode c;
    c.letter = t[0];
    c.number = (t[1] - '0') * 10 + (t[2] - '0');
    c.raw = t;
    return c;
}

class EventTaxonomy {
public:
    void add(const EventDefinition& def) {
        if (definitions_.count(def.code.raw)) throw SchemaMismatch("duplicate code " + def.code.raw);
        if (def.description.empty()) throw SchemaMismatch("empty description for " + def.code.raw);
        definitions_[def.code.raw] = def;
    }

    size_t size() const { return definitions_.size(); }
    bool contains(const EventCode& code) const { return definitions_.count(code.raw) > 0; }

    const EventDefinition& lookup(const EventCode& code) const {
        auto it = definitions_.find(code.raw);
        if (it == definitions_.end()) throw UnknownCode("code not in taxonomy: " + code.raw);
        return it->second;
    }

    const std::map<std::string, EventDefinition>& definitions() const { return definitions_; }

    // Codes sorted by raw form; the stable basis for the model vocabulary.
    std::vector<EventCode> sorted_codes() const {
        std::vector<EventCode> out;
        out.reserve(definitions_.size());
        for (const auto& [raw, def] : definitions_) out.push_back(def.code);
        return out;
    }

private:
    std::map<std::string, EventDefinition> definitions_;
};

inline const EventDefinition& lookup_definition(const EventTaxonomy& taxonomy,
                                                const EventCode& code) {
    return taxonomy.lookup(code);
}

enum class LocationKind { SortingCenter, DistributionCenter, RetailLocation, Warehouse, Hub };

inline std::string to_string(LocationKind k) {
    switch (k) {
        case LocationKind::SortingCenter: return "SortingCenter";
        case LocationKind::DistributionCenter: return "DistributionCenter";
        case LocationKind::RetailLocation: return "RetailLocation";
        case LocationKind::Warehouse: return "Warehouse";
        case LocationKind::Hub: return "Hub";
    }
    return "Hub";
}

inline LocationKind location_kind_from_string(const std::string& s) {
    if (s == "SortingCenter") return LocationKind::SortingCenter;
    if (s == "DistributionCenter") return LocationKind::DistributionCenter;
    if (s == "RetailLocation") return LocationKind::RetailLocation;
    if (s == "Warehouse") return LocationKind::Warehouse;
    if (s == "Hub") return LocationKind::Hub;
    throw SchemaMismatch("unknown location kind: " + s);
}

// Human-readable kind used in narratives ("sorting center", not "SortingCenter").
inline std::string kind_phrase(LocationKind k) {
    switch (k) {
        case LocationKind::SortingCenter: return "sorting center";
        case LocationKind::DistributionCenter: return "distribution center";
        case LocationKind::RetailLocation: return "retail location";
        case LocationKind::Warehouse: return "warehouse";
        case LocationKind::Hub: return "hub";
    }
    return "hub";
}

struct LocationRecord {
    std::string id;
    std::string name;
    LocationKind kind = LocationKind::Hub;
};

class LocationCatalog {
public:
    void add(const LocationRecord& rec) {
        if (by_id_.count(rec.id)) throw SchemaMismatch("duplicate location id " + rec.id);
        order_.push_back(rec.id);
        by_id_[rec.id] = rec;
    }

    size_t size() const { return by_id_.size(); }
    bool contains(const std::string& id) const { return by_id_.count(id) > 0; }

    const LocationRecord& lookup(const std::string& id) const {
        auto it = by_id_.find(id);
        if (it == by_id_.end()) throw UnknownLocation("location not in catalog: " + id);
        return it->second;
    }

    std::vector<const LocationRecord*> of_kind(LocationKind k) const {
        std::vector<const LocationRecord*> out;
        for (const auto& id : order_) {
            const auto& rec = by_id_.at(id);
            if (rec.kind == k) out.push_back(&rec);
        }
        return out;
    }

private:
    std::vector<std::string> order_;
    std::map<std::string, LocationRecord> by_id_;
};

struct ObservedEvent {
    EventCode code;
    int64_t timestamp = 0;  // epoch seconds UTC
    std::string location;   // LocationRecord id
    std::string source_system;
};

struct ParcelRecord {
    std::string barcode;
    std::vector<ObservedEvent> events;
    std::map<std::string, std::string> customer_meta;
    bool delivered = false;
};

enum class ViolationKind {
    EmptyEvents,
    NonMonotonicTimestamps,
    UnknownEventCode,
    UnknownLocation,
    DeliveredWithoutDeliverEnd,
};

inline std::string to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::EmptyEvents: return "EmptyEvents";
        case ViolationKind::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
        case ViolationKind::UnknownEventCode: return "UnknownEventCode";
        case ViolationKind::UnknownLocation: return "UnknownLocation";
        case ViolationKind::DeliveredWithoutDeliverEnd: return "DeliveredWithoutDeliverEnd";
    }
    return "EmptyEvents";
}

struct Violation {
    ViolationKind kind;
    std::string detail;
};

// Violations are data, not errors: an empty list means every record
// invariant holds and every code/location resolves.
inline std::vector<Violation> validate_record(const ParcelRecord& record,
                                              const EventTaxonomy& taxonomy,
                                              const LocationCatalog& locations) {
    std::vector<Violation> out;
    if (record.events.empty()) {
        out.push_back({ViolationKind::EmptyEvents, record.barcode});
        return out;
    }
    int64_t prev = record.events.front().timestamp;
    bool monotonic_reported = false;
    std::set<std::string> unknown_codes, unknown_locations;
    for (const auto& ev : record.events) {
        if (ev.timestamp < prev && !monotonic_reported) {
            out.push_back({ViolationKind::NonMonotonicTimestamps,
                           record.barcode + " at " + format_iso8601(ev.timestamp)});
            monotonic_reported = true;
        }
        prev = std::max(prev, ev.timestamp);
        if (!taxonomy.contains(ev.code) && unknown_codes.insert(ev.code.raw).second) {
            out.push_back({ViolationKind::UnknownEventCode, ev.code.raw});
        }
        if (!locations.contains(ev.location) && unknown_locations.insert(ev.location).second) {
            out.push_back({ViolationKind::UnknownLocation, ev.location});
        }
    }
    if (record.delivered) {
        const auto& last = record.events.back();
        if (taxonomy.contains(last.code) &&
            taxonomy.lookup(last.code).category != Category::Deliver) {
            out.push_back({ViolationKind::DeliveredWithoutDeliverEnd, last.code.raw});
        }
    }
    return out;
}

// Catalog files are CSV with headers:
//   code,description,visibility,category,default_auto
//   id,name,kind
inline EventTaxonomy load_taxonomy(const std::string& path) {
    CsvFile f = read_csv(path);
    const std::vector<std::string> expected = {"code", "description", "visibility", "category",
                                               "default_auto"};
    if (f.headers != expected) throw SchemaMismatch("unexpected taxonomy header in " + path);
    EventTaxonomy tax;
    for (const auto& row : f.rows) {
        if (row.size() != 5) throw SchemaMismatch("bad taxonomy row width in " + path);
        EventDefinition def;
        def.code = parse_event_code(row[0]);
        def.description = row[1];
        def.visibility = visibility_from_string(row[2]);
        def.category = category_from_string(row[3]);
        def.default_auto = row[4] == "true" || row[4] == "1";
        tax.add(def);
    }
    return tax;
}

inline LocationCatalog load_locations(const std::string& path) {
    CsvFile f = read_csv(path);
    const std::vector<std::string> expected = {"id", "name", "kind"};
    if (f.headers != expected) throw SchemaMismatch("unexpected location header in " + path);
    LocationCatalog cat;
    for (const auto& row : f.rows) {
        if (row.size() != 3) throw SchemaMismatch("bad location row width in " + path);
        cat.add({row[0], row[1], location_kind_from_string(row[2])});
    }
    return cat;
}

}  // namespace supertracy::event_model
