#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "supertracy/agents.hpp"
#include "supertracy/compress.hpp"
#include "supertracy/csv.hpp"
#include "supertracy/data_pipeline.hpp"
#include "supertracy/embed_store.hpp"
#include "supertracy/errors.hpp"
#include "supertracy/eval_harness.hpp"
#include "supertracy/event_model.hpp"
#include "supertracy/nl_io.hpp"
#include "supertracy/prompt_factory.hpp"
#include "supertracy/seq_model.hpp"

namespace supertracy::app {

struct AppConfig {
    uint64_t seed = 42;
    std::string data_dir = "data";
    std::string out_dir = "out";

    data_pipeline::CorpusConfig corpus;
    data_pipeline::SplitRatios split_ratios;
    seq_model::TrainConfig train;
    prompt_factory::GenerationParams generation;

    std::string barcode_grammar = nl_io::kDefaultBarcodeGrammar;
    double eval_threshold = 0.75;
    size_t eval_sample = 100;
    double knowledge_threshold = 0.25;
    size_t knowledge_k = 4;
    size_t chunk_size = 64;
    size_t chunk_overlap = 8;
    int quantize_bits = 8;
    int lora_rank = 4;
    size_t prediction_max_len = 12;

    // bundled catalog files
    std::string taxonomy_path() const { return data_dir + "/waarnemingen.csv"; }
    std::string locations_path() const { return data_dir + "/locations.csv"; }
    std::string abbreviations_path() const { return data_dir + "/abbreviations.csv"; }
    std::string dictionary_path() const { return data_dir + "/column_dictionary.csv"; }
    std::string profiles_path() const { return data_dir + "/lang_profiles.json"; }
    std::string langid_testset_path() const { return data_dir + "/langid_testset.json"; }
    std::string templates_path() const { return data_dir + "/templates.json"; }
    std::string internal_docs_path() const { return data_dir + "/internal_docs.md"; }

    // pipeline artifacts
    std::string corpus_csv_path() const { return out_dir + "/corpus_raw.csv"; }
    std::string corpus_jsonl_path() const { return out_dir + "/corpus.jsonl"; }
    std::string alpaca_path() const { return out_dir + "/alpaca.jsonl"; }
    std::string checkpoint_path() const { return out_dir + "/checkpoint.json"; }
    std::string quantized_path() const { return out_dir + "/checkpoint_quantized.json"; }
    std::string lora_path() const { return out_dir + "/lora_adapters.json"; }
    std::string index_path() const { return out_dir + "/index.jsonl"; }
    std::string losstrace_path() const { return out_dir + "/losstrace.csv"; }

    // the one global seed governs every sub-seed
    void propagate_seed() {
        corpus.seed = seed;
        train.seed = seed;
    }
};

inline AppConfig config_from_json(const nlohmann::json& j) {
    AppConfig c;
    auto get = [&](const char* key, auto& target) {
        if (j.contains(key)) target = j.at(key).get<std::decay_t<decltype(target)>>();
    };
    get("seed", c.seed);
    get("data_dir", c.data_dir);
    get("out_dir", c.out_dir);
    get("barcode_grammar", c.barcode_grammar);
    get("eval_threshold", c.eval_threshold);
    get("eval_sample", c.eval_sample);
    get("knowledge_threshold", c.knowledge_threshold);
    get("knowledge_k", c.knowledge_k);
    get("chunk_size", c.chunk_size);
    get("chunk_overlap", c.chunk_overlap);
    get("quantize_bits", c.quantize_bits);
    get("lora_rank", c.lora_rank);
    get("prediction_max_len", c.prediction_max_len);
    if (j.contains("corpus")) {
        const auto& cc = j.at("corpus");
        auto cget = [&](const char* key, auto& target) {
            if (cc.contains(key)) target = cc.at(key).get<std::decay_t<decltype(target)>>();
        };
        cget("n_parcels", c.corpus.n_parcels);
        cget("unhappy_rate", c.corpus.unhappy_rate);
        cget("in_progress_rate", c.corpus.in_progress_rate);
        cget("n_columns", c.corpus.n_columns);
        if (cc.contains("date_start")) c.corpus.date_start = parse_timestamp(cc.at("date_start"));
        if (cc.contains("date_end")) c.corpus.date_end = parse_timestamp(cc.at("date_end"));
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        if (s.contains("train")) c.split_ratios.train = s.at("train").get<double>();
        if (s.contains("val")) c.split_ratios.val = s.at("val").get<double>();
        if (s.contains("test")) c.split_ratios.test = s.at("test").get<double>();
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        auto tget = [&](const char* key, auto& target) {
            if (t.contains(key)) target = t.at(key).get<std::decay_t<decltype(target)>>();
        };
        tget("lr", c.train.lr);
        tget("batch_size", c.train.batch_size);
        tget("grad_accum_steps", c.train.grad_accum_steps);
        tget("total_steps", c.train.total_steps);
        tget("weight_decay", c.train.weight_decay);
        tget("d_model", c.train.dims.d_model);
        tget("n_heads", c.train.dims.n_heads);
        tget("d_ff", c.train.dims.d_ff);
        tget("max_positions", c.train.dims.max_positions);
    }
    if (j.contains("generation")) {
        const auto& g = j.at("generation");
        if (g.contains("temperature")) c.generation.temperature = g.at("temperature").get<double>();
        if (c.generation.temperature < 0.0) throw InvalidConfig("temperature must be >= 0");
        if (g.contains("context_window"))
            c.generation.context_window = g.at("context_window").get<int>();
        if (g.contains("chat_mode")) c.generation.chat_mode = g.at("chat_mode").get<std::string>();
        if (g.contains("follow_up_questions"))
            c.generation.follow_up_questions = g.at("follow_up_questions").get<bool>();
        if (g.contains("memory_enabled"))
            c.generation.memory_enabled = g.at("memory_enabled").get<bool>();
    }
    c.propagate_seed();
    return c;
}

inline AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

struct AbbreviationEntry {
    std::string abbreviation;
    std::string expansion;
    std::string explanation;
};

inline std::vector<AbbreviationEntry> load_abbreviations(const std::string& path) {
    CsvFile f = read_csv(path);
    if (f.headers != std::vector<std::string>{"abbreviation", "expansion", "explanation"})
        throw SchemaMismatch("unexpected abbreviation header in " + path);
    std::vector<AbbreviationEntry> out;
    for (const auto& row : f.rows) {
        if (row.size() != 3) throw SchemaMismatch("bad abbreviation row in " + path);
        out.push_back({row[0], row[1], row[2]});
    }
    return out;
}

// Immutable bundled catalogs, shared by every command.
struct Assets {
    event_model::EventTaxonomy taxonomy;
    event_model::LocationCatalog locations;
    std::vector<AbbreviationEntry> abbreviations;
    data_pipeline::ColumnDictionary dictionary;
    nl_io::LanguageProfiles profiles;
    prompt_factory::TemplateCatalog templates;
    std::string internal_docs;

    std::vector<std::string> abbreviation_terms() const {
        std::vector<std::string> out;
        for (const auto& a : abbreviations) out.push_back(a.abbreviation);
        return out;
    }
};

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline Assets load_assets(const AppConfig& config) {
    Assets a;
    a.taxonomy = event_model::load_taxonomy(config.taxonomy_path());
    a.locations = event_model::load_locations(config.locations_path());
    a.abbreviations = load_abbreviations(config.abbreviations_path());
    a.dictionary = data_pipeline::load_column_dictionary(config.dictionary_path());
    a.profiles = nl_io::LanguageProfiles::load_json_file(config.profiles_path());
    a.templates = prompt_factory::TemplateCatalog::load_json_file(config.templates_path());
    a.internal_docs = read_text_file(config.internal_docs_path());
    return a;
}

// Knowledge-base chunks: one per abbreviation, one per taxonomy code, and
// overlapping windows over the internal documents.
inline std::vector<embed_store::DocumentChunk> knowledge_chunks(const Assets& assets,
                                                                size_t chunk_size,
                                                                size_t chunk_overlap) {
    std::vector<embed_store::DocumentChunk> chunks;
    // dictionary-entry style: the headword repeats so hashed-feature cosine
    // keeps short lookup queries close to their chunk
    for (const auto& a : assets.abbreviations) {
        embed_store::DocumentChunk c;
        c.id = "abbr:" + a.abbreviation;
        c.text = a.abbreviation + ": " + a.abbreviation + " stands for " + a.expansion + ". " +
                 a.abbreviation + " explained: " + a.explanation;
        c.source = embed_store::ChunkSource::Abbreviations;
        c.metadata["abbreviation"] = a.abbreviation;
        chunks.push_back(std::move(c));
    }
    for (const auto& [raw, def] : assets.taxonomy.definitions()) {
        embed_store::DocumentChunk c;
        c.id = "tax:" + raw;
        c.text = raw + ": event code " + raw + ", " + def.description + " (" +
                 event_model::to_string(def.category) + ", " +
                 event_model::to_string(def.visibility) + ")";
        c.source = embed_store::ChunkSource::Taxonomy;
        c.metadata["code"] = raw;
        chunks.push_back(std::move(c));
    }
    auto doc_chunks = embed_store::chunk_document(assets.internal_docs, chunk_size, chunk_overlap,
                                                  "doc", embed_store::ChunkSource::InternalDoc);
    chunks.insert(chunks.end(), doc_chunks.begin(), doc_chunks.end());
    return chunks;
}

// Full retrieval index: knowledge chunks plus one chunk per parcel.
inline embed_store::VectorIndex build_index(const Assets& assets,
                                            const std::vector<event_model::ParcelRecord>& records,
                                            const AppConfig& config,
                                            data_pipeline::JourneyStore* store = nullptr,
                                            data_pipeline::LoadReport* report = nullptr) {
    embed_store::VectorIndex index =
        embed_store::index_chunks(knowledge_chunks(assets, config.chunk_size, config.chunk_overlap));
    data_pipeline::JourneyStore local_store;
    data_pipeline::JourneyStore& target = store ? *store : local_store;
    auto load_report = data_pipeline::load(records, target, index, assets.taxonomy);
    if (report) *report = load_report;
    return index;
}

}  // namespace supertracy::app
