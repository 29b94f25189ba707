#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "supertracy/errors.hpp"
#include "supertracy/text.hpp"

namespace supertracy::embed_store {

constexpr size_t kEmbeddingDim = 256;

enum class ChunkSource { ParcelRecord, Taxonomy, Abbreviations, InternalDoc };

inline std::string to_string(ChunkSource s) {
    switch (s) {
        case ChunkSource::ParcelRecord: return "ParcelRecord";
        case ChunkSource::Taxonomy: return "Taxonomy";
        case ChunkSource::Abbreviations: return "Abbreviations";
        case ChunkSource::InternalDoc: return "InternalDoc";
    }
    return "InternalDoc";
}

inline ChunkSource chunk_source_from_string(const std::string& s) {
    if (s == "ParcelRecord") return ChunkSource::ParcelRecord;
    if (s == "Taxonomy") return ChunkSource::Taxonomy;
    if (s == "Abbreviations") return ChunkSource::Abbreviations;
    if (s == "InternalDoc") return ChunkSource::InternalDoc;
    throw SchemaMismatch("unknown chunk source: " + s);
}

struct DocumentChunk {
    std::string id;
    std::string text;
    ChunkSource source = ChunkSource::InternalDoc;
    std::map<std::string, std::string> metadata;
};

struct EmbeddingVector {
    std::vector<double> values;

    size_t dim() const { return values.size(); }
};

// Deterministic bag-of-features embedding: hashed word unigrams plus hashed
// character trigrams of the boundary-padded word, signed to reduce collision
// bias, then L2-normalized. Case-insensitive; punctuation is stripped from
// tokens so "ETA:" and "ETA" share features, and the boundary padding gives
// short tokens enough features to stand out against hash collisions. Texts
// with no features map to a reserved unit basis vector so the norm invariant
// holds for every input.
inline EmbeddingVector embed_text(const std::string& text) {
    std::vector<double> v(kEmbeddingDim, 0.0);
    std::string lower = to_lower(text);
    bool any = false;

    auto add_feature = [&](const std::string& feature) {
        uint64_t h = fnv1a(feature);
        size_t bucket = static_cast<size_t>(h % kEmbeddingDim);
        double sign = ((h >> 32) & 1u) ? 1.0 : -1.0;
        v[bucket] += sign;
        any = true;
    };

    for (const auto& raw : tokenize(lower)) {
        size_t begin = 0, end = raw.size();
        while (begin < end && std::ispunct(static_cast<unsigned char>(raw[begin]))) ++begin;
        while (end > begin && std::ispunct(static_cast<unsigned char>(raw[end - 1]))) --end;
        if (begin == end) continue;
        std::string word = raw.substr(begin, end - begin);
        add_feature("w:" + word);
        std::string padded = "^" + word + "$";
        for (size_t i = 0; i + 3 <= padded.size(); ++i) add_feature("t:" + padded.substr(i, 3));
    }

    if (!any) {
        v[0] = 1.0;
        return {v};
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        // signed features cancelled out completely; fall back to the reserved axis
        std::fill(v.begin(), v.end(), 0.0);
        v[0] = 1.0;
        return {v};
    }
    for (double& x : v) x /= norm;
    return {v};
}

inline double cosine_sim(const EmbeddingVector& q, const EmbeddingVector& d) {
    if (q.dim() != d.dim()) throw DimensionMismatch("cosine_sim: dimensions differ");
    double dot = 0.0, nq = 0.0, nd = 0.0;
    for (size_t i = 0; i < q.dim(); ++i) {
        dot += q.values[i] * d.values[i];
        nq += q.values[i] * q.values[i];
        nd += d.values[i] * d.values[i];
    }
    if (nq == 0.0 || nd == 0.0) return 0.0;
    return dot / (std::sqrt(nq) * std::sqrt(nd));
}

// Fixed-size whitespace-token windows with the given overlap. Concatenating
// the chunks minus the overlaps reconstructs the token stream.
inline std::vector<DocumentChunk> chunk_document(const std::string& text, size_t target_size,
                                                 size_t overlap, const std::string& id_prefix = "chunk",
                                                 ChunkSource source = ChunkSource::InternalDoc) {
    if (target_size == 0 || target_size <= overlap)
        throw InvalidChunking("target_size must exceed overlap");
    std::vector<std::string> tokens = tokenize(text);
    std::vector<DocumentChunk> out;
    if (tokens.empty()) return out;
    size_t stride = target_size - overlap;
    size_t pos = 0;
    size_t n = tokens.size();
    size_t index = 0;
    while (true) {
        size_t end = std::min(pos + target_size, n);
        std::string body;
        for (size_t i = pos; i < end; ++i) {
            if (i > pos) body.push_back(' ');
            body += tokens[i];
        }
        DocumentChunk chunk;
        chunk.id = id_prefix + ":" + std::to_string(index++);
        chunk.text = body;
        chunk.source = source;
        out.push_back(std::move(chunk));
        if (end == n) break;
        pos += stride;
    }
    return out;
}

struct RetrievalResult {
    DocumentChunk chunk;
    double score = 0.0;
};

// Brute-force cosine index; readers share it immutably after construction.
class VectorIndex {
public:
    void add(const DocumentChunk& chunk) {
        if (entries_.count(chunk.id)) throw DuplicateId("duplicate chunk id: " + chunk.id);
        entries_[chunk.id] = {embed_text(chunk.text), chunk};
    }

    // last writer wins; used by the ETL load step
    void upsert(const DocumentChunk& chunk) { entries_[chunk.id] = {embed_text(chunk.text), chunk}; }

    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    std::vector<RetrievalResult> retrieve(const std::string& query_text, size_t k) const {
        if (entries_.empty()) throw EmptyIndex("retrieve on empty index");
        if (k == 0) k = 1;
        EmbeddingVector q = embed_text(query_text);
        std::vector<RetrievalResult> all;
        all.reserve(entries_.size());
        for (const auto& [id, entry] : entries_) {
            all.push_back({entry.second, cosine_sim(q, entry.first)});
        }
        // descending score, ties broken by ascending chunk id
        std::stable_sort(all.begin(), all.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.chunk.id < b.chunk.id;
        });
        if (all.size() > k) all.resize(k);
        return all;
    }

    const std::map<std::string, std::pair<EmbeddingVector, DocumentChunk>>& entries() const {
        return entries_;
    }

    bool contains(const std::string& id) const { return entries_.count(id) > 0; }

    // One JSON object per line: id, source, metadata, text, vector values.
    void save_jsonl(std::ostream& out) const {
        for (const auto& [id, entry] : entries_) {
            nlohmann::json j;
            j["id"] = id;
            j["source"] = to_string(entry.second.source);
            j["metadata"] = entry.second.metadata;
            j["text"] = entry.second.text;
            j["vector"] = entry.first.values;
            out << j.dump() << "\n";
        }
    }

    void save_jsonl_file(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write index file: " + path);
        save_jsonl(out);
    }

    static VectorIndex load_jsonl(std::istream& in) {
        VectorIndex index;
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line);
            DocumentChunk chunk;
            chunk.id = j.at("id").get<std::string>();
            chunk.source = chunk_source_from_string(j.at("source").get<std::string>());
            chunk.text = j.at("text").get<std::string>();
            for (auto it = j.at("metadata").begin(); it != j.at("metadata").end(); ++it)
                chunk.metadata[it.key()] = it.value().get<std::string>();
            EmbeddingVector v{j.at("vector").get<std::vector<double>>()};
            if (index.entries_.count(chunk.id)) throw DuplicateId("duplicate chunk id: " + chunk.id);
            std::string id = chunk.id;
            index.entries_[id] = {std::move(v), std::move(chunk)};
        }
        return index;
    }

    static VectorIndex load_jsonl_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open index file: " + path);
        return load_jsonl(in);
    }

private:
    std::map<std::string, std::pair<EmbeddingVector, DocumentChunk>> entries_;
};

inline VectorIndex index_chunks(const std::vector<DocumentChunk>& chunks) {
    VectorIndex index;
    for (const auto& c : chunks) index.add(c);
    return index;
}

inline std::vector<RetrievalResult> retrieve(const VectorIndex& index, const std::string& query_text,
                                             size_t k) {
    return index.retrieve(query_text, k);
}

}  // namespace supertracy::embed_store
