#include "ragkit/backend.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "ragkit/cost.hpp"
#include "ragkit/dense_backend.hpp"
#include "ragkit/graph_backend.hpp"
#include "ragkit/util.hpp"

namespace ragkit {

double construction_seconds_per_1m(double seconds, std::int64_t token_count) {
    if (token_count <= 0) return 0.0;
    return seconds * 1e6 / static_cast<double>(token_count);
}

}  // namespace ragkit

namespace ragkit::knowledge {

const char* evidence_kind_name(EvidenceKind k) {
    switch (k) {
        case EvidenceKind::Chunk: return "chunk";
        case EvidenceKind::GraphEdge: return "graph_edge";
        case EvidenceKind::GraphPath: return "graph_path";
    }
    return "chunk";
}

void finalize_units(std::vector<EvidenceUnit>& units, int top_k) {
    std::stable_sort(units.begin(), units.end(),
                     [](const EvidenceUnit& a, const EvidenceUnit& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.id < b.id;
                     });
    if (static_cast<int>(units.size()) > top_k) {
        units.resize(static_cast<std::size_t>(top_k));
    }
}

RetrievalResult KnowledgeBackend::retrieve(const std::string& query, int top_k) const {
    if (top_k < 1) throw ConfigError("retrieve: top_k must be >= 1");
    auto start = std::chrono::steady_clock::now();
    RetrievalResult result;
    result.query = query;
    result.backend_name = name();
    result.units = do_retrieve(query, top_k);
    for (const auto& u : result.units) {
        if (!std::isfinite(u.score)) {
            throw RetrievalError("backend " + name() + ": non-finite score for unit " + u.id);
        }
    }
    finalize_units(result.units, top_k);
    if (timing_ == TimingMode::Wall) {
        result.elapsed_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
    }
    return result;
}

std::string KnowledgeBackend::serialize() const {
    throw IoError("backend '" + name() + "' does not support persistence");
}

void save_backend(const KnowledgeBackend& backend, const std::string& path) {
    write_file_atomic(path, backend.serialize());
}

std::unique_ptr<KnowledgeBackend> load_backend(const std::string& path) {
    nlohmann::json doc = nlohmann::json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw ParseError("index file is not a JSON object: " + path);
    }
    const int version = doc.value("format_version", -1);
    if (version != kIndexFormatVersion) {
        throw ConfigError("index version mismatch in " + path + ": found " +
                          std::to_string(version) + ", expected " +
                          std::to_string(kIndexFormatVersion));
    }
    const std::string kind = doc.value("kind", "");
    if (kind == "dense-lexical" || kind == "dense-embedding") {
        return DenseBackend::deserialize(doc);
    }
    if (kind == "entity-graph") {
        return EntityGraphBackend::deserialize(doc);
    }
    throw ConfigError("unknown index kind '" + kind + "' in " + path);
}

std::string unit_doc_id(const EvidenceUnit& unit) {
    const std::string& raw = unit.source_chunk_id.empty() ? unit.id : unit.source_chunk_id;
    std::size_t hash = raw.rfind('#');
    if (hash == std::string::npos) return raw;
    return raw.substr(0, hash);
}

}  // namespace ragkit::knowledge
