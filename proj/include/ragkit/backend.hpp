#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ragkit/corpus.hpp"

namespace ragkit::knowledge {

enum class EvidenceKind { Chunk, GraphEdge, GraphPath };

struct EvidenceUnit {
    std::string id;
    std::string title;
    std::string text;
    double score = 0.0;
    EvidenceKind kind = EvidenceKind::Chunk;
    // For graph evidence: the chunk the edge was extracted from.
    std::string source_chunk_id;
};

const char* evidence_kind_name(EvidenceKind k);

struct RetrievalResult {
    std::string query;
    std::vector<EvidenceUnit> units;  // sorted by score desc, id asc
    double elapsed_ms = 0.0;
    std::string backend_name;
};

// When Fixed, retrieval timings are reported as 0 so serialized results and
// reports are byte-stable across invocations.
enum class TimingMode { Wall, Fixed };

// Unified retrieval interface. retrieve() enforces the shared contract
// (top_k >= 1, descending scores with ascending-id tie-break, clamping)
// around each backend's do_retrieve.
class KnowledgeBackend {
public:
    virtual ~KnowledgeBackend() = default;

    RetrievalResult retrieve(const std::string& query, int top_k) const;

    virtual std::string name() const = 0;
    virtual std::string kind() const = 0;

    // Serialized index document; backends that cannot persist (remote) throw.
    virtual std::string serialize() const;

    void set_timing_mode(TimingMode m) { timing_ = m; }
    TimingMode timing_mode() const { return timing_; }

protected:
    virtual std::vector<EvidenceUnit> do_retrieve(const std::string& query, int top_k) const = 0;

private:
    TimingMode timing_ = TimingMode::Wall;
};

// Sort by (score desc, id asc) and clamp to top_k.
void finalize_units(std::vector<EvidenceUnit>& units, int top_k);

constexpr int kIndexFormatVersion = 1;

void save_backend(const KnowledgeBackend& backend, const std::string& path);
// Dispatches on the serialized "kind"; version mismatch is an error.
std::unique_ptr<KnowledgeBackend> load_backend(const std::string& path);

// Doc id a unit counts toward for retrieval recall: the source chunk when
// present, else the unit id, with any "#ordinal" chunk suffix stripped.
std::string unit_doc_id(const EvidenceUnit& unit);

}  // namespace ragkit::knowledge
