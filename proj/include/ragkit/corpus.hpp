#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

namespace ragkit::knowledge {

struct Document {
    std::string id;
    std::string title;
    std::string contents;
};

struct Corpus {
    std::vector<Document> documents;
    std::int64_t token_count = 0;  // whitespace-token proxy over contents
};

// One JSON object per line: {"id": ..., "contents": ..., "title"?: ...}.
// Blank lines are skipped. Malformed lines and duplicate ids are errors
// naming the line / the id.
Corpus ingest_corpus(std::istream& in);
Corpus ingest_corpus_file(const std::string& path);

struct ChunkPolicy {
    std::int64_t max_tokens = 256;
    std::int64_t overlap_tokens = 0;
};

struct Chunk {
    std::string chunk_id;  // "<doc_id>#<ordinal>"
    std::string doc_id;
    std::string text;
    std::int64_t ordinal = 0;
    std::string title;  // carried over from the source document
};

// Sliding token window with stride max_tokens - overlap_tokens. Chunk text is
// the chunk's tokens joined by single spaces, so a document whose tokens are
// already single-space separated reconstructs exactly when the per-chunk
// overlap prefix is dropped. Empty documents yield no chunks.
std::vector<Chunk> chunk_corpus(const Corpus& corpus, const ChunkPolicy& policy);

}  // namespace ragkit::knowledge
