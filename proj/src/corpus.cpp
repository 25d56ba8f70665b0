#include "ragkit/corpus.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "ragkit/util.hpp"

namespace ragkit::knowledge {

using nlohmann::json;

Corpus ingest_corpus(std::istream& in) {
    Corpus corpus;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_view(line).empty()) continue;
        json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (obj.is_discarded() || !obj.is_object()) {
            throw ParseError("corpus: line " + std::to_string(line_no) + " is not a JSON object");
        }
        if (!obj.contains("id") || !obj["id"].is_string() ||
            !obj.contains("contents") || !obj["contents"].is_string()) {
            throw ParseError("corpus: line " + std::to_string(line_no) +
                             " missing string fields 'id'/'contents'");
        }
        Document doc;
        doc.id = obj["id"].get<std::string>();
        doc.contents = obj["contents"].get<std::string>();
        if (obj.contains("title") && obj["title"].is_string()) {
            doc.title = obj["title"].get<std::string>();
        }
        if (doc.id.empty()) {
            throw ParseError("corpus: line " + std::to_string(line_no) + " has empty id");
        }
        if (!seen.insert(doc.id).second) {
            throw ParseError("corpus: duplicate id '" + doc.id + "'");
        }
        corpus.token_count += static_cast<std::int64_t>(count_tokens(doc.contents));
        corpus.documents.push_back(std::move(doc));
    }
    return corpus;
}

Corpus ingest_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    return ingest_corpus(in);
}

std::vector<Chunk> chunk_corpus(const Corpus& corpus, const ChunkPolicy& policy) {
    if (policy.overlap_tokens < 0 || policy.max_tokens <= policy.overlap_tokens) {
        throw ConfigError("chunk policy requires max_tokens > overlap_tokens >= 0");
    }
    std::vector<Chunk> chunks;
    const std::int64_t stride = policy.max_tokens - policy.overlap_tokens;
    for (const Document& doc : corpus.documents) {
        auto tokens = tokenize_ws(doc.contents);
        const std::int64_t n = static_cast<std::int64_t>(tokens.size());
        std::int64_t ordinal = 0;
        for (std::int64_t start = 0; start < n; start += stride) {
            std::int64_t end = std::min(start + policy.max_tokens, n);
            std::string text;
            for (std::int64_t i = start; i < end; ++i) {
                if (i > start) text += ' ';
                text += tokens[static_cast<std::size_t>(i)].text;
            }
            chunks.push_back(Chunk{doc.id + "#" + std::to_string(ordinal), doc.id,
                                   std::move(text), ordinal, doc.title});
            ++ordinal;
            if (end == n) break;
        }
    }
    return chunks;
}

}  // namespace ragkit::knowledge
