#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ragkit/backend.hpp"

namespace ragkit::knowledge {

// Batch text-embedding service (OpenAI-compatible /v1/embeddings or a stub).
class EmbeddingClient {
public:
    virtual ~EmbeddingClient() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string name() const = 0;
    std::int64_t calls() const { return calls_; }

protected:
    std::int64_t calls_ = 0;
};

// Exhaustive dense index over chunks.
//
// Lexical scoring (the exact formula, used verbatim by the test oracle):
//   tokens(s)   = maximal runs of [a-z0-9] after lowercasing
//   df(t)       = number of chunks containing t
//   idf(t)      = ln((1 + N) / (1 + df(t))) + 1        (N = chunk count)
//   w_d(t)      = tf_d(t) * idf(t), normalized to unit L2 norm per chunk
//   w_q(t)      = tf_q(t) * idf(t) over all query tokens (df 0 allowed),
//                 normalized to unit L2 norm
//   score(q, d) = sum_t w_q(t) * w_d(t)
// A zero-norm query scores every chunk 0; ties rank by chunk id ascending.
//
// Embedding scoring: inner product of unit-normalized vectors.
class DenseBackend : public KnowledgeBackend {
public:
    static std::unique_ptr<DenseBackend> build_lexical(std::vector<Chunk> chunks,
                                                       std::string name = "dense-lexical");
    // Embeds every chunk through `client` at build time; service failures
    // surface as a build error carrying the cause.
    static std::unique_ptr<DenseBackend> build_embedding(std::vector<Chunk> chunks,
                                                         EmbeddingClient& client,
                                                         std::string name = "dense-embedding");

    std::string name() const override { return name_; }
    std::string kind() const override;
    std::string serialize() const override;
    static std::unique_ptr<DenseBackend> deserialize(const nlohmann::json& doc);

    // A deserialized embedding index needs a client before retrieve() works.
    void attach_embedding_client(EmbeddingClient& client) { client_ = &client; }
    void adopt_embedding_client(std::unique_ptr<EmbeddingClient> client) {
        owned_client_ = std::move(client);
        client_ = owned_client_.get();
    }

    std::size_t chunk_count() const { return chunks_.size(); }

    static std::vector<std::string> scoring_tokens(const std::string& text);

protected:
    std::vector<EvidenceUnit> do_retrieve(const std::string& query, int top_k) const override;

private:
    enum class Scorer { Lexical, Embedding };

    DenseBackend(Scorer scorer, std::vector<Chunk> chunks, std::string name);
    void build_lexical_index();

    Scorer scorer_;
    std::vector<Chunk> chunks_;
    std::string name_;

    // lexical state
    std::unordered_map<std::string, double> idf_;
    std::unordered_map<std::string, std::vector<std::pair<std::size_t, double>>> postings_;
    std::vector<double> chunk_norm_;

    // embedding state
    std::vector<std::vector<double>> vectors_;
    EmbeddingClient* client_ = nullptr;
    std::unique_ptr<EmbeddingClient> owned_client_;
};

std::vector<double> unit_normalize(std::vector<double> v);

}  // namespace ragkit::knowledge
