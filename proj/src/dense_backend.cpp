#include "ragkit/dense_backend.hpp"

#include <cmath>

#include "ragkit/util.hpp"

namespace ragkit::knowledge {

using nlohmann::json;

std::vector<double> unit_normalize(std::vector<double> v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq <= 0.0) return v;
    double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
    return v;
}

std::vector<std::string> DenseBackend::scoring_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char raw : text) {
        char c = raw;
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        bool alnum = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
        if (alnum) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

DenseBackend::DenseBackend(Scorer scorer, std::vector<Chunk> chunks, std::string name)
    : scorer_(scorer), chunks_(std::move(chunks)), name_(std::move(name)) {}

std::unique_ptr<DenseBackend> DenseBackend::build_lexical(std::vector<Chunk> chunks,
                                                          std::string name) {
    if (chunks.empty()) throw ConfigError("dense-lexical build requires non-empty chunks");
    auto backend = std::unique_ptr<DenseBackend>(
        new DenseBackend(Scorer::Lexical, std::move(chunks), std::move(name)));
    backend->build_lexical_index();
    return backend;
}

std::unique_ptr<DenseBackend> DenseBackend::build_embedding(std::vector<Chunk> chunks,
                                                            EmbeddingClient& client,
                                                            std::string name) {
    auto backend = std::unique_ptr<DenseBackend>(
        new DenseBackend(Scorer::Embedding, std::move(chunks), std::move(name)));
    backend->client_ = &client;
    constexpr std::size_t kBatch = 64;
    try {
        for (std::size_t i = 0; i < backend->chunks_.size(); i += kBatch) {
            std::vector<std::string> texts;
            for (std::size_t j = i; j < std::min(i + kBatch, backend->chunks_.size()); ++j) {
                texts.push_back(backend->chunks_[j].text);
            }
            auto vecs = client.embed(texts);
            if (vecs.size() != texts.size()) {
                throw GatewayError("embedding service returned " + std::to_string(vecs.size()) +
                                   " vectors for " + std::to_string(texts.size()) + " inputs");
            }
            for (auto& v : vecs) backend->vectors_.push_back(unit_normalize(std::move(v)));
        }
    } catch (const std::exception& e) {
        throw RetrievalError(std::string("dense-embedding build failed: ") + e.what());
    }
    return backend;
}

void DenseBackend::build_lexical_index() {
    const double n = static_cast<double>(chunks_.size());
    std::unordered_map<std::string, std::size_t> df;
    std::vector<std::unordered_map<std::string, double>> tf(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        for (const auto& tok : scoring_tokens(chunks_[i].text)) tf[i][tok] += 1.0;
        for (const auto& [tok, _] : tf[i]) df[tok] += 1;
    }
    for (const auto& [tok, d] : df) {
        idf_[tok] = std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0;
    }
    chunk_norm_.assign(chunks_.size(), 0.0);
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        double sq = 0.0;
        for (const auto& [tok, count] : tf[i]) {
            double w = count * idf_[tok];
            sq += w * w;
        }
        chunk_norm_[i] = sq > 0.0 ? std::sqrt(sq) : 0.0;
        for (const auto& [tok, count] : tf[i]) {
            postings_[tok].push_back({i, count * idf_[tok]});
        }
    }
}

std::vector<EvidenceUnit> DenseBackend::do_retrieve(const std::string& query, int top_k) const {
    (void)top_k;  // exhaustive scoring; finalize_units clamps
    std::vector<double> scores(chunks_.size(), 0.0);

    if (scorer_ == Scorer::Lexical) {
        std::unordered_map<std::string, double> qtf;
        for (const auto& tok : scoring_tokens(query)) qtf[tok] += 1.0;
        double qsq = 0.0;
        const double n = static_cast<double>(chunks_.size());
        for (const auto& [tok, count] : qtf) {
            auto it = idf_.find(tok);
            double idf = it != idf_.end() ? it->second : std::log(1.0 + n) + 1.0;
            double w = count * idf;
            qsq += w * w;
        }
        if (qsq > 0.0) {
            double qnorm = std::sqrt(qsq);
            for (const auto& [tok, count] : qtf) {
                auto it = postings_.find(tok);
                if (it == postings_.end()) continue;
                double qw = count * idf_.at(tok) / qnorm;
                for (const auto& [chunk_idx, dw] : it->second) {
                    if (chunk_norm_[chunk_idx] > 0.0) {
                        scores[chunk_idx] += qw * dw / chunk_norm_[chunk_idx];
                    }
                }
            }
        }
    } else {
        if (!client_) {
            throw RetrievalError("dense-embedding backend has no embedding client attached");
        }
        auto qvec = unit_normalize(client_->embed({query}).at(0));
        for (std::size_t i = 0; i < chunks_.size(); ++i) {
            const auto& dv = vectors_[i];
            double dot = 0.0;
            for (std::size_t d = 0; d < std::min(qvec.size(), dv.size()); ++d) {
                dot += qvec[d] * dv[d];
            }
            scores[i] = dot;
        }
    }

    std::vector<EvidenceUnit> units;
    units.reserve(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        units.push_back(EvidenceUnit{chunks_[i].chunk_id, chunks_[i].title, chunks_[i].text,
                                     scores[i], EvidenceKind::Chunk, ""});
    }
    return units;
}

std::string DenseBackend::kind() const {
    return scorer_ == Scorer::Lexical ? "dense-lexical" : "dense-embedding";
}

std::string DenseBackend::serialize() const {
    json doc;
    doc["format_version"] = kIndexFormatVersion;
    doc["kind"] = kind();
    doc["name"] = name_;
    json chunks = json::array();
    for (const auto& c : chunks_) {
        chunks.push_back({{"chunk_id", c.chunk_id},
                          {"doc_id", c.doc_id},
                          {"title", c.title},
                          {"text", c.text},
                          {"ordinal", c.ordinal}});
    }
    doc["chunks"] = std::move(chunks);
    if (scorer_ == Scorer::Embedding) doc["vectors"] = vectors_;
    return doc.dump();
}

std::unique_ptr<DenseBackend> DenseBackend::deserialize(const json& doc) {
    std::vector<Chunk> chunks;
    for (const auto& c : doc.at("chunks")) {
        chunks.push_back(Chunk{c.at("chunk_id").get<std::string>(),
                               c.at("doc_id").get<std::string>(),
                               c.at("text").get<std::string>(),
                               c.at("ordinal").get<std::int64_t>(),
                               c.value("title", std::string())});
    }
    const std::string kind = doc.value("kind", "dense-lexical");
    const std::string name = doc.value("name", kind);
    if (kind == "dense-embedding") {
        auto backend = std::unique_ptr<DenseBackend>(
            new DenseBackend(Scorer::Embedding, std::move(chunks), name));
        backend->vectors_ = doc.at("vectors").get<std::vector<std::vector<double>>>();
        return backend;
    }
    auto backend = std::unique_ptr<DenseBackend>(
        new DenseBackend(Scorer::Lexical, std::move(chunks), name));
    backend->build_lexical_index();
    return backend;
}

}  // namespace ragkit::knowledge
