#include "ragkit/graph_backend.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "ragkit/gateway.hpp"
#include "ragkit/util.hpp"

namespace ragkit::knowledge {

using nlohmann::json;

// Entity identity: lowercase, punctuation mapped to spaces, whitespace
// collapsed. Queries are normalized the same way before seed matching.
std::string entity_key(std::string_view surface) {
    std::string mapped;
    mapped.reserve(surface.size());
    for (char c : surface) {
        bool alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                     static_cast<unsigned char>(c) >= 0x80;
        mapped.push_back(alnum ? c : ' ');
    }
    return normalize_ws(mapped);
}

namespace {

std::string strip_edge_punct(std::string s) {
    auto is_punct = [](char c) {
        return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' ||
               c == '"' || c == '\'' || c == '(' || c == ')';
    };
    std::size_t b = 0, e = s.size();
    while (b < e && (is_punct(s[b]) || is_space_byte(s[b]))) ++b;
    while (e > b && (is_punct(s[e - 1]) || is_space_byte(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == '.' || c == '!' || c == '?' || c == ';') {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

std::string edge_unit_id(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "e%06zu", index);
    return std::string(buf);
}

// case-insensitive find
std::size_t ifind(const std::string& haystack, const std::string& needle) {
    return to_lower(haystack).find(to_lower(needle));
}

bool word_bounded(const std::string& text, std::size_t pos, std::size_t len) {
    bool left_ok = pos == 0 || is_space_byte(text[pos - 1]);
    bool right_ok = pos + len >= text.size() || is_space_byte(text[pos + len]);
    return left_ok && right_ok;
}

}  // namespace

const std::vector<RelationPattern>& RuleExtractor::default_patterns() {
    static const std::vector<RelationPattern> patterns = {
        {" is the capital of ", "capital of"},
        {" is capital of ", "capital of"},
        {" is located in ", "located in"},
        {" was born in ", "born in"},
        {" is married to ", "married to"},
        {" was created by ", "created by"},
        {" was written by ", "written by"},
        {" was directed by ", "directed by"},
        {" is part of ", "part of"},
        {" works at ", "works at"},
        {" died in ", "died in"},
        {" borders ", "borders"},
        {" wrote ", "wrote"},
        {" directed ", "directed"},
    };
    return patterns;
}

RuleExtractor::RuleExtractor() : RuleExtractor(default_patterns()) {}

RuleExtractor::RuleExtractor(std::vector<RelationPattern> patterns)
    : patterns_(std::move(patterns)) {
    std::stable_sort(patterns_.begin(), patterns_.end(),
                     [](const RelationPattern& a, const RelationPattern& b) {
                         return a.phrase.size() > b.phrase.size();
                     });
}

std::vector<Triple> RuleExtractor::extract(const Chunk& chunk) {
    std::vector<Triple> out;
    for (const std::string& sentence : split_sentences(chunk.text)) {
        for (const auto& pattern : patterns_) {
            std::size_t pos = ifind(sentence, pattern.phrase);
            if (pos == std::string::npos) continue;
            std::string subject = strip_edge_punct(sentence.substr(0, pos));
            std::string object = strip_edge_punct(sentence.substr(pos + pattern.phrase.size()));
            if (subject.empty() || object.empty()) {
                ++skipped_;
                break;
            }
            out.push_back(Triple{subject, pattern.relation, object});
            break;  // first matching pattern wins for this sentence
        }
    }
    return out;
}

LlmExtractor::LlmExtractor(gateway::LlmGateway& gw) : gateway_(&gw) {}

std::vector<Triple> LlmExtractor::extract(const Chunk& chunk) {
    gateway::CompletionRequest req;
    req.messages.push_back(gateway::Message{
        "user",
        "Extract knowledge triples from the passage below. Output one triple per line "
        "in the form (entity, relation, entity). Output only triples.\n\nPassage:\n" +
            chunk.text});
    req.max_tokens = 512;
    gateway::Completion completion = gateway_->complete(req);
    ++llm_calls_;

    std::vector<Triple> out;
    std::size_t start = 0;
    const std::string& text = completion.text;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        std::string line = trim(text.substr(start, nl == std::string::npos ? nl : nl - start));
        start = nl == std::string::npos ? text.size() + 1 : nl + 1;
        if (line.empty()) continue;
        if (line.front() != '(' || line.back() != ')') {
            ++skipped_;
            continue;
        }
        std::string inner = line.substr(1, line.size() - 2);
        std::size_t first = inner.find(',');
        std::size_t last = inner.rfind(',');
        if (first == std::string::npos || first == last) {
            ++skipped_;
            continue;
        }
        Triple t{strip_edge_punct(inner.substr(0, first)),
                 trim(inner.substr(first + 1, last - first - 1)),
                 strip_edge_punct(inner.substr(last + 1))};
        if (t.subject.empty() || t.relation.empty() || t.object.empty()) {
            ++skipped_;
            continue;
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::unique_ptr<EntityGraphBackend> EntityGraphBackend::build(const std::vector<Chunk>& chunks,
                                                              TripleExtractor& extractor,
                                                              int hops, std::string name) {
    if (hops < 1) throw ConfigError("entity-graph hops must be >= 1");
    auto backend = std::unique_ptr<EntityGraphBackend>(new EntityGraphBackend());
    backend->name_ = std::move(name);
    backend->hops_ = hops;
    backend->chunks_ = chunks;

    auto intern_node = [&](const std::string& surface, const std::string& chunk_id) -> std::string {
        std::string key = entity_key(surface);
        auto it = backend->node_index_.find(key);
        if (it == backend->node_index_.end()) {
            backend->node_index_[key] = backend->graph_.nodes.size();
            backend->graph_.nodes.push_back(GraphNode{key, trim(surface), {chunk_id}});
        } else {
            auto& mentions = backend->graph_.nodes[it->second].mention_chunk_ids;
            if (std::find(mentions.begin(), mentions.end(), chunk_id) == mentions.end()) {
                mentions.push_back(chunk_id);
            }
        }
        return key;
    };

    for (const Chunk& chunk : chunks) {
        std::vector<Triple> triples;
        try {
            triples = extractor.extract(chunk);
        } catch (const std::exception&) {
            // extraction failure skips the chunk, never the build
            backend->skipped_triples_ += 1;
            continue;
        }
        for (const Triple& t : triples) {
            if (entity_key(t.subject) == entity_key(t.object)) {
                backend->skipped_triples_ += 1;  // self-loop
                continue;
            }
            std::string src = intern_node(t.subject, chunk.chunk_id);
            std::string dst = intern_node(t.object, chunk.chunk_id);
            backend->graph_.edges.push_back(GraphEdge{src, dst, t.relation, chunk.chunk_id});
        }
    }
    backend->skipped_triples_ += extractor.skipped_items();
    backend->rebuild_lookup();
    return backend;
}

void EntityGraphBackend::rebuild_lookup() {
    node_index_.clear();
    for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
        node_index_[graph_.nodes[i].id] = i;
    }
    chunk_index_.clear();
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        chunk_index_[chunks_[i].chunk_id] = i;
    }
    incident_.assign(graph_.nodes.size(), {});
    for (std::size_t e = 0; e < graph_.edges.size(); ++e) {
        incident_[node_index_.at(graph_.edges[e].src)].push_back(e);
        incident_[node_index_.at(graph_.edges[e].dst)].push_back(e);
    }
}

std::vector<EvidenceUnit> EntityGraphBackend::do_retrieve(const std::string& query,
                                                          int top_k) const {
    (void)top_k;
    const std::string norm_query = entity_key(query);
    std::set<std::size_t> seeds;
    for (const auto& tok : tokenize_ws(norm_query)) {
        auto it = node_index_.find(std::string(tok.text));
        if (it != node_index_.end()) seeds.insert(it->second);
    }
    for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
        const std::string& id = graph_.nodes[i].id;
        if (id.empty()) continue;
        std::size_t pos = norm_query.find(id);
        while (pos != std::string::npos) {
            if (word_bounded(norm_query, pos, id.size())) {
                seeds.insert(i);
                break;
            }
            pos = norm_query.find(id, pos + 1);
        }
    }
    if (seeds.empty()) return {};

    std::set<std::size_t> frontier = seeds;
    std::set<std::size_t> reached_edges;
    for (int hop = 0; hop < hops_; ++hop) {
        std::set<std::size_t> next;
        for (std::size_t node : frontier) {
            for (std::size_t e : incident_[node]) {
                reached_edges.insert(e);
                next.insert(node_index_.at(graph_.edges[e].src));
                next.insert(node_index_.at(graph_.edges[e].dst));
            }
        }
        frontier = std::move(next);
    }

    std::vector<EvidenceUnit> units;
    std::unordered_map<std::string, double> chunk_best;
    for (std::size_t e : reached_edges) {
        const GraphEdge& edge = graph_.edges[e];
        double score = 0.0;
        if (seeds.count(node_index_.at(edge.src))) score += 1.0;
        if (seeds.count(node_index_.at(edge.dst))) score += 1.0;
        const GraphNode& src = graph_.nodes[node_index_.at(edge.src)];
        const GraphNode& dst = graph_.nodes[node_index_.at(edge.dst)];
        std::string chunk_title;
        auto cit = chunk_index_.find(edge.source_chunk_id);
        if (cit != chunk_index_.end()) chunk_title = chunks_[cit->second].title;
        units.push_back(EvidenceUnit{
            edge_unit_id(e), chunk_title,
            "(" + src.name + ", " + edge.relation + ", " + dst.name + ")", score,
            EvidenceKind::GraphEdge, edge.source_chunk_id});
        auto& best = chunk_best[edge.source_chunk_id];
        best = std::max(best, score);
    }
    for (const auto& [chunk_id, best] : chunk_best) {
        auto cit = chunk_index_.find(chunk_id);
        if (cit == chunk_index_.end()) continue;
        const Chunk& chunk = chunks_[cit->second];
        units.push_back(EvidenceUnit{chunk.chunk_id, chunk.title, chunk.text, best - 0.5,
                                     EvidenceKind::Chunk, ""});
    }
    return units;
}

std::string EntityGraphBackend::serialize() const {
    json doc;
    doc["format_version"] = kIndexFormatVersion;
    doc["kind"] = "entity-graph";
    doc["name"] = name_;
    doc["hops"] = hops_;
    doc["skipped_triples"] = skipped_triples_;
    json nodes = json::array();
    for (const auto& n : graph_.nodes) {
        nodes.push_back({{"id", n.id}, {"name", n.name}, {"mentions", n.mention_chunk_ids}});
    }
    doc["nodes"] = std::move(nodes);
    json edges = json::array();
    for (const auto& e : graph_.edges) {
        edges.push_back({{"src", e.src},
                         {"dst", e.dst},
                         {"relation", e.relation},
                         {"chunk", e.source_chunk_id}});
    }
    doc["edges"] = std::move(edges);
    json chunks = json::array();
    for (const auto& c : chunks_) {
        chunks.push_back({{"chunk_id", c.chunk_id},
                          {"doc_id", c.doc_id},
                          {"title", c.title},
                          {"text", c.text},
                          {"ordinal", c.ordinal}});
    }
    doc["chunks"] = std::move(chunks);
    return doc.dump();
}

std::unique_ptr<EntityGraphBackend> EntityGraphBackend::deserialize(const json& doc) {
    auto backend = std::unique_ptr<EntityGraphBackend>(new EntityGraphBackend());
    backend->name_ = doc.value("name", "entity-graph");
    backend->hops_ = doc.value("hops", 1);
    backend->skipped_triples_ = doc.value("skipped_triples", std::int64_t{0});
    for (const auto& n : doc.at("nodes")) {
        backend->graph_.nodes.push_back(GraphNode{
            n.at("id").get<std::string>(), n.at("name").get<std::string>(),
            n.at("mentions").get<std::vector<std::string>>()});
    }
    for (const auto& e : doc.at("edges")) {
        backend->graph_.edges.push_back(GraphEdge{
            e.at("src").get<std::string>(), e.at("dst").get<std::string>(),
            e.at("relation").get<std::string>(), e.at("chunk").get<std::string>()});
    }
    for (const auto& c : doc.at("chunks")) {
        backend->chunks_.push_back(Chunk{c.at("chunk_id").get<std::string>(),
                                         c.at("doc_id").get<std::string>(),
                                         c.at("text").get<std::string>(),
                                         c.at("ordinal").get<std::int64_t>(),
                                         c.value("title", std::string())});
    }
    backend->rebuild_lookup();
    return backend;
}

}  // namespace ragkit::knowledge
