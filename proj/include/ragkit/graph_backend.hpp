#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ragkit/backend.hpp"

namespace ragkit::gateway {
class LlmGateway;
}

namespace ragkit::knowledge {

struct Triple {
    std::string subject;
    std::string relation;
    std::string object;
};

// (entity, relation, entity) triples for one chunk. Implementations skip
// what they cannot parse and report it through the counters; extraction
// never fails a build.
class TripleExtractor {
public:
    virtual ~TripleExtractor() = default;
    virtual std::vector<Triple> extract(const Chunk& chunk) = 0;
    virtual std::string name() const = 0;

    std::int64_t skipped_items() const { return skipped_; }
    std::int64_t llm_calls() const { return llm_calls_; }

protected:
    std::int64_t skipped_ = 0;
    std::int64_t llm_calls_ = 0;
};

struct RelationPattern {
    std::string phrase;    // matched case-insensitively inside a sentence
    std::string relation;  // relation label for the resulting edge
};

// Pattern-table extraction: sentences are split on ./!/?/;, the first
// matching phrase splits a sentence into (subject, relation, object).
class RuleExtractor : public TripleExtractor {
public:
    RuleExtractor();  // default pattern table
    explicit RuleExtractor(std::vector<RelationPattern> patterns);

    std::vector<Triple> extract(const Chunk& chunk) override;
    std::string name() const override { return "rule"; }

    static const std::vector<RelationPattern>& default_patterns();

private:
    std::vector<RelationPattern> patterns_;  // longest phrase first
};

// Prompts the gateway once per chunk for "(entity, relation, entity)" lines.
class LlmExtractor : public TripleExtractor {
public:
    explicit LlmExtractor(gateway::LlmGateway& gw);
    std::vector<Triple> extract(const Chunk& chunk) override;
    std::string name() const override { return "llm"; }

private:
    gateway::LlmGateway* gateway_;
};

struct GraphNode {
    std::string id;    // normalized entity name
    std::string name;  // first surface form seen
    std::vector<std::string> mention_chunk_ids;
};

struct GraphEdge {
    std::string src;  // node ids
    std::string dst;
    std::string relation;
    std::string source_chunk_id;
};

// Simple directed multigraph over extracted entities. Self-loops are dropped
// at build time; every node carries at least one mention.
struct EntityGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
};

// Reference graph retrieval:
//  1. seed nodes whose id equals a query token or appears word-bounded
//     inside the normalized query
//  2. expand `hops` hops over edges in both directions (default 1)
//  3. score each reached edge by how many of its endpoints are seeds; the
//     edge's source chunk joins the candidate pool at (best edge score - 0.5)
//  4. top-k overall, ties by unit id ascending
// Edge unit ids are zero-padded insertion indices ("e000042") so the id
// order matches build order.
class EntityGraphBackend : public KnowledgeBackend {
public:
    static std::unique_ptr<EntityGraphBackend> build(const std::vector<Chunk>& chunks,
                                                     TripleExtractor& extractor,
                                                     int hops = 1,
                                                     std::string name = "entity-graph");

    std::string name() const override { return name_; }
    std::string kind() const override { return "entity-graph"; }
    std::string serialize() const override;
    static std::unique_ptr<EntityGraphBackend> deserialize(const nlohmann::json& doc);

    const EntityGraph& graph() const { return graph_; }
    std::int64_t skipped_triples() const { return skipped_triples_; }

protected:
    std::vector<EvidenceUnit> do_retrieve(const std::string& query, int top_k) const override;

private:
    EntityGraphBackend() = default;
    void rebuild_lookup();

    EntityGraph graph_;
    std::vector<Chunk> chunks_;
    std::string name_ = "entity-graph";
    int hops_ = 1;
    std::int64_t skipped_triples_ = 0;

    std::unordered_map<std::string, std::size_t> node_index_;
    std::unordered_map<std::string, std::size_t> chunk_index_;
    std::vector<std::vector<std::size_t>> incident_;  // node idx -> edge idxs
};

std::string entity_key(std::string_view surface);

}  // namespace ragkit::knowledge
