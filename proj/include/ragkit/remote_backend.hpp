#pragma once

#include <memory>
#include <string>

#include "ragkit/backend.hpp"

namespace ragkit::knowledge {

// Client for external retrieval services speaking the wire protocol:
//   POST /retrieve  {"query": string, "top_k": int}
//   200 -> {"results": [{"id", "title", "text", "score"}, ...]}
// Responses are re-sorted and clamped client-side; transport and protocol
// failures surface as retrieval errors carrying the backend name.
class RemoteBackend : public KnowledgeBackend {
public:
    RemoteBackend(std::string endpoint, std::string name, double timeout_seconds = 10.0,
                  int max_in_flight = 8);
    ~RemoteBackend() override;

    std::string name() const override { return name_; }
    std::string kind() const override { return "remote"; }

protected:
    std::vector<EvidenceUnit> do_retrieve(const std::string& query, int top_k) const override;

private:
    struct Impl;
    std::string endpoint_;
    std::string name_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ragkit::knowledge
