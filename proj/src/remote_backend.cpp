#include "ragkit/remote_backend.hpp"

#include <chrono>
#include <semaphore>

#include <httplib.h>
#include <json.hpp>

#include "ragkit/util.hpp"

namespace ragkit::knowledge {

using nlohmann::json;

struct RemoteBackend::Impl {
    mutable httplib::Client client;
    mutable std::counting_semaphore<256> slots;

    Impl(const std::string& endpoint, double timeout_seconds, int max_in_flight)
        : client(endpoint), slots(std::max(1, std::min(max_in_flight, 256))) {
        auto secs = std::chrono::duration<double>(timeout_seconds);
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(secs);
        client.set_connection_timeout(ms);
        client.set_read_timeout(ms);
        client.set_write_timeout(ms);
    }
};

RemoteBackend::RemoteBackend(std::string endpoint, std::string name, double timeout_seconds,
                             int max_in_flight)
    : endpoint_(std::move(endpoint)),
      name_(std::move(name)),
      impl_(std::make_unique<Impl>(endpoint_, timeout_seconds, max_in_flight)) {}

RemoteBackend::~RemoteBackend() = default;

std::vector<EvidenceUnit> RemoteBackend::do_retrieve(const std::string& query, int top_k) const {
    json body;
    body["query"] = query;
    body["top_k"] = top_k;

    impl_->slots.acquire();
    struct Release {
        Impl* impl;
        ~Release() { impl->slots.release(); }
    } release{impl_.get()};

    auto res = impl_->client.Post("/retrieve", body.dump(), "application/json");
    if (!res) {
        throw RetrievalError("backend " + name_ + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw RetrievalError("backend " + name_ + ": status " + std::to_string(res->status));
    }
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("results") || !doc["results"].is_array()) {
        throw RetrievalError("backend " + name_ + ": malformed response body");
    }
    std::vector<EvidenceUnit> units;
    for (const auto& r : doc["results"]) {
        if (!r.is_object()) {
            throw RetrievalError("backend " + name_ + ": malformed result entry");
        }
        units.push_back(EvidenceUnit{r.value("id", std::string()), r.value("title", std::string()),
                                     r.value("text", std::string()), r.value("score", 0.0),
                                     EvidenceKind::Chunk, ""});
    }
    return units;
}

}  // namespace ragkit::knowledge
