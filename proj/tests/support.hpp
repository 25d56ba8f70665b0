#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ragkit/corpus.hpp"
#include "ragkit/gateway.hpp"
#include "ragkit/util.hpp"

namespace testsupport {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ragkit_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::filesystem::path path() const { return path_; }
    std::string str(const std::string& child = "") const {
        return child.empty() ? path_.string() : (path_ / child).string();
    }
    std::string write(const std::string& name, const std::string& contents) const {
        std::ofstream out(path_ / name, std::ios::binary);
        out << contents;
        return (path_ / name).string();
    }

private:
    std::filesystem::path path_;
};

// In-process HTTP stub; handler installed per test.
class StubServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    StubServer() {
        server_.Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests_;
            if (post_handler_) post_handler_(req, res);
        });
        server_.Get(".*", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests_;
            if (get_handler_) get_handler_(req, res);
            else res.status = 200;
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this]() { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    void on_post(Handler h) { post_handler_ = std::move(h); }
    void on_get(Handler h) { get_handler_ = std::move(h); }
    int port() const { return port_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int requests() const { return requests_.load(); }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    Handler post_handler_;
    Handler get_handler_;
    std::atomic<int> requests_{0};
};

inline std::vector<ragkit::knowledge::Chunk> make_chunks(
    const std::vector<std::pair<std::string, std::string>>& id_text) {
    std::vector<ragkit::knowledge::Chunk> chunks;
    std::int64_t i = 0;
    for (const auto& [id, text] : id_text) {
        chunks.push_back(ragkit::knowledge::Chunk{id, id, text, i++, "title of " + id});
    }
    return chunks;
}

inline std::unique_ptr<ragkit::gateway::ScriptedGateway> steps(
    const std::vector<std::string>& replies) {
    std::vector<ragkit::gateway::ScriptRule> rules;
    for (std::size_t i = 0; i < replies.size(); ++i) {
        rules.push_back(ragkit::gateway::step_rule(i, replies[i]));
    }
    return std::make_unique<ragkit::gateway::ScriptedGateway>(std::move(rules));
}

// Deterministic word-salad chunk corpus for oracle comparisons.
inline std::vector<ragkit::knowledge::Chunk> synthetic_chunks(int n, unsigned seed,
                                                              int max_words = 12) {
    static const std::vector<std::string> vocab = {
        "apple",  "pie",    "quantum", "field",   "mosque", "istanbul", "river",  "graph",
        "search", "agent",  "token",   "dense",   "node",   "edge",     "answer", "query",
        "paris",  "berlin", "tokyo",   "library", "stone",  "light",    "seven",  "delta"};
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> words(1, max_words);
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    std::vector<std::pair<std::string, std::string>> raw;
    for (int i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "c%04d", i);
        std::string text;
        int m = words(rng);
        for (int w = 0; w < m; ++w) {
            if (w) text += " ";
            text += vocab[pick(rng)];
        }
        raw.push_back({id, text});
    }
    return make_chunks(raw);
}

}  // namespace testsupport
