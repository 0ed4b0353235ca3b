#pragma once

// In-process chat-completion endpoint for client tests. Answers every note
// with a canned response chosen by a callback and records each request body.

#include "pheno/llm.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mock {

struct Reply {
    int status = 200;
    std::string content;   // placed in choices[0].message.content
    std::string raw_body;  // if set, sent verbatim instead of an envelope
};

class ChatServer {
public:
    /// responder(body, index) -> reply. index counts requests from 0.
    using Responder = std::function<Reply(const nlohmann::json&, std::size_t)>;

    explicit ChatServer(Responder responder) : responder_(std::move(responder)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
            std::size_t index = 0;
            {
                std::lock_guard lock(mutex_);
                index = requests_.size();
                requests_.push_back(body);
                authorizations_.push_back(req.get_header_value("Authorization"));
            }
            Reply reply = responder_(body, index);
            res.status = reply.status;
            if (!reply.raw_body.empty()) {
                res.set_content(reply.raw_body, "application/json");
            } else {
                nlohmann::json envelope = {
                    {"id", "mock-" + std::to_string(index)},
                    {"object", "chat.completion"},
                    {"choices", {{{"index", 0},
                                  {"message", {{"role", "assistant"}, {"content", reply.content}}},
                                  {"finish_reason", "stop"}}}}};
                res.set_content(envelope.dump(), "application/json");
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) throw std::runtime_error("mock server bind failed");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~ChatServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ChatServer(const ChatServer&) = delete;
    ChatServer& operator=(const ChatServer&) = delete;

    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    }

    std::vector<nlohmann::json> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }
    std::vector<std::string> authorizations() const {
        std::lock_guard lock(mutex_);
        return authorizations_;
    }

private:
    Responder responder_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mutex_;
    std::vector<nlohmann::json> requests_;
    std::vector<std::string> authorizations_;
};

/// Last user message of a request body.
inline std::string last_user_content(const nlohmann::json& body) {
    const auto& messages = body.at("messages");
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if ((*it).at("role") == "user") return (*it).at("content").get<std::string>();
    }
    return {};
}

/// Number of system messages carrying the instruction block.
inline std::size_t instruction_blocks(const nlohmann::json& body) {
    std::size_t count = 0;
    for (const auto& m : body.at("messages")) {
        if (m.at("content").get<std::string>().find(pheno::phenotype_instructions()) != std::string::npos) ++count;
    }
    return count;
}

/// Sets an environment variable for the lifetime of the object.
class ScopedEnv {
public:
    ScopedEnv(std::string name, const char* value) : name_(std::move(name)) {
        if (const char* old = std::getenv(name_.c_str())) previous_ = old, had_ = true;
        if (value) ::setenv(name_.c_str(), value, 1);
        else ::unsetenv(name_.c_str());
    }
    ~ScopedEnv() {
        if (had_) ::setenv(name_.c_str(), previous_.c_str(), 1);
        else ::unsetenv(name_.c_str());
    }

private:
    std::string name_;
    std::string previous_;
    bool had_ = false;
};

}  // namespace mock
