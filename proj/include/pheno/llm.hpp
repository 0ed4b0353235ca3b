#pragma once

#include "pheno/corpus.hpp"
#include "pheno/error.hpp"
#include "pheno/evaluation.hpp"
#include "pheno/labels.hpp"

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace pheno {

/// Stateless: every request carries the instruction block followed by one
/// note. ServerSession: the server keeps the conversation keyed by
/// "session_id"; the instruction block goes out in the first request of a
/// session only, later requests carry just the next note.
enum class SessionMode { Stateless, ServerSession };

SessionMode parse_session_mode(std::string_view text);

struct LlmConfig {
    std::string endpoint = "http://127.0.0.1:8000/v1/chat/completions";
    std::string model = "gpt-4";
    std::string token_env = "PHENO_LLM_TOKEN";
    double timeout_seconds = 60.0;
    int max_retries = 3;
    double backoff_base_seconds = 2.0;
    double backoff_jitter = 0.25;  // fraction of the delay, uniform +/-
    double temperature = 0.0;
    SessionMode session_mode = SessionMode::Stateless;
    std::size_t concurrency = 4;
    double max_requests_per_second = 0.0;  // 0 = unlimited
    std::uint64_t seed = 0;                // jitter RNG

    void validate() const;
};

/// The phenotyping instruction block sent as the system message.
const std::string& phenotype_instructions();

struct ChatMessage {
    std::string role;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
    std::string model;
    double temperature = 0.0;
    std::vector<ChatMessage> messages;
    std::optional<std::string> session_id;

    nlohmann::json to_json() const;
};

/// Stateless request: instruction block + note text. Throws Error(Validation)
/// on an empty note.
ChatRequest build_request(const Note& note, const LlmConfig& config);

/// Builds the request sequence of one conversation.
class PromptSession {
public:
    PromptSession(const LlmConfig& config, std::string session_id);

    ChatRequest next(const Note& note);
    const std::string& id() const noexcept { return session_id_; }
    std::size_t turns() const noexcept { return turns_; }

private:
    std::string model_;
    double temperature_;
    SessionMode mode_;
    std::string session_id_;
    std::size_t turns_ = 0;
};

struct Finding {
    bool present = false;
    std::string evidence;

    friend bool operator==(const Finding&, const Finding&) = default;
};

struct ParsedPhenotype {
    std::array<Finding, kLabelCount> findings{};

    friend bool operator==(const ParsedPhenotype&, const ParsedPhenotype&) = default;
};

/// Strict "<Label>: <value>" parser. Labels match case-insensitively, "None"
/// (any case) means absent, any other value means present. Blank lines are
/// skipped. Throws Error(Parse) on unknown, duplicate, valueless or missing
/// labels; the message lists every missing label.
ParsedPhenotype parse_response(std::string_view raw);

/// Inverse of parse_response: one "<Label>: <value>" line per label in
/// canonical order with display names (EOM, ON capitalized).
std::string render_response(const ParsedPhenotype& parsed);
ParsedPhenotype findings_from_vector(const LabelVector& vector);

LabelVector to_vector(const ParsedPhenotype& parsed);

/// Display name used in responses: "Behavior", ..., "EOM", "ON", ...
std::string_view label_display_name(Label label) noexcept;

class TransportError : public Error {
public:
    TransportError(const std::string& message, int status, int attempts)
        : Error(ErrorKind::Transport, message), status_(status), attempts_(attempts) {}

    int status() const noexcept { return status_; }  // 0 when no HTTP response was received
    int attempts() const noexcept { return attempts_; }

private:
    int status_;
    int attempts_;
};

struct CallResult {
    std::string content;
    int attempts = 0;
};

/// Token-bucket style limiter shared by every worker hitting one endpoint.
class RateLimiter {
public:
    explicit RateLimiter(double per_second);
    void acquire();

private:
    std::mutex mutex_;
    std::chrono::steady_clock::duration interval_{};
    std::chrono::steady_clock::time_point next_{};
};

/// Chat-completion client over HTTP(S). Thread-safe.
class ChatClient {
public:
    using Sleeper = std::function<void(std::chrono::duration<double>)>;

    /// Reads the bearer token from config.token_env. Throws Error(Config) if
    /// the variable is unset or empty. No network I/O happens here.
    explicit ChatClient(LlmConfig config, Sleeper sleeper = {});
    ~ChatClient();
    ChatClient(const ChatClient&) = delete;
    ChatClient& operator=(const ChatClient&) = delete;

    /// POST the request and return choices[0].message.content. Retries on
    /// 429, 5xx and connection failures with exponential backoff. Throws
    /// Error(Auth) on 401/403, TransportError when retries run out or on
    /// another non-success status, Error(Protocol) on a malformed envelope.
    CallResult call(const ChatRequest& request);

    /// Delay before retry number `retry` (1-based), jitter included.
    std::chrono::duration<double> backoff_delay(int retry);

    const LlmConfig& config() const noexcept { return config_; }

private:
    struct Impl;
    LlmConfig config_;
    std::string token_;
    Sleeper sleeper_;
    std::unique_ptr<Impl> impl_;
};

/// One line of the audit log.
struct AuditRecord {
    std::string note_id;
    nlohmann::json request;
    std::string response;
    std::optional<LabelVector> parsed;
    std::string error;

    nlohmann::json to_json() const;
    static AuditRecord from_json(const nlohmann::json& json);
};

/// Append-only JSON-lines audit log with serialized writes.
class AuditLog {
public:
    explicit AuditLog(const std::filesystem::path& path);
    void append(const AuditRecord& record);

private:
    std::mutex mutex_;
    std::filesystem::path path_;
};

std::vector<AuditRecord> read_audit_log(const std::filesystem::path& path);

/// Re-score an audit log offline: parse every stored response again. Notes
/// whose record carries an error become all-zero rows. Rows are ordered by
/// note_id.
PhenotypeMatrix matrix_from_audit(const std::vector<AuditRecord>& records);

struct LlmRunReport {
    PhenotypeMatrix matrix;           // rows ordered by note_id
    std::vector<std::string> failed;  // "note_id: message" per failure
};

/// Query every note. Stateless mode fans out over config.concurrency workers;
/// ServerSession mode gives each worker its own session. A failing note is
/// recorded (all-zero row, audit entry with error) and the run continues.
LlmRunReport run_llm(const std::vector<Note>& notes, ChatClient& client, AuditLog* audit);

}  // namespace pheno
