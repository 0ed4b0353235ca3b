#include "pheno/llm.hpp"

#include "resources.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <thread>

#include <httplib.h>

namespace pheno {

using nlohmann::json;

SessionMode parse_session_mode(std::string_view text) {
    const auto folded = detail::to_lower(detail::trim(text));
    if (folded == "stateless") return SessionMode::Stateless;
    if (folded == "server-session" || folded == "server_session" || folded == "session") {
        return SessionMode::ServerSession;
    }
    throw Error(ErrorKind::Config, "session mode must be 'stateless' or 'server-session', got '" +
                                       std::string(text) + "'");
}

void LlmConfig::validate() const {
    if (endpoint.empty()) throw Error(ErrorKind::Config, "LLM endpoint must not be empty");
    if (model.empty()) throw Error(ErrorKind::Config, "LLM model must not be empty");
    if (token_env.empty()) throw Error(ErrorKind::Config, "LLM token variable name must not be empty");
    if (!(timeout_seconds > 0.0)) throw Error(ErrorKind::Config, "LLM timeout must be > 0");
    if (max_retries < 0) throw Error(ErrorKind::Config, "LLM max retries must be >= 0");
    if (!(backoff_base_seconds >= 0.0)) throw Error(ErrorKind::Config, "backoff base must be >= 0");
    if (!(backoff_jitter >= 0.0 && backoff_jitter < 1.0)) {
        throw Error(ErrorKind::Config, "backoff jitter must be in [0, 1)");
    }
    if (concurrency < 1) throw Error(ErrorKind::Config, "LLM concurrency must be >= 1");
    if (!(max_requests_per_second >= 0.0)) {
        throw Error(ErrorKind::Config, "rate limit must be >= 0");
    }
}

const std::string& phenotype_instructions() { return detail::instructions_text(); }

json ChatRequest::to_json() const {
    json j;
    j["model"] = model;
    j["temperature"] = temperature;
    j["messages"] = json::array();
    for (const auto& m : messages) j["messages"].push_back({{"role", m.role}, {"content", m.content}});
    if (session_id) j["session_id"] = *session_id;
    return j;
}

namespace {

void require_text(const Note& note) {
    if (detail::trim(note.text).empty()) {
        throw Error(ErrorKind::Validation, "note '" + note.note_id + "' has empty text");
    }
}

}  // namespace

ChatRequest build_request(const Note& note, const LlmConfig& config) {
    require_text(note);
    ChatRequest request;
    request.model = config.model;
    request.temperature = config.temperature;
    request.messages.push_back({"system", phenotype_instructions()});
    request.messages.push_back({"user", note.text});
    return request;
}

PromptSession::PromptSession(const LlmConfig& config, std::string session_id)
    : model_(config.model),
      temperature_(config.temperature),
      mode_(config.session_mode),
      session_id_(std::move(session_id)) {}

ChatRequest PromptSession::next(const Note& note) {
    require_text(note);
    ChatRequest request;
    request.model = model_;
    request.temperature = temperature_;
    if (mode_ == SessionMode::Stateless || turns_ == 0) {
        request.messages.push_back({"system", phenotype_instructions()});
    }
    request.messages.push_back({"user", note.text});
    if (mode_ == SessionMode::ServerSession) request.session_id = session_id_;
    ++turns_;
    return request;
}

std::string_view label_display_name(Label label) noexcept {
    static constexpr std::array<std::string_view, kLabelCount> kDisplay = {
        "Behavior", "Cognitive",      "EOM", "Fatigue",      "Gait",    "Hyperreflexia",
        "Hypertonia", "Hyporeflexia", "Sphincter", "Incoordination", "ON", "Pain",
        "Paresthesias", "Seizure",    "Sleep", "Speech",     "Tremor",  "Vision",
        "Weakness",
    };
    return kDisplay[ordinal(label)];
}

ParsedPhenotype parse_response(std::string_view raw) {
    ParsedPhenotype parsed;
    std::array<bool, kLabelCount> seen{};
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < raw.size()) {
        const auto newline = raw.find('\n', pos);
        const auto line = detail::trim(raw.substr(
            pos, newline == std::string_view::npos ? std::string_view::npos : newline - pos));
        pos = newline == std::string_view::npos ? raw.size() : newline + 1;
        ++line_no;
        if (line.empty()) continue;

        const auto colon = line.find(':');
        if (colon == std::string_view::npos) {
            throw Error(ErrorKind::Parse, "response line " + std::to_string(line_no) +
                                              ": expected '<Label>: <value>', got '" +
                                              std::string(line) + "'");
        }
        const auto name = detail::trim(line.substr(0, colon));
        const auto label = parse_label(name);
        if (!label) {
            throw Error(ErrorKind::Parse, "response line " + std::to_string(line_no) +
                                              ": unknown label '" + std::string(name) + "'");
        }
        if (seen[ordinal(*label)]) {
            throw Error(ErrorKind::Parse, "response line " + std::to_string(line_no) +
                                              ": duplicate label '" + std::string(name) + "'");
        }
        seen[ordinal(*label)] = true;
        const auto value = detail::trim(line.substr(colon + 1));
        if (value.empty()) {
            throw Error(ErrorKind::Parse, "response line " + std::to_string(line_no) +
                                              ": no value for label '" + std::string(name) + "'");
        }
        auto folded = detail::to_lower(value);
        if (folded.back() == '.') folded.pop_back();
        auto& finding = parsed.findings[ordinal(*label)];
        finding.present = folded != "none";
        finding.evidence = std::string(value);
    }

    std::string missing;
    for (auto label : kAllLabels) {
        if (!seen[ordinal(label)]) {
            if (!missing.empty()) missing += ", ";
            missing += label_display_name(label);
        }
    }
    if (!missing.empty()) throw Error(ErrorKind::Parse, "response is missing labels: " + missing);
    return parsed;
}

std::string render_response(const ParsedPhenotype& parsed) {
    std::string out;
    for (auto label : kAllLabels) {
        const auto& finding = parsed.findings[ordinal(label)];
        out += label_display_name(label);
        out += ": ";
        out += finding.present ? finding.evidence : std::string("None");
        out += '\n';
    }
    return out;
}

ParsedPhenotype findings_from_vector(const LabelVector& vector) {
    ParsedPhenotype parsed;
    for (std::size_t l = 0; l < kLabelCount; ++l) {
        parsed.findings[l].present = vector[l] != 0;
        parsed.findings[l].evidence = vector[l] ? "present" : "None";
    }
    return parsed;
}

LabelVector to_vector(const ParsedPhenotype& parsed) {
    LabelVector out{};
    for (std::size_t l = 0; l < kLabelCount; ++l) out[l] = parsed.findings[l].present ? 1 : 0;
    return out;
}

RateLimiter::RateLimiter(double per_second) {
    if (per_second > 0.0) {
        interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / per_second));
    }
}

void RateLimiter::acquire() {
    if (interval_ == std::chrono::steady_clock::duration::zero()) return;
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_);
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

struct ChatClient::Impl {
    std::string origin;  // scheme://host[:port]
    std::string path;
    RateLimiter limiter;
    std::mutex rng_mutex;
    std::mt19937_64 rng;

    Impl(std::string origin_, std::string path_, double rate, std::uint64_t seed)
        : origin(std::move(origin_)), path(std::move(path_)), limiter(rate), rng(seed) {}
};

namespace {

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorKind::Config, "LLM endpoint must be an http(s) URL: '" + endpoint + "'");
    }
    const auto scheme = endpoint.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw Error(ErrorKind::Config, "unsupported URL scheme '" + scheme + "'");
    }
    const auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

ChatClient::ChatClient(LlmConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
    config_.validate();
    const char* token = std::getenv(config_.token_env.c_str());
    if (token == nullptr || *token == '\0') {
        throw Error(ErrorKind::Config,
                    "environment variable " + config_.token_env + " (LLM auth token) is not set");
    }
    token_ = token;
    auto [origin, path] = split_endpoint(config_.endpoint);
    impl_ = std::make_unique<Impl>(std::move(origin), std::move(path),
                                   config_.max_requests_per_second, config_.seed);
    if (!sleeper_) {
        sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
    }
}

ChatClient::~ChatClient() = default;

std::chrono::duration<double> ChatClient::backoff_delay(int retry) {
    const double base = config_.backoff_base_seconds * std::pow(2.0, retry - 1);
    double unit = 0.0;
    {
        std::lock_guard lock(impl_->rng_mutex);
        unit = static_cast<double>(impl_->rng() >> 11) * 0x1.0p-53;
    }
    return std::chrono::duration<double>(base * (1.0 + config_.backoff_jitter * (2.0 * unit - 1.0)));
}

CallResult ChatClient::call(const ChatRequest& request) {
    const std::string body = request.to_json().dump();
    const httplib::Headers headers = {{"Authorization", "Bearer " + token_}};
    const auto timeout_sec = static_cast<time_t>(config_.timeout_seconds);
    const auto timeout_usec =
        static_cast<time_t>((config_.timeout_seconds - static_cast<double>(timeout_sec)) * 1e6);

    int last_status = 0;
    std::string last_error;
    const int max_attempts = config_.max_retries + 1;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        impl_->limiter.acquire();
        httplib::Client client(impl_->origin);
        client.set_connection_timeout(timeout_sec, timeout_usec);
        client.set_read_timeout(timeout_sec, timeout_usec);
        client.set_write_timeout(timeout_sec, timeout_usec);
        auto result = client.Post(impl_->path, headers, body, "application/json");

        if (!result) {
            last_status = 0;
            last_error = httplib::to_string(result.error());
        } else {
            const int status = result->status;
            if (status >= 200 && status < 300) {
                json envelope;
                try {
                    envelope = json::parse(result->body);
                    const auto& content = envelope.at("choices").at(0).at("message").at("content");
                    if (!content.is_string()) throw Error(ErrorKind::Protocol, "content is not a string");
                    return {content.get<std::string>(), attempt};
                } catch (const json::exception& e) {
                    throw Error(ErrorKind::Protocol,
                                std::string("malformed chat-completion envelope: ") + e.what());
                }
            }
            if (status == 401 || status == 403) {
                throw Error(ErrorKind::Auth, "endpoint rejected credentials (HTTP " +
                                                 std::to_string(status) + ")");
            }
            last_status = status;
            last_error = "HTTP " + std::to_string(status);
            if (status != 429 && status < 500) {
                throw TransportError("request failed with " + last_error, status, attempt);
            }
        }
        if (attempt < max_attempts) sleeper_(backoff_delay(attempt));
    }
    throw TransportError("retries exhausted after " + std::to_string(max_attempts) +
                             " attempts; last error: " + last_error,
                         last_status, max_attempts);
}

json AuditRecord::to_json() const {
    nlohmann::ordered_json j;
    j["note_id"] = note_id;
    j["request"] = request;
    j["response"] = response;
    if (parsed) {
        nlohmann::ordered_json labels;
        for (auto label : kAllLabels) labels[std::string(label_name(label))] = (*parsed)[ordinal(label)];
        j["parsed"] = std::move(labels);
    } else {
        j["parsed"] = nullptr;
    }
    j["error"] = error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(error);
    return json::parse(j.dump());
}

AuditRecord AuditRecord::from_json(const json& j) {
    AuditRecord record;
    try {
        record.note_id = j.at("note_id").get<std::string>();
        record.request = j.value("request", json());
        record.response = j.at("response").is_string() ? j["response"].get<std::string>() : "";
        if (j.contains("parsed") && j["parsed"].is_object()) {
            LabelVector v{};
            for (const auto& [name, value] : j["parsed"].items()) {
                v[ordinal(require_label(name))] = value.get<int>() ? 1 : 0;
            }
            record.parsed = v;
        }
        if (j.contains("error") && j["error"].is_string()) record.error = j["error"].get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("malformed audit record: ") + e.what());
    }
    return record;
}

AuditLog::AuditLog(const std::filesystem::path& path) : path_(path) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error(ErrorKind::Io, "cannot open audit log '" + path_.string() + "'");
}

void AuditLog::append(const AuditRecord& record) {
    const std::string line = record.to_json().dump() + "\n";
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << line;
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "cannot append to audit log '" + path_.string() + "'");
}

std::vector<AuditRecord> read_audit_log(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorKind::Config, "audit log '" + path.string() + "' does not exist");
    }
    std::ifstream in(path, std::ios::binary);
    std::vector<AuditRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        try {
            records.push_back(AuditRecord::from_json(json::parse(line)));
        } catch (const json::exception&) {
            throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": not valid JSON");
        } catch (const Error& e) {
            throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

PhenotypeMatrix matrix_from_audit(const std::vector<AuditRecord>& records) {
    std::map<std::string, LabelVector> rows;
    for (const auto& record : records) {
        LabelVector v{};
        if (record.error.empty()) {
            try {
                v = to_vector(parse_response(record.response));
            } catch (const Error&) {
                v = LabelVector{};
            }
        }
        rows[record.note_id] = v;
    }
    PhenotypeMatrix matrix;
    for (const auto& [id, v] : rows) matrix.add_row(id, v);
    return matrix;
}

LlmRunReport run_llm(const std::vector<Note>& notes, ChatClient& client, AuditLog* audit) {
    const std::size_t workers =
        std::max<std::size_t>(1, std::min(client.config().concurrency, notes.size()));
    std::vector<LabelVector> vectors(notes.size());
    std::vector<std::string> failures(notes.size());
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    std::atomic<bool> abort{false};

    auto worker = [&](std::size_t w) {
        PromptSession session(client.config(), "session-" + std::to_string(w));
        for (std::size_t i = w; i < notes.size() && !abort; i += workers) {
            const Note& note = notes[i];
            AuditRecord record;
            record.note_id = note.note_id;
            try {
                const auto request = session.next(note);
                record.request = request.to_json();
                auto result = client.call(request);
                record.response = result.content;
                vectors[i] = to_vector(parse_response(result.content));
                record.parsed = vectors[i];
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::Auth || e.kind() == ErrorKind::Config) {
                    std::lock_guard lock(fatal_mutex);
                    if (!fatal) fatal = std::current_exception();
                    abort = true;
                    return;
                }
                vectors[i] = LabelVector{};
                record.error = std::string(e.code()) + ": " + e.what();
                failures[i] = note.note_id + ": " + record.error;
            }
            if (audit) audit->append(record);
        }
    };

    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(worker, w);
    worker(0);
    for (auto& t : threads) t.join();
    if (fatal) std::rethrow_exception(fatal);

    std::vector<std::size_t> order(notes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return notes[a].note_id < notes[b].note_id; });
    LlmRunReport report;
    for (auto i : order) {
        report.matrix.add_row(notes[i].note_id, vectors[i]);
        if (!failures[i].empty()) report.failed.push_back(failures[i]);
    }
    return report;
}

}  // namespace pheno
