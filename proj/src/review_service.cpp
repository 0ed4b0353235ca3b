#include "pheno/review_service.hpp"

#include "pheno/error.hpp"
#include "pheno/labels.hpp"
#include "text_util.hpp"

#include <charconv>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace pheno {

using nlohmann::json;

std::vector<ContextSnippet> find_contexts(const std::vector<Note>& notes, std::string_view phrase,
                                          std::size_t limit, std::size_t window) {
    std::vector<ContextSnippet> out;
    const auto needle = phrase_tokens(normalize_phrase(phrase));
    if (needle.empty() || limit == 0) return out;
    for (const auto& note : notes) {
        const auto tokens = tokenize(note.text);
        if (tokens.size() < needle.size()) continue;
        for (std::size_t i = 0; i + needle.size() <= tokens.size(); ++i) {
            bool hit = true;
            for (std::size_t k = 0; k < needle.size() && hit; ++k) hit = tokens[i + k].surface == needle[k];
            if (!hit) continue;
            const std::size_t last = i + needle.size() - 1;
            const std::size_t from = i >= window ? i - window : 0;
            const std::size_t to = std::min(tokens.size() - 1, last + window);
            ContextSnippet snippet;
            snippet.note_id = note.note_id;
            snippet.snippet = note.text.substr(tokens[from].start, tokens[to].end - tokens[from].start);
            snippet.start = tokens[i].start;
            snippet.end = tokens[last].end;
            out.push_back(std::move(snippet));
            if (out.size() >= limit) return out;
        }
    }
    return out;
}

namespace {

int http_status(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Conflict: return 409;
        case ErrorKind::Lookup: return 404;
        case ErrorKind::Config:
        case ErrorKind::Validation:
        case ErrorKind::Parse: return 400;
        default: return 500;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

json candidate_json(const Candidate& c) {
    return {{"phrase", c.phrase},
            {"label", label_name(c.label)},
            {"similarity", c.similarity},
            {"nearest_seed", c.nearest_seed}};
}

json simclin_json(const Simclin& s) {
    return {{"phrase", s.phrase},
            {"label", label_name(s.label)},
            {"similarity", s.similarity ? json(*s.similarity) : json(nullptr)},
            {"status", to_string(s.status)},
            {"provenance", s.provenance}};
}

json parse_body(const httplib::Request& req) {
    try {
        auto body = json::parse(req.body);
        if (!body.is_object()) throw Error(ErrorKind::Validation, "request body must be a JSON object");
        return body;
    } catch (const json::parse_error&) {
        throw Error(ErrorKind::Validation, "request body is not valid JSON");
    }
}

std::string require_string(const json& body, const char* field) {
    auto it = body.find(field);
    if (it == body.end() || !it->is_string()) {
        throw Error(ErrorKind::Validation, std::string("field \"") + field + "\" (string) is required");
    }
    return it->get<std::string>();
}

std::size_t query_size(const httplib::Request& req, const char* name, std::size_t fallback) {
    if (!req.has_param(name)) return fallback;
    const auto text = req.get_param_value(name);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorKind::Validation, std::string("query parameter '") + name +
                                               "' must be a non-negative integer");
    }
    return value;
}

}  // namespace

struct ReviewService::Impl {
    mutable std::mutex mutex;
    Lexicon lexicon;
    EmbeddingModel model;
    std::vector<Note> notes;
    ReviewOptions options;
    std::vector<Candidate> candidates;
    std::vector<std::string> warnings;
    std::uint64_t version = 0;

    httplib::Server server;
    std::thread thread;

    void regenerate_locked() {
        auto batch = generate_candidates(lexicon, model, options.limit_per_seed);
        candidates = std::move(batch.candidates);
        warnings = std::move(batch.warnings);
    }

    // Apply a mutation to a copy, persist it, then publish. The caller holds
    // the mutex.
    template <typename Fn>
    void mutate_locked(Fn&& fn) {
        Lexicon next = lexicon;
        fn(next);
        save_lexicon(next, options.lexicon_path);
        lexicon = std::move(next);
        ++version;
    }

    template <typename Fn>
    void guarded(httplib::Response& res, Fn&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            send_error(res, http_status(e), e.code(), e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    }
};

ReviewService::ReviewService(Lexicon lexicon, EmbeddingModel model, std::vector<Note> notes,
                             ReviewOptions options)
    : impl_(std::make_unique<Impl>()) {
    impl_->lexicon = std::move(lexicon);
    impl_->model = std::move(model);
    impl_->notes = std::move(notes);
    impl_->options = std::move(options);
    impl_->regenerate_locked();
    // SO_REUSEADDR only: a port held by another live listener must fail to bind.
    impl_->server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    mount(impl_->server);
}

ReviewService::~ReviewService() { stop(); }

std::uint64_t ReviewService::version() const {
    std::lock_guard lock(impl_->mutex);
    return impl_->version;
}

Lexicon ReviewService::snapshot() const {
    std::lock_guard lock(impl_->mutex);
    return impl_->lexicon;
}

void ReviewService::mount(httplib::Server& server) {
    Impl& s = *impl_;

    server.Get("/api/labels", [&s](const httplib::Request&, httplib::Response& res) {
        json labels = json::array();
        for (auto label : kAllLabels) labels.push_back(label_name(label));
        send_json(res, 200, {{"labels", labels}});
    });

    server.Get("/api/lexicon", [&s](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(s.mutex);
        auto body = json::parse(lexicon_to_json(s.lexicon));
        body["version"] = s.version;
        send_json(res, 200, body);
    });

    server.Get("/api/candidates", [&s](const httplib::Request& req, httplib::Response& res) {
        s.guarded(res, [&] {
            std::optional<Label> filter;
            if (req.has_param("label") && !req.get_param_value("label").empty()) {
                filter = require_label(req.get_param_value("label"));
            }
            const auto offset = query_size(req, "offset", 0);
            const auto limit = query_size(req, "limit", 50);
            std::lock_guard lock(s.mutex);
            std::vector<const Candidate*> open;
            for (const auto& c : s.candidates) {
                if (filter && c.label != *filter) continue;
                if (s.lexicon.find(c.phrase, c.label)) continue;  // decided since generation
                open.push_back(&c);
            }
            json rows = json::array();
            for (std::size_t i = offset; i < open.size() && i < offset + limit; ++i) {
                rows.push_back(candidate_json(*open[i]));
            }
            send_json(res, 200,
                      {{"version", s.version},
                       {"total", open.size()},
                       {"offset", offset},
                       {"limit", limit},
                       {"candidates", rows}});
        });
    });

    server.Post("/api/decision", [&s](const httplib::Request& req, httplib::Response& res) {
        s.guarded(res, [&] {
            const auto body = parse_body(req);
            const auto phrase = require_string(body, "phrase");
            const auto label = require_label(require_string(body, "label"));
            const auto decision = parse_decision(require_string(body, "decision"));
            std::lock_guard lock(s.mutex);
            std::optional<double> similarity;
            const auto key = normalize_phrase(phrase);
            for (const auto& c : s.candidates) {
                if (c.label == label && c.phrase == key) similarity = c.similarity;
            }
            s.mutate_locked([&](Lexicon& lex) {
                lex.decide(phrase, label, decision, similarity,
                           "review-v" + std::to_string(s.version + 1));
            });
            send_json(res, 200,
                      {{"version", s.version}, {"simclin", simclin_json(*s.lexicon.find(key, label))}});
        });
    });

    server.Post("/api/regenerate", [&s](const httplib::Request&, httplib::Response& res) {
        s.guarded(res, [&] {
            std::lock_guard lock(s.mutex);
            s.regenerate_locked();
            send_json(res, 200,
                      {{"version", s.version},
                       {"total", s.candidates.size()},
                       {"warnings", s.warnings}});
        });
    });

    server.Get("/api/contexts", [&s](const httplib::Request& req, httplib::Response& res) {
        s.guarded(res, [&] {
            if (!req.has_param("phrase") || req.get_param_value("phrase").empty()) {
                throw Error(ErrorKind::Validation, "query parameter 'phrase' is required");
            }
            const auto phrase = req.get_param_value("phrase");
            // Notes are immutable after construction; no lock needed.
            const auto found = find_contexts(s.notes, phrase, s.options.context_limit,
                                             s.options.context_tokens);
            json rows = json::array();
            for (const auto& c : found) {
                rows.push_back({{"note_id", c.note_id},
                                {"snippet", c.snippet},
                                {"start", c.start},
                                {"end", c.end}});
            }
            send_json(res, 200, {{"phrase", normalize_phrase(phrase)}, {"contexts", rows}});
        });
    });

    server.Get("/api/negations", [&s](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(s.mutex);
        json rows = json::array();
        for (const auto& n : s.lexicon.negations()) {
            rows.push_back({{"phrase", n.phrase}, {"position", to_string(n.position)}});
        }
        send_json(res, 200, {{"version", s.version}, {"negations", rows}});
    });

    server.Post("/api/negations", [&s](const httplib::Request& req, httplib::Response& res) {
        s.guarded(res, [&] {
            const auto body = parse_body(req);
            const auto phrase = require_string(body, "phrase");
            const auto position = parse_position(require_string(body, "position"));
            std::lock_guard lock(s.mutex);
            s.mutate_locked([&](Lexicon& lex) { lex.add_negation(phrase, position); });
            send_json(res, 201,
                      {{"version", s.version},
                       {"negation", {{"phrase", normalize_phrase(phrase)},
                                     {"position", to_string(position)}}}});
        });
    });

    server.Delete("/api/negations", [&s](const httplib::Request& req, httplib::Response& res) {
        s.guarded(res, [&] {
            if (!req.has_param("phrase") || !req.has_param("position")) {
                throw Error(ErrorKind::Validation, "query parameters 'phrase' and 'position' are required");
            }
            const auto phrase = req.get_param_value("phrase");
            const auto position = parse_position(req.get_param_value("position"));
            std::lock_guard lock(s.mutex);
            Lexicon probe = s.lexicon;
            if (!probe.remove_negation(phrase, position)) {
                throw Error(ErrorKind::Lookup, "negation '" + normalize_phrase(phrase) + "' (" +
                                                   std::string(to_string(position)) + ") not found");
            }
            s.mutate_locked([&](Lexicon& lex) { lex.remove_negation(phrase, position); });
            send_json(res, 200, {{"version", s.version}});
        });
    });

    if (s.options.static_dir) {
        if (!server.set_mount_point("/", s.options.static_dir->string())) {
            throw Error(ErrorKind::Config,
                        "static asset directory '" + s.options.static_dir->string() + "' not found");
        }
    }
}

void ReviewService::listen(const std::string& host, int port) {
    if (!impl_->server.bind_to_port(host, port)) {
        throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port) +
                                       " (port in use?)");
    }
    impl_->server.listen_after_bind();
}

int ReviewService::start_background(const std::string& host) {
    const int port = impl_->server.bind_to_any_port(host);
    if (port < 0) throw Error(ErrorKind::Io, "cannot bind an ephemeral port on " + host);
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void ReviewService::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace pheno
