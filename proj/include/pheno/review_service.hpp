#pragma once

#include "pheno/corpus.hpp"
#include "pheno/embedding.hpp"
#include "pheno/lexicon.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace pheno {

struct ReviewOptions {
    std::filesystem::path lexicon_path;         // rewritten after every mutation
    std::optional<std::filesystem::path> static_dir;
    std::size_t limit_per_seed = 100;
    std::size_t context_limit = 20;
    std::size_t context_tokens = 10;
};

struct ContextSnippet {
    std::string note_id;
    std::string snippet;
    std::size_t start = 0;  // byte range of the phrase inside the note
    std::size_t end = 0;
};

/// Up to `limit` occurrences of a phrase with +/- `window` tokens of context.
std::vector<ContextSnippet> find_contexts(const std::vector<Note>& notes, std::string_view phrase,
                                          std::size_t limit, std::size_t window);

/// JSON API behind the candidate review UI. Lexicon mutations go through one
/// mutex and are persisted before the response is sent.
class ReviewService {
public:
    ReviewService(Lexicon lexicon, EmbeddingModel model, std::vector<Note> notes,
                  ReviewOptions options);
    ~ReviewService();

    /// Register the /api routes (and static assets) on a server.
    void mount(httplib::Server& server);

    /// Bind and serve until stop(). Throws Error(Io) if the port is taken.
    void listen(const std::string& host, int port);
    /// Bind to an ephemeral port, serve on a background thread, return the port.
    int start_background(const std::string& host = "127.0.0.1");
    void stop();

    std::uint64_t version() const;
    Lexicon snapshot() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pheno
