// phenopipe: phenotyping pipeline driver.
//
//   ingest -> train-embeddings -> expand / review-serve -> match
//          -> train-classifier -> predict -> evaluate / report
//   llm-run -> evaluate
//
// Exit codes: 0 success, 1 validation error, 2 runtime error. Failures print
// one line "ERROR <code>: <detail>" on stderr.

#include "pheno/classifier.hpp"
#include "pheno/corpus.hpp"
#include "pheno/embedding.hpp"
#include "pheno/error.hpp"
#include "pheno/evaluation.hpp"
#include "pheno/lexicon.hpp"
#include "pheno/llm.hpp"
#include "pheno/matcher.hpp"
#include "pheno/review_service.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace pheno;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string id_column = "note_id";
    std::string text_column = "text";
};

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path)) {
        throw Error(ErrorKind::Config, std::string(what) + " '" + path + "' does not exist");
    }
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out << content;
}

std::vector<Note> load_notes(const std::string& path, const Common& common) {
    require_file(path, "corpus");
    auto result = ingest_csv(path, {common.id_column, common.text_column});
    for (const auto& warning : result.warnings) std::cerr << "warning: " << warning << "\n";
    return std::move(result.notes);
}

Lexicon load_nonempty_lexicon(const std::string& path) {
    require_file(path, "lexicon");
    auto lexicon = load_lexicon(path);
    if (lexicon.active().empty()) {
        throw Error(ErrorKind::Validation,
                    "lexicon '" + path + "' has no seed or accepted simclins");
    }
    return lexicon;
}

std::vector<TokenStream> token_streams(const std::vector<Note>& notes) {
    std::vector<TokenStream> out;
    out.reserve(notes.size());
    for (const auto& note : notes) {
        TokenStream stream;
        for (auto& token : tokenize(note.text)) stream.push_back(std::move(token.surface));
        out.push_back(std::move(stream));
    }
    return out;
}

/// Rows of `matrix` for exactly the ids in `order`; extra rows are dropped.
PhenotypeMatrix select_rows(const PhenotypeMatrix& matrix, const std::vector<std::string>& order,
                            const std::string& name) {
    PhenotypeMatrix out;
    for (const auto& id : order) {
        if (!matrix.contains(id)) {
            throw Error(ErrorKind::Alignment,
                        "prediction '" + name + "' has no row for gold note '" + id + "'");
        }
        out.add_row(id, matrix.row(matrix.row_of(id)));
    }
    if (matrix.rows() > order.size()) {
        std::cerr << "note: prediction '" << name << "' has " << (matrix.rows() - order.size())
                  << " rows outside the gold set; ignored\n";
    }
    return out;
}

std::pair<std::string, std::string> split_named(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) return {fs::path(spec).stem().string(), spec};
    return {spec.substr(0, eq), spec.substr(eq + 1)};
}

ReviewService* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phenopipe - high-throughput phenotyping of physician notes"};
    app.require_subcommand(1);
    Common common;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", common.seed, "Seed for every random choice");
        sub->add_option("--workers", common.workers, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--id-column", common.id_column, "CSV column holding the note id");
        sub->add_option("--text-column", common.text_column, "CSV column holding the note text");
    };

    // ingest
    std::string corpus_path, out_path;
    auto* ingest = app.add_subcommand("ingest", "Validate a note CSV and write a normalized copy");
    ingest->add_option("--corpus", corpus_path, "Input CSV")->required();
    ingest->add_option("--out", out_path, "Normalized CSV output")->required();
    add_common(ingest);

    // train-embeddings
    EmbeddingConfig emb;
    bool no_phrases = false;
    auto* train_emb = app.add_subcommand("train-embeddings", "Train skip-gram vectors on the corpus");
    train_emb->add_option("--corpus", corpus_path)->required();
    train_emb->add_option("--out", out_path, "Vector file")->required();
    train_emb->add_option("--dim", emb.dim);
    train_emb->add_option("--window", emb.window);
    train_emb->add_option("--negative", emb.negative_samples);
    train_emb->add_option("--epochs", emb.epochs);
    train_emb->add_option("--min-count", emb.min_count);
    train_emb->add_option("--lr", emb.initial_learning_rate);
    train_emb->add_option("--phrase-min-count", emb.phrase_min_count);
    train_emb->add_option("--phrase-threshold", emb.phrase_score_threshold);
    train_emb->add_flag("--no-phrases", no_phrases, "Skip bigram phrase detection");
    add_common(train_emb);

    // expand
    std::string lexicon_path, embeddings_path;
    double threshold = kDefaultThreshold;
    std::size_t limit_per_seed = 100;
    auto* expand = app.add_subcommand("expand", "Generate simclin candidates from the embeddings");
    expand->add_option("--lexicon", lexicon_path)->required();
    expand->add_option("--embeddings", embeddings_path)->required();
    auto* threshold_opt = expand->add_option("--threshold", threshold, "Minimum cosine similarity");
    expand->add_option("--limit-per-seed", limit_per_seed);
    expand->add_option("--out", out_path, "Candidates JSONL")->required();
    add_common(expand);

    // review-serve
    std::string host = "127.0.0.1", static_dir;
    int port = 8080;
    auto* serve = app.add_subcommand("review-serve", "Serve the candidate review API");
    serve->add_option("--lexicon", lexicon_path)->required();
    serve->add_option("--embeddings", embeddings_path)->required();
    serve->add_option("--corpus", corpus_path)->required();
    serve->add_option("--host", host);
    serve->add_option("--port", port);
    serve->add_option("--static-dir", static_dir, "Built UI assets");
    serve->add_option("--limit-per-seed", limit_per_seed);
    add_common(serve);

    // match
    NegationConfig negation;
    std::string matches_out;
    auto* match = app.add_subcommand("match", "Lexicon matching with negation -> phenotype matrix");
    match->add_option("--corpus", corpus_path)->required();
    match->add_option("--lexicon", lexicon_path)->required();
    match->add_option("--out", out_path, "Matrix CSV")->required();
    match->add_option("--matches-out", matches_out, "Match dump (JSONL)");
    match->add_option("--pre-window", negation.pre_window);
    match->add_option("--post-window", negation.post_window);
    add_common(match);

    // train-classifier
    ClassifierParams params;
    auto* train_cls = app.add_subcommand("train-classifier", "Positive-only linear SVM per label");
    train_cls->add_option("--corpus", corpus_path)->required();
    train_cls->add_option("--lexicon", lexicon_path)->required();
    train_cls->add_option("--out", out_path, "Model JSON")->required();
    train_cls->add_option("--lambda", params.lambda);
    train_cls->add_option("--epochs", params.epochs);
    train_cls->add_option("--negative-ratio", params.negative_sample_ratio);
    train_cls->add_option("--pre-window", params.negation.pre_window);
    train_cls->add_option("--post-window", params.negation.post_window);
    add_common(train_cls);

    // predict
    std::string model_path, margins_out;
    auto* predict_cmd = app.add_subcommand("predict", "Apply a trained classifier");
    predict_cmd->add_option("--corpus", corpus_path)->required();
    predict_cmd->add_option("--lexicon", lexicon_path)->required();
    predict_cmd->add_option("--model", model_path)->required();
    predict_cmd->add_option("--out", out_path, "Matrix CSV")->required();
    predict_cmd->add_option("--margins-out", margins_out, "Per-label margins CSV");
    add_common(predict_cmd);

    // llm-run
    LlmConfig llm;
    std::string audit_path, session_mode = "stateless";
    auto* llm_run = app.add_subcommand("llm-run", "Phenotype every note with a chat-completion endpoint");
    llm_run->add_option("--corpus", corpus_path)->required();
    llm_run->add_option("--out", out_path, "Matrix CSV")->required();
    llm_run->add_option("--audit", audit_path, "Audit log (JSONL)")->required();
    llm_run->add_option("--endpoint", llm.endpoint);
    llm_run->add_option("--model", llm.model);
    llm_run->add_option("--token-env", llm.token_env, "Environment variable holding the bearer token");
    llm_run->add_option("--timeout", llm.timeout_seconds);
    llm_run->add_option("--retries", llm.max_retries);
    llm_run->add_option("--backoff", llm.backoff_base_seconds, "Base backoff in seconds");
    llm_run->add_option("--temperature", llm.temperature);
    llm_run->add_option("--session-mode", session_mode, "stateless | server-session");
    llm_run->add_option("--concurrency", llm.concurrency);
    llm_run->add_option("--rate", llm.max_requests_per_second, "Max requests per second (0 = no limit)");
    add_common(llm_run);

    // evaluate
    std::string gold_path, metrics_csv, labels_dir;
    std::vector<std::string> preds, audits;
    double zero_division = 0.0;
    int decimals = 2;
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold annotations");
    evaluate->add_option("--gold", gold_path, "Gold span annotations (JSONL)")->required();
    evaluate->add_option("--pred", preds, "[name=]matrix.csv (repeatable)");
    evaluate->add_option("--pred-audit", audits, "[name=]audit.jsonl (repeatable)");
    evaluate->add_option("--out-csv", metrics_csv, "Macro metrics CSV");
    evaluate->add_option("--labels-dir", labels_dir, "Per-label metrics CSV per prediction");
    evaluate->add_option("--zero-division", zero_division, "Value of 0/0 ratios");
    evaluate->add_option("--decimals", decimals);
    add_common(evaluate);

    // report
    std::string matrix_path;
    auto* report = app.add_subcommand("report", "Per-label frequency report");
    report->add_option("--gold", gold_path, "Gold span annotations (JSONL)");
    report->add_option("--matrix", matrix_path, "Matrix CSV");
    report->add_option("--out", out_path, "Frequency CSV");
    add_common(report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "ERROR usage: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*ingest) {
            require_file(corpus_path, "corpus");
            auto notes = load_notes(corpus_path, common);
            write_notes_csv(out_path, notes, {common.id_column, common.text_column});
            std::cout << "notes=" << notes.size() << "\n";
        } else if (*train_emb) {
            auto notes = load_notes(corpus_path, common);
            auto streams = token_streams(notes);
            if (!no_phrases) streams = detect_phrases(streams, emb);
            TrainingReport stats;
            auto model = train_embeddings(streams, emb, common.seed, &stats);
            model.save(out_path);
            std::cout << "vocab=" << model.size() << " dim=" << model.dim() << "\n";
            for (std::size_t e = 0; e < stats.epoch_loss.size(); ++e) {
                std::cerr << "epoch " << e + 1 << " loss " << stats.epoch_loss[e] << "\n";
            }
        } else if (*expand) {
            require_file(lexicon_path, "lexicon");
            require_file(embeddings_path, "embeddings");
            auto lexicon = load_lexicon(lexicon_path);
            if (lexicon.active().empty()) {
                throw Error(ErrorKind::Validation, "lexicon has no seeds to expand from");
            }
            if (threshold_opt->count() > 0) lexicon.set_threshold(threshold);
            const auto model = EmbeddingModel::load(embeddings_path);
            const auto batch = generate_candidates(lexicon, model, limit_per_seed);
            for (const auto& warning : batch.warnings) std::cerr << "warning: " << warning << "\n";
            std::string lines;
            for (const auto& c : batch.candidates) {
                nlohmann::ordered_json j;
                j["phrase"] = c.phrase;
                j["label"] = label_name(c.label);
                j["similarity"] = c.similarity;
                j["nearest_seed"] = c.nearest_seed;
                lines += j.dump() + "\n";
            }
            write_text(out_path, lines);
            std::cout << "candidates=" << batch.candidates.size() << "\n";
        } else if (*serve) {
            require_file(lexicon_path, "lexicon");
            require_file(embeddings_path, "embeddings");
            auto notes = load_notes(corpus_path, common);
            ReviewOptions options;
            options.lexicon_path = lexicon_path;
            options.limit_per_seed = limit_per_seed;
            if (!static_dir.empty()) options.static_dir = fs::path(static_dir);
            ReviewService service(load_lexicon(lexicon_path), EmbeddingModel::load(embeddings_path),
                                  std::move(notes), options);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "serving on http://" << host << ":" << port << "\n";
            service.listen(host, port);
            g_service = nullptr;
        } else if (*match) {
            negation.validate();
            auto notes = load_notes(corpus_path, common);
            const PhraseMatcher matcher(load_nonempty_lexicon(lexicon_path), negation);
            const auto analyses = analyze_corpus(matcher, notes, common.workers);
            std::vector<std::size_t> order(notes.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](auto a, auto b) {
                return notes[a].note_id < notes[b].note_id;
            });
            PhenotypeMatrix matrix;
            std::string dump;
            for (auto i : order) {
                matrix.add_row(notes[i].note_id, analyses[i].labels);
                for (const auto& m : analyses[i].matches) dump += match_to_json_line(m) + "\n";
            }
            matrix.save_csv(out_path);
            if (!matches_out.empty()) write_text(matches_out, dump);
            std::cout << "notes=" << notes.size() << " positives=" << matrix.ones() << "\n";
        } else if (*train_cls) {
            params.seed = common.seed;
            auto notes = load_notes(corpus_path, common);
            const auto lexicon = load_nonempty_lexicon(lexicon_path);
            const auto model = train_pu(notes, lexicon, params, common.workers);
            save_model(model, out_path);
            for (auto label : kAllLabels) {
                const auto& m = model.labels[ordinal(label)];
                std::cerr << label_name(label) << ": "
                          << (m.trained ? "trained" : "untrained") << " positives=" << m.positives
                          << " negatives=" << m.negatives << "\n";
            }
        } else if (*predict_cmd) {
            auto notes = load_notes(corpus_path, common);
            const auto lexicon = load_nonempty_lexicon(lexicon_path);
            const auto model = load_model(model_path);
            const FeatureSpace space(lexicon);
            if (space.keys() != model.feature_keys) {
                throw Error(ErrorKind::Validation,
                            "lexicon active simclins differ from the ones the model was trained with");
            }
            const PhraseMatcher matcher(lexicon, model.params.negation);
            const auto analyses = analyze_corpus(matcher, notes, common.workers);
            std::vector<Prediction> predictions(notes.size());
            for (std::size_t i = 0; i < notes.size(); ++i) {
                predictions[i] = predict_features(model, space.featurize(analyses[i]));
            }
            std::vector<std::size_t> order(notes.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](auto a, auto b) {
                return notes[a].note_id < notes[b].note_id;
            });
            PhenotypeMatrix matrix;
            std::string margins = "note_id";
            for (auto label : kAllLabels) margins += "," + std::string(label_name(label));
            margins += "\n";
            for (auto i : order) {
                matrix.add_row(notes[i].note_id, predictions[i].present);
                margins += csv_escape(notes[i].note_id);
                for (double m : predictions[i].margins) {
                    nlohmann::json value = m;
                    margins += "," + (std::isinf(m) ? std::string("-inf") : value.dump());
                }
                margins += "\n";
            }
            matrix.save_csv(out_path);
            if (!margins_out.empty()) write_text(margins_out, margins);
            std::cout << "notes=" << notes.size() << " positives=" << matrix.ones() << "\n";
        } else if (*llm_run) {
            llm.session_mode = parse_session_mode(session_mode);
            llm.seed = common.seed;
            auto notes = load_notes(corpus_path, common);
            ChatClient client(llm);
            AuditLog audit(audit_path);
            const auto result = run_llm(notes, client, &audit);
            result.matrix.save_csv(out_path);
            for (const auto& failure : result.failed) std::cerr << "failed: " << failure << "\n";
            std::cout << "notes=" << notes.size() << " failed=" << result.failed.size() << "\n";
        } else if (*evaluate) {
            if (preds.empty() && audits.empty()) {
                throw Error(ErrorKind::Config, "evaluate needs at least one --pred or --pred-audit");
            }
            const auto gold_set = load_annotations(gold_path);
            const auto gold = spans_to_matrix(gold_set.spans, gold_set.note_ids);
            std::vector<std::pair<std::string, MetricsReport>> rows;
            auto score_matrix = [&](const std::string& name, const PhenotypeMatrix& pred) {
                const auto aligned = select_rows(pred, gold.note_ids(), name);
                rows.emplace_back(name, metrics(confusion(gold, aligned), zero_division));
            };
            for (const auto& spec : preds) {
                auto [name, path] = split_named(spec);
                score_matrix(name, PhenotypeMatrix::load_csv(path));
            }
            for (const auto& spec : audits) {
                auto [name, path] = split_named(spec);
                score_matrix(name, matrix_from_audit(read_audit_log(path)));
            }
            std::cout << render_metrics_table(rows, decimals);
            if (!metrics_csv.empty()) write_text(metrics_csv, render_metrics_csv(rows));
            if (!labels_dir.empty()) {
                fs::create_directories(labels_dir);
                for (const auto& [name, r] : rows) {
                    write_text(fs::path(labels_dir) / (name + ".csv"), render_label_metrics_csv(r));
                }
            }
        } else if (*report) {
            if (gold_path.empty() == matrix_path.empty()) {
                throw Error(ErrorKind::Config, "report needs exactly one of --gold or --matrix");
            }
            PhenotypeMatrix matrix;
            if (!gold_path.empty()) {
                const auto gold_set = load_annotations(gold_path);
                matrix = spans_to_matrix(gold_set.spans, gold_set.note_ids);
            } else {
                matrix = PhenotypeMatrix::load_csv(matrix_path);
            }
            const auto rows = frequency_report(matrix);
            if (!out_path.empty()) write_text(out_path, render_frequency_csv(rows));
            std::cout << render_frequency_chart(rows);
        }
    } catch (const Error& e) {
        std::cerr << "ERROR " << e.code() << ": " << e.what() << "\n";
        return e.is_validation() ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "ERROR runtime: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
