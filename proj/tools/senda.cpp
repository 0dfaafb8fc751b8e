// senda: domain adaptation toolkit for sentence embeddings.
//
// Pipeline subcommands: corpus prep, hard-negative generation, contrastive
// adaptation, evaluation, translation filtering, analysis and plot export.
// Every run writes its resolved configuration next to its primary output so
// results can be reproduced byte for byte.
//
// Exit codes: 0 success, 1 computational error, 2 input/format error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "senda/adapter.hpp"
#include "senda/analysis.hpp"
#include "senda/benchfilter.hpp"
#include "senda/contrastive.hpp"
#include "senda/corpus.hpp"
#include "senda/encoder.hpp"
#include "senda/metrics.hpp"
#include "senda/negativegen.hpp"
#include "senda/negatives_file.hpp"
#include "senda/toy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_out_dir;  // global --out-dir; relative output paths land here

std::string out_path(const std::string& path) {
    if (path.empty()) return path;
    const std::string resolved = (g_out_dir.empty() || fs::path(path).is_absolute())
                                     ? path
                                     : (fs::path(g_out_dir) / path).string();
    const auto parent = fs::path(resolved).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    return resolved;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw senda::ParseError("cannot write " + path);
    out << text;
}

/// Resolved-config sidecar: `<primary output>.run.json`.
void write_sidecar(const std::string& primary_output, const std::string& command,
                   const json& options) {
    json run;
    run["command"] = command;
    run["options"] = options;
    write_text(primary_output + ".run.json", run.dump(2) + "\n");
}

senda::Corpus load_corpus_or_die(const std::string& path, const std::string& domain) {
    auto loaded = senda::load_tagged_corpus(path, domain);
    if (loaded.unknown_tag_count > 0)
        std::cerr << "warning: " << loaded.unknown_tag_count
                  << " unknown POS tag(s) mapped to X in " << path << "\n";
    return std::move(loaded.corpus);
}

// Embedding source: either a trained checkpoint or a precomputed table.
struct EmbeddingSource {
    std::optional<senda::ToyEncoder> model;
    std::optional<senda::EmbeddingTable> table;

    senda::Embedding operator()(const senda::TaggedSentence& sent) const {
        if (model) return model->encode(sent);
        const senda::Embedding* e = table->lookup(sent.id);
        if (!e)
            throw senda::ParseError("no precomputed embedding for sentence id " + sent.id);
        return *e;
    }
};

EmbeddingSource open_embeddings(const std::string& model_path, const std::string& table_path) {
    EmbeddingSource src;
    if (!model_path.empty())
        src.model = senda::load_encoder(model_path);
    else
        src.table = senda::load_embeddings_tsv(table_path);
    return src;
}

// ---------------------------------------------------------------------------
// corpus stats | clean | freq
// ---------------------------------------------------------------------------

struct CorpusOpts {
    std::string in;
    std::string out;
    std::string domain = "default";
    std::string format = "json";
    std::size_t min_len = 5;
    std::size_t top_k = 20;
};

void run_corpus_stats(CorpusOpts o) {
    o.out = out_path(o.out);
    auto loaded = senda::load_tagged_corpus(o.in, o.domain);
    auto s = senda::stats(loaded.corpus);
    json config{{"in", o.in}, {"domain", o.domain}, {"format", o.format}};
    std::string text;
    if (o.format == "tsv") {
        text = "# config " + config.dump() + "\n";
        text += "n_sentences\t" + std::to_string(s.n_sentences) + "\n";
        text += "avg_tokens\t" + fmt_double(s.avg_tokens) + "\n";
        text += "n_unique_tokens\t" + std::to_string(s.n_unique_tokens) + "\n";
        text += "unknown_pos_tags\t" + std::to_string(loaded.unknown_tag_count) + "\n";
    } else {
        json report{{"config", config},
                    {"domain_tag", loaded.corpus.domain_tag},
                    {"n_sentences", s.n_sentences},
                    {"avg_tokens", s.avg_tokens},
                    {"n_unique_tokens", s.n_unique_tokens},
                    {"unknown_pos_tags", loaded.unknown_tag_count}};
        text = report.dump(2) + "\n";
    }
    if (o.out.empty()) {
        std::cout << text;
    } else {
        write_text(o.out, text);
        write_sidecar(o.out, "corpus stats", config);
    }
}

void run_corpus_clean(CorpusOpts o) {
    o.out = out_path(o.out);
    auto corpus = load_corpus_or_die(o.in, o.domain);
    auto cleaned = senda::clean(corpus, o.min_len);
    senda::save_tagged_corpus(o.out, cleaned);
    std::cerr << "kept " << cleaned.size() << " of " << corpus.size() << " sentences\n";
    write_sidecar(o.out, "corpus clean",
                  json{{"in", o.in}, {"out", o.out}, {"domain", o.domain}, {"min_len", o.min_len}});
}

void run_corpus_freq(CorpusOpts o) {
    o.out = out_path(o.out);
    auto corpus = load_corpus_or_die(o.in, o.domain);
    auto freq = senda::term_frequencies(corpus, o.top_k);
    json config{{"in", o.in}, {"domain", o.domain}, {"top_k", o.top_k}, {"format", o.format}};
    std::string text;
    if (o.format == "tsv") {
        text = "# config " + config.dump() + "\n";
        for (const auto& [w, n] : freq) text += w + "\t" + std::to_string(n) + "\n";
    } else {
        json arr = json::array();
        for (const auto& [w, n] : freq) arr.push_back({{"surface", w}, {"count", n}});
        text = json{{"config", config}, {"terms", arr}}.dump(2) + "\n";
    }
    if (o.out.empty()) {
        std::cout << text;
    } else {
        write_text(o.out, text);
        write_sidecar(o.out, "corpus freq", config);
    }
}

// ---------------------------------------------------------------------------
// generate negatives | corruption
// ---------------------------------------------------------------------------

struct GenerateOpts {
    std::string in;
    std::string out;
    std::string stats_out;
    std::string adapter_cmd;
    std::string adapter_url;
    std::size_t order = 3;
    double smoothing = 0.1;
    std::size_t beam_k = 8;
    std::size_t per_anchor = 2;
    double mask_rate = 0.15;
    double mean_span = 3.0;
    long timeout_ms = 30000;
    bool skip_failures = false;
    std::uint64_t seed = 0;
};

void run_generate_negatives(GenerateOpts o) {
    o.out = out_path(o.out);
    auto corpus = load_corpus_or_die(o.in, "generate");

    std::unique_ptr<senda::GeneratorAdapter> adapter;
    if (!o.adapter_cmd.empty())
        adapter = std::make_unique<senda::ProcessAdapter>(o.adapter_cmd,
                                                          std::chrono::milliseconds(o.timeout_ms));
    else if (!o.adapter_url.empty())
        adapter = std::make_unique<senda::HttpAdapter>(o.adapter_url,
                                                       std::chrono::milliseconds(o.timeout_ms));

    senda::NGramLM lm;
    if (!adapter) lm = senda::train_ngram_lm(corpus, o.order, o.smoothing);

    std::vector<senda::AnchorNegatives> all;
    std::size_t failures = 0;
    for (const auto& sent : corpus.sentences) {
        try {
            auto spans = senda::extract_noun_spans(sent);
            auto tmpl = senda::mask_spans(sent, spans);
            std::vector<senda::FillCandidate> cands;
            if (adapter)
                cands = senda::external_generate(tmpl, *adapter, o.per_anchor, sent.id);
            else
                cands = senda::beam_fill(tmpl, lm, o.beam_k, o.per_anchor);
            senda::AnchorNegatives rec;
            rec.anchor_id = sent.id;
            for (const auto& c : cands)
                rec.negatives.push_back({senda::assemble(tmpl, c), c.score});
            all.push_back(std::move(rec));
        } catch (const std::exception& e) {
            ++failures;
            std::cerr << "anchor " << sent.id << ": " << e.what() << "\n";
            if (!o.skip_failures) throw;
        }
    }
    senda::save_negatives(o.out, all);
    if (failures > 0)
        std::cerr << failures << " anchor(s) skipped; negatives file is partial\n";
    write_sidecar(o.out, "generate negatives",
                  json{{"in", o.in},
                       {"out", o.out},
                       {"order", o.order},
                       {"smoothing", o.smoothing},
                       {"beam_k", o.beam_k},
                       {"per_anchor", o.per_anchor},
                       {"adapter_cmd", o.adapter_cmd},
                       {"adapter_url", o.adapter_url},
                       {"timeout_ms", o.timeout_ms},
                       {"skip_failures", o.skip_failures}});
}

void run_generate_corruption(GenerateOpts o) {
    o.out = out_path(o.out);
    o.stats_out = out_path(o.stats_out);
    auto corpus = load_corpus_or_die(o.in, "generate");
    senda::SpanCorruptionConfig cfg{o.mask_rate, o.mean_span};
    senda::Rng rng(o.seed);

    auto items_to_json = [](const std::vector<senda::SeqItem>& items) {
        json arr = json::array();
        for (const auto& item : items) {
            if (const auto* tok = std::get_if<senda::Token>(&item))
                arr.push_back(tok->surface);
            else
                arr.push_back({{"sentinel", std::get<senda::Sentinel>(item).id}});
        }
        return arr;
    };

    std::ostringstream lines;
    std::size_t total_tokens = 0, masked_tokens = 0, spans = 0, skipped = 0;
    for (const auto& sent : corpus.sentences) {
        if (sent.size() < 2) {
            ++skipped;
            continue;
        }
        auto ex = senda::span_corruption(sent, cfg, rng);
        total_tokens += sent.size();
        for (const auto& sp : ex.spans) masked_tokens += sp.length();
        spans += ex.spans.size();
        json row{{"id", sent.id},
                 {"corrupted", items_to_json(ex.corrupted)},
                 {"target", items_to_json(ex.target)}};
        lines << row.dump() << "\n";
    }
    write_text(o.out, lines.str());
    if (skipped > 0) std::cerr << skipped << " sentence(s) shorter than 2 tokens skipped\n";

    json config{{"in", o.in},         {"out", o.out},   {"mask_rate", o.mask_rate},
                {"mean_span", o.mean_span}, {"seed", o.seed}, {"stats_out", o.stats_out}};
    if (!o.stats_out.empty()) {
        json stats{{"config", config},
                   {"sentences", corpus.size() - skipped},
                   {"total_tokens", total_tokens},
                   {"masked_tokens", masked_tokens},
                   {"spans", spans},
                   {"masked_fraction",
                    total_tokens ? static_cast<double>(masked_tokens) / static_cast<double>(total_tokens)
                                 : 0.0},
                   {"mean_span_length",
                    spans ? static_cast<double>(masked_tokens) / static_cast<double>(spans) : 0.0}};
        write_text(o.stats_out, stats.dump(2) + "\n");
    }
    write_sidecar(o.out, "generate corruption", config);
}

// ---------------------------------------------------------------------------
// adapt
// ---------------------------------------------------------------------------

struct AdaptOpts {
    std::string corpus;
    std::string negatives;
    std::string out_model;
    std::string init_model;
    std::string trace;
    int width = 32;
    double dropout = 0.1;
    std::size_t steps = 500;
    std::size_t batch_size = 16;
    double learning_rate = 0.05;
    double tau = 0.05;
    double alpha = 1.0;
    std::uint64_t seed = 0;
};

void run_adapt(AdaptOpts o) {
    o.out_model = out_path(o.out_model);
    o.trace = out_path(o.trace);
    auto corpus = load_corpus_or_die(o.corpus, "adapt");
    auto negative_records = senda::load_negatives(o.negatives);

    std::unordered_map<std::string, std::vector<senda::TaggedSentence>> negatives;
    for (auto& rec : negative_records) {
        auto& list = negatives[rec.anchor_id];
        for (auto& neg : rec.negatives) list.push_back(std::move(neg.sentence));
    }

    senda::ToyEncoder model;
    if (!o.init_model.empty()) {
        model = senda::load_encoder(o.init_model);
    } else {
        // Vocabulary covers anchors and generated negatives.
        senda::Corpus vocab_corpus = corpus;
        for (const auto& [id, list] : negatives)
            for (const auto& neg : list) vocab_corpus.sentences.push_back(neg);
        model = senda::init_encoder(vocab_corpus, o.width, o.seed, o.dropout);
    }

    senda::TrainConfig cfg;
    cfg.learning_rate = o.learning_rate;
    cfg.steps = o.steps;
    cfg.batch_size = o.batch_size;
    cfg.seed = o.seed;
    cfg.loss.tau = o.tau;
    cfg.loss.alpha = o.alpha;

    auto result = senda::adapt(model, corpus, negatives, cfg);
    senda::save_encoder(o.out_model, result.model);

    if (!o.trace.empty()) {
        std::string csv = "step,loss\n";
        for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
            csv += std::to_string(i) + "," + fmt_double(result.loss_trace[i]) + "\n";
        write_text(o.trace, csv);
    }
    write_sidecar(o.out_model, "adapt",
                  json{{"corpus", o.corpus},
                       {"negatives", o.negatives},
                       {"out_model", o.out_model},
                       {"init_model", o.init_model},
                       {"trace", o.trace},
                       {"width", o.width},
                       {"dropout", o.dropout},
                       {"steps", o.steps},
                       {"batch_size", o.batch_size},
                       {"learning_rate", o.learning_rate},
                       {"tau", o.tau},
                       {"alpha", o.alpha},
                       {"seed", o.seed}});
}

// ---------------------------------------------------------------------------
// eval sts | ir | probe
// ---------------------------------------------------------------------------

struct EvalOpts {
    std::string corpus;
    std::string pairs;
    std::string queries;
    std::string model;
    std::string embeddings;
    std::string report;
    std::vector<std::size_t> p_at = {1, 5};
};

void run_eval_sts(EvalOpts o) {
    o.report = out_path(o.report);
    auto corpus = load_corpus_or_die(o.corpus, "eval");
    auto pairs = senda::load_sts_tsv(o.pairs, corpus);
    auto embed = open_embeddings(o.model, o.embeddings);

    std::vector<double> pred, gold;
    json per_pair = json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double p = senda::cosine(embed(pairs[i].sentence_a), embed(pairs[i].sentence_b));
        pred.push_back(p);
        gold.push_back(pairs[i].gold);
        per_pair.push_back({{"a_id", pairs[i].sentence_a.id},
                            {"b_id", pairs[i].sentence_b.id},
                            {"pred", p},
                            {"gold", pairs[i].gold}});
    }
    const double rho = senda::spearman_all(pred, gold);
    json config{{"corpus", o.corpus}, {"pairs", o.pairs}, {"model", o.model},
                {"embeddings", o.embeddings}};
    json report{{"config", config},
                {"metric", "spearman_all"},
                {"spearman_all", rho},
                {"n_pairs", pairs.size()},
                {"per_pair", per_pair}};
    write_text(o.report, report.dump(2) + "\n");
    write_sidecar(o.report, "eval sts", config);
    std::cout << "spearman_all " << fmt_double(rho) << " over " << pairs.size() << " pairs\n";
}

void run_eval_ir(EvalOpts o) {
    o.report = out_path(o.report);
    auto corpus = load_corpus_or_die(o.corpus, "eval");
    auto records = senda::load_retrieval_json(o.queries, corpus);
    auto embed = open_embeddings(o.model, o.embeddings);

    std::vector<senda::RankedRelevance> ranked;
    ranked.reserve(records.size());
    for (const auto& rec : records)
        ranked.push_back(senda::rank_record(rec, [&](const senda::TaggedSentence& s) { return embed(s); }));

    const auto rr = senda::reciprocal_ranks(ranked);
    const auto ap = senda::average_precisions(ranked);
    json per_query = json::array();
    for (std::size_t q = 0; q < records.size(); ++q) {
        json row{{"query_id", records[q].query.id},
                 {"reciprocal_rank", rr[q]},
                 {"average_precision", ap[q]}};
        for (std::size_t n : o.p_at)
            row["p_at_" + std::to_string(n)] = senda::precisions_at_n({ranked[q]}, n)[0];
        per_query.push_back(std::move(row));
    }

    json config{{"corpus", o.corpus}, {"queries", o.queries}, {"model", o.model},
                {"embeddings", o.embeddings}, {"p_at", o.p_at}};
    json report{{"config", config},
                {"mrr", senda::mean_of(rr)},
                {"map", senda::mean_of(ap)},
                {"n_queries", records.size()},
                {"per_query", per_query}};
    for (std::size_t n : o.p_at)
        report["p_at_" + std::to_string(n)] = senda::precision_at_n(ranked, n);
    write_text(o.report, report.dump(2) + "\n");
    write_sidecar(o.report, "eval ir", config);
    std::cout << "mrr " << fmt_double(report["mrr"].get<double>()) << " map "
              << fmt_double(report["map"].get<double>()) << " over " << records.size()
              << " queries\n";
}

void run_eval_probe(EvalOpts o) {
    o.report = out_path(o.report);
    auto corpus = load_corpus_or_die(o.corpus, "eval");
    auto pairs = senda::load_sts_tsv(o.pairs, corpus);
    auto embed = open_embeddings(o.model, o.embeddings);

    // Pair features: |a-b| concatenated with a*b, the usual frozen-embedding
    // similarity probe design.
    std::vector<Eigen::VectorXd> features;
    std::vector<double> gold;
    for (const auto& pair : pairs) {
        const senda::Embedding a = embed(pair.sentence_a);
        const senda::Embedding b = embed(pair.sentence_b);
        Eigen::VectorXd f(a.size() * 2);
        f.head(a.size()) = (a - b).cwiseAbs();
        f.tail(a.size()) = a.cwiseProduct(b);
        features.push_back(std::move(f));
        gold.push_back(pair.gold);
    }
    auto fit = senda::linreg_probe(features, gold);

    json config{{"corpus", o.corpus}, {"pairs", o.pairs}, {"model", o.model},
                {"embeddings", o.embeddings}};
    json report{{"config", config},
                {"mae", fit.metrics.mae},
                {"mse", fit.metrics.mse},
                {"r2", fit.metrics.r2},
                {"n_pairs", pairs.size()},
                {"weights", std::vector<double>(fit.weights.data(),
                                                fit.weights.data() + fit.weights.size())}};
    write_text(o.report, report.dump(2) + "\n");
    write_sidecar(o.report, "eval probe", config);
    std::cout << "mae " << fmt_double(fit.metrics.mae) << " mse " << fmt_double(fit.metrics.mse)
              << " r2 " << fmt_double(fit.metrics.r2) << "\n";
}

// ---------------------------------------------------------------------------
// filter-translations
// ---------------------------------------------------------------------------

struct FilterOpts {
    std::string in;
    std::string format = "auto";
    std::string kept;
    std::string discarded;
    std::string report;
    double threshold = 0.0;
};

void run_filter(FilterOpts o) {
    o.kept = out_path(o.kept);
    o.discarded = out_path(o.discarded);
    o.report = out_path(o.report);
    std::ifstream in(o.in);
    if (!in) throw senda::ParseError("cannot open triples file: " + o.in);
    std::string format = o.format;
    if (format == "auto")
        format = o.in.ends_with(".jsonl") || o.in.ends_with(".json") ? "jsonl" : "tsv";
    auto triples =
        format == "jsonl" ? senda::read_triples_jsonl(in) : senda::read_triples_tsv(in);

    auto outcome = senda::filter_triples(triples, o.threshold);

    std::ostringstream kept, discarded;
    senda::write_triples_tsv(kept, outcome.kept);
    senda::write_triples_tsv(discarded, outcome.discarded);
    write_text(o.kept, kept.str());
    write_text(o.discarded, discarded.str());

    json config{{"in", o.in},   {"format", format},       {"threshold", o.threshold},
                {"kept", o.kept}, {"discarded", o.discarded}, {"report", o.report}};
    json report = senda::report_to_json(outcome.report);
    report["config"] = config;
    write_text(o.report, report.dump(2) + "\n");
    write_sidecar(o.report, "filter-translations", config);
    std::cout << "kept " << outcome.report.kept << " discarded " << outcome.report.discarded
              << " at threshold " << fmt_double(o.threshold) << "\n";
}

// ---------------------------------------------------------------------------
// analyze relevant-words | viz
// ---------------------------------------------------------------------------

struct AnalyzeOpts {
    std::string corpus;
    std::string pairs;
    std::string queries;
    std::string model;
    std::string embeddings;
    std::string out;
    std::string out_points;
    std::string out_segments;
    double min_score = 4.0;
    std::size_t sample_pairs = 100;
    std::size_t sample_irrelevant = 100;
    std::uint64_t seed = 0;
};

void run_relevant_words(AnalyzeOpts o) {
    o.out = out_path(o.out);
    auto corpus = load_corpus_or_die(o.corpus, "analyze");
    auto all_pairs = senda::load_sts_tsv(o.pairs, corpus);
    auto embed_src = open_embeddings(o.model, o.embeddings);
    senda::EmbedFn embed = [&](const senda::TaggedSentence& s) { return embed_src(s); };

    std::vector<std::pair<senda::TaggedSentence, senda::TaggedSentence>> pairs;
    for (const auto& pair : all_pairs)
        if (pair.gold >= o.min_score) pairs.emplace_back(pair.sentence_a, pair.sentence_b);
    if (pairs.empty()) throw std::domain_error("no pairs at or above --min-score");

    json words = json::array();
    for (const auto& [a, b] : pairs) {
        auto result = senda::relevant_word(a, b, embed);
        words.push_back({{"a_id", a.id},
                         {"b_id", b.id},
                         {"word", result.word},
                         {"pos", std::string(senda::to_string(result.pos))},
                         {"drop", result.drop}});
    }
    auto dist = senda::pos_distribution(pairs, embed);
    json dist_json = json::array();
    for (std::size_t i = 0; i < dist.tags.size(); ++i)
        dist_json.push_back({{"pos", std::string(senda::to_string(dist.tags[i]))},
                             {"count", dist.counts[i]},
                             {"fraction", dist.fractions[i]}});

    json config{{"corpus", o.corpus}, {"pairs", o.pairs},   {"model", o.model},
                {"embeddings", o.embeddings}, {"min_score", o.min_score}};
    json report{{"config", config},
                {"n_pairs", pairs.size()},
                {"words", words},
                {"pos_distribution", dist_json}};
    write_text(o.out, report.dump(2) + "\n");
    write_sidecar(o.out, "analyze relevant-words", config);
}

void run_viz(AnalyzeOpts o) {
    o.out_points = out_path(o.out_points);
    o.out_segments = out_path(o.out_segments);
    auto corpus = load_corpus_or_die(o.corpus, "analyze");
    auto embed = open_embeddings(o.model, o.embeddings);
    senda::Rng rng(o.seed);

    std::vector<senda::Embedding> embeddings;
    std::vector<senda::PointMeta> metas;

    if (!o.pairs.empty()) {
        auto all_pairs = senda::load_sts_tsv(o.pairs, corpus);
        std::vector<senda::STSPair> selected;
        for (const auto& pair : all_pairs)
            if (pair.gold >= o.min_score) selected.push_back(pair);
        if (selected.empty()) throw std::domain_error("no pairs at or above --min-score");
        if (selected.size() > o.sample_pairs) {
            rng.shuffle(selected);
            selected.resize(o.sample_pairs);
        }
        for (std::size_t g = 0; g < selected.size(); ++g) {
            embeddings.push_back(embed(selected[g].sentence_a));
            metas.push_back({selected[g].sentence_a.id, static_cast<int>(g), senda::PointKind::PairA});
            embeddings.push_back(embed(selected[g].sentence_b));
            metas.push_back({selected[g].sentence_b.id, static_cast<int>(g), senda::PointKind::PairB});
        }
    } else {
        auto records = senda::load_retrieval_json(o.queries, corpus);
        std::unordered_set<std::string> relevant_ids;
        for (std::size_t g = 0; g < records.size(); ++g) {
            embeddings.push_back(embed(records[g].query));
            metas.push_back({records[g].query.id, static_cast<int>(g), senda::PointKind::Query});
            relevant_ids.insert(records[g].query.id);
            for (std::size_t k = 0; k < records[g].questions.size(); ++k) {
                if (!records[g].relevance[k]) continue;
                embeddings.push_back(embed(records[g].questions[k]));
                metas.push_back({records[g].questions[k].id, static_cast<int>(g),
                                 senda::PointKind::RelevantQ});
                relevant_ids.insert(records[g].questions[k].id);
            }
        }
        // Irrelevant pool: questions never marked relevant anywhere.
        std::vector<const senda::TaggedSentence*> pool;
        std::unordered_set<std::string> pooled;
        for (const auto& rec : records)
            for (std::size_t k = 0; k < rec.questions.size(); ++k)
                if (!relevant_ids.count(rec.questions[k].id) &&
                    pooled.insert(rec.questions[k].id).second)
                    pool.push_back(&rec.questions[k]);
        rng.shuffle(pool);
        if (pool.size() > o.sample_irrelevant) pool.resize(o.sample_irrelevant);
        for (const auto* q : pool) {
            embeddings.push_back(embed(*q));
            metas.push_back({q->id, -1, senda::PointKind::IrrelevantQ});
        }
    }

    auto distances = senda::cosine_distance_matrix(embeddings);
    auto reduced = senda::reduce_2d(distances);
    if (reduced.clipped_eigenvalues > 0)
        std::cerr << "warning: " << reduced.clipped_eigenvalues
                  << " negative eigenvalue(s) clipped to zero\n";
    auto polar = senda::polar_export(reduced.coords, metas);

    std::ostringstream points, segments;
    senda::write_points_csv(points, polar);
    senda::write_segments_csv(segments, polar);
    write_text(o.out_points, points.str());
    write_text(o.out_segments, segments.str());

    json config{{"corpus", o.corpus},       {"pairs", o.pairs},
                {"queries", o.queries},     {"model", o.model},
                {"embeddings", o.embeddings}, {"min_score", o.min_score},
                {"sample_pairs", o.sample_pairs}, {"sample_irrelevant", o.sample_irrelevant},
                {"seed", o.seed},           {"out_points", o.out_points},
                {"out_segments", o.out_segments}};
    write_sidecar(o.out_points, "analyze viz", config);
}

// ---------------------------------------------------------------------------
// fixtures
// ---------------------------------------------------------------------------

void run_fixtures(std::string out_dir, std::uint64_t seed) {
    out_dir = out_path(out_dir);
    senda::ToyDomainConfig cfg;
    cfg.seed = seed;
    auto domain = senda::make_toy_domain(cfg);
    senda::write_toy_domain(out_dir, domain);
    write_sidecar((fs::path(out_dir) / "corpus.tsv").string(), "fixtures",
                  json{{"out_dir", out_dir}, {"seed", seed}});
    std::cerr << "wrote " << domain.corpus.size() << " sentences, "
              << domain.retrieval["queries"].size() << " queries, " << domain.sts.size()
              << " sts pairs to " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"domain adaptation toolkit for sentence embeddings"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from an INI file");
    app.add_option("--out-dir", g_out_dir, "directory for relative output paths");

    // corpus
    auto corpus_opts = std::make_shared<CorpusOpts>();
    auto* corpus_cmd = app.add_subcommand("corpus", "corpus cleaning and summaries");
    corpus_cmd->require_subcommand(1);
    auto* stats_cmd = corpus_cmd->add_subcommand("stats", "sentence/token statistics");
    stats_cmd->add_option("--in", corpus_opts->in, "tagged corpus")->required();
    stats_cmd->add_option("--out", corpus_opts->out, "output file (default stdout)");
    stats_cmd->add_option("--domain", corpus_opts->domain, "domain tag");
    stats_cmd->add_option("--format", corpus_opts->format)
        ->check(CLI::IsMember({"json", "tsv"}));
    stats_cmd->callback([corpus_opts] { run_corpus_stats(*corpus_opts); });

    auto* clean_cmd = corpus_cmd->add_subcommand("clean", "drop short and duplicate sentences");
    clean_cmd->add_option("--in", corpus_opts->in, "tagged corpus")->required();
    clean_cmd->add_option("--out", corpus_opts->out, "cleaned corpus")->required();
    clean_cmd->add_option("--min-len", corpus_opts->min_len, "minimum token count")
        ->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
    clean_cmd->add_option("--domain", corpus_opts->domain, "domain tag");
    clean_cmd->callback([corpus_opts] { run_corpus_clean(*corpus_opts); });

    auto* freq_cmd = corpus_cmd->add_subcommand("freq", "most frequent surface forms");
    freq_cmd->add_option("--in", corpus_opts->in, "tagged corpus")->required();
    freq_cmd->add_option("--out", corpus_opts->out, "output file (default stdout)");
    freq_cmd->add_option("--top-k", corpus_opts->top_k)->check(CLI::PositiveNumber);
    freq_cmd->add_option("--format", corpus_opts->format)->check(CLI::IsMember({"json", "tsv"}));
    freq_cmd->add_option("--domain", corpus_opts->domain, "domain tag");
    freq_cmd->callback([corpus_opts] { run_corpus_freq(*corpus_opts); });

    // generate
    auto gen_opts = std::make_shared<GenerateOpts>();
    auto* gen_cmd = app.add_subcommand("generate", "hard negatives and span corruption");
    gen_cmd->require_subcommand(1);
    auto* neg_cmd = gen_cmd->add_subcommand("negatives", "beam-search or external negatives");
    neg_cmd->add_option("--in", gen_opts->in, "tagged corpus")->required();
    neg_cmd->add_option("--out", gen_opts->out, "negatives JSONL")->required();
    neg_cmd->add_option("--order", gen_opts->order, "n-gram order")->check(CLI::PositiveNumber);
    neg_cmd->add_option("--smoothing", gen_opts->smoothing, "add-k smoothing")
        ->check(CLI::NonNegativeNumber);
    neg_cmd->add_option("--beam-k", gen_opts->beam_k, "beam width")->check(CLI::PositiveNumber);
    neg_cmd->add_option("--per-anchor", gen_opts->per_anchor, "negatives per anchor")
        ->check(CLI::PositiveNumber);
    auto* cmd_opt = neg_cmd->add_option("--adapter-cmd", gen_opts->adapter_cmd,
                                        "external generator command (line JSON protocol)");
    neg_cmd->add_option("--adapter-url", gen_opts->adapter_url, "external generator URL")
        ->excludes(cmd_opt)
        ->envname("SENDA_ADAPTER_URL");
    neg_cmd->add_option("--timeout-ms", gen_opts->timeout_ms, "adapter timeout")
        ->check(CLI::PositiveNumber);
    neg_cmd->add_flag("--skip-failures", gen_opts->skip_failures,
                      "skip anchors that fail and write a partial file");
    neg_cmd->callback([gen_opts] { run_generate_negatives(*gen_opts); });

    auto* corr_cmd = gen_cmd->add_subcommand("corruption", "span-corruption training pairs");
    corr_cmd->add_option("--in", gen_opts->in, "tagged corpus")->required();
    corr_cmd->add_option("--out", gen_opts->out, "corruption JSONL")->required();
    corr_cmd->add_option("--mask-rate", gen_opts->mask_rate)
        ->check(CLI::Range(1e-9, 0.999999));
    corr_cmd->add_option("--mean-span", gen_opts->mean_span)->check(CLI::Range(1.0, 1e6));
    corr_cmd->add_option("--stats-out", gen_opts->stats_out, "masking statistics JSON");
    corr_cmd->add_option("--seed", gen_opts->seed, "RNG seed");
    corr_cmd->callback([gen_opts] { run_generate_corruption(*gen_opts); });

    // adapt
    auto adapt_opts = std::make_shared<AdaptOpts>();
    auto* adapt_cmd = app.add_subcommand("adapt", "contrastive adaptation of the encoder");
    adapt_cmd->add_option("--corpus", adapt_opts->corpus, "anchor corpus")->required();
    adapt_cmd->add_option("--negatives", adapt_opts->negatives, "negatives JSONL")->required();
    adapt_cmd->add_option("--out-model", adapt_opts->out_model, "checkpoint to write")->required();
    adapt_cmd->add_option("--init-model", adapt_opts->init_model,
                          "start from this checkpoint instead of a fresh encoder");
    adapt_cmd->add_option("--trace", adapt_opts->trace, "per-step loss CSV");
    adapt_cmd->add_option("--width", adapt_opts->width, "embedding width")
        ->check(CLI::Range(2, 4096));
    adapt_cmd->add_option("--dropout", adapt_opts->dropout, "dropout rate for positives")
        ->check(CLI::Range(0.0, 0.999999));
    adapt_cmd->add_option("--steps", adapt_opts->steps, "SGD steps");
    adapt_cmd->add_option("--batch-size", adapt_opts->batch_size)
        ->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
    adapt_cmd->add_option("--lr", adapt_opts->learning_rate)->check(CLI::PositiveNumber);
    adapt_cmd->add_option("--tau", adapt_opts->tau, "temperature")->check(CLI::PositiveNumber);
    adapt_cmd->add_option("--alpha", adapt_opts->alpha, "hard-negative weight")
        ->check(CLI::NonNegativeNumber);
    adapt_cmd->add_option("--seed", adapt_opts->seed, "RNG seed");
    adapt_cmd->callback([adapt_opts] { run_adapt(*adapt_opts); });

    // eval
    auto eval_opts = std::make_shared<EvalOpts>();
    auto* eval_cmd = app.add_subcommand("eval", "similarity and retrieval evaluation");
    eval_cmd->require_subcommand(1);
    auto add_embed_opts = [&](CLI::App* cmd) {
        auto* model_opt = cmd->add_option("--model", eval_opts->model, "encoder checkpoint");
        cmd->add_option("--embeddings", eval_opts->embeddings,
                        "precomputed embeddings TSV (id + floats)")
            ->excludes(model_opt);
    };
    auto* sts_cmd = eval_cmd->add_subcommand("sts", "Spearman over an STS file");
    sts_cmd->add_option("--corpus", eval_opts->corpus)->required();
    sts_cmd->add_option("--pairs", eval_opts->pairs)->required();
    sts_cmd->add_option("--report", eval_opts->report)->required();
    add_embed_opts(sts_cmd);
    sts_cmd->callback([eval_opts] {
        if (eval_opts->model.empty() && eval_opts->embeddings.empty())
            throw CLI::RequiredError("--model or --embeddings");
        run_eval_sts(*eval_opts);
    });

    auto* ir_cmd = eval_cmd->add_subcommand("ir", "MRR/MAP/P@N over a retrieval file");
    ir_cmd->add_option("--corpus", eval_opts->corpus)->required();
    ir_cmd->add_option("--queries", eval_opts->queries)->required();
    ir_cmd->add_option("--report", eval_opts->report)->required();
    ir_cmd->add_option("--p-at", eval_opts->p_at, "precision cutoffs")->delimiter(',');
    add_embed_opts(ir_cmd);
    ir_cmd->callback([eval_opts] {
        if (eval_opts->model.empty() && eval_opts->embeddings.empty())
            throw CLI::RequiredError("--model or --embeddings");
        run_eval_ir(*eval_opts);
    });

    auto* probe_cmd = eval_cmd->add_subcommand("probe", "linear-regression probe on pair features");
    probe_cmd->add_option("--corpus", eval_opts->corpus)->required();
    probe_cmd->add_option("--pairs", eval_opts->pairs)->required();
    probe_cmd->add_option("--report", eval_opts->report)->required();
    add_embed_opts(probe_cmd);
    probe_cmd->callback([eval_opts] {
        if (eval_opts->model.empty() && eval_opts->embeddings.empty())
            throw CLI::RequiredError("--model or --embeddings");
        run_eval_probe(*eval_opts);
    });

    // filter-translations
    auto filter_opts = std::make_shared<FilterOpts>();
    auto* filter_cmd = app.add_subcommand("filter-translations",
                                          "drop low-quality translations by back-translation score");
    filter_cmd->add_option("--in", filter_opts->in, "triples TSV or JSONL")->required();
    filter_cmd->add_option("--format", filter_opts->format)
        ->check(CLI::IsMember({"auto", "tsv", "jsonl"}));
    filter_cmd->add_option("--threshold", filter_opts->threshold)
        ->check(CLI::Range(0.0, 0.999999));
    filter_cmd->add_option("--kept", filter_opts->kept, "kept triples TSV")->required();
    filter_cmd->add_option("--discarded", filter_opts->discarded, "discarded triples TSV")
        ->required();
    filter_cmd->add_option("--report", filter_opts->report, "filter report JSON")->required();
    filter_cmd->callback([filter_opts] { run_filter(*filter_opts); });

    // analyze
    auto analyze_opts = std::make_shared<AnalyzeOpts>();
    auto* analyze_cmd = app.add_subcommand("analyze", "relevant words and plot data");
    analyze_cmd->require_subcommand(1);
    auto* words_cmd = analyze_cmd->add_subcommand("relevant-words",
                                                  "words whose deletion most reduces similarity");
    words_cmd->add_option("--corpus", analyze_opts->corpus)->required();
    words_cmd->add_option("--pairs", analyze_opts->pairs)->required();
    words_cmd->add_option("--out", analyze_opts->out)->required();
    words_cmd->add_option("--min-score", analyze_opts->min_score, "gold score cutoff");
    auto* words_model = words_cmd->add_option("--model", analyze_opts->model);
    words_cmd->add_option("--embeddings", analyze_opts->embeddings)->excludes(words_model);
    words_cmd->callback([analyze_opts] {
        if (analyze_opts->model.empty() && analyze_opts->embeddings.empty())
            throw CLI::RequiredError("--model or --embeddings");
        run_relevant_words(*analyze_opts);
    });

    auto* viz_cmd = analyze_cmd->add_subcommand("viz", "polar plot data for pairs or queries");
    viz_cmd->add_option("--corpus", analyze_opts->corpus)->required();
    auto* pairs_opt = viz_cmd->add_option("--pairs", analyze_opts->pairs, "STS pairs mode");
    viz_cmd->add_option("--queries", analyze_opts->queries, "retrieval mode")->excludes(pairs_opt);
    viz_cmd->add_option("--out-points", analyze_opts->out_points)->required();
    viz_cmd->add_option("--out-segments", analyze_opts->out_segments)->required();
    viz_cmd->add_option("--min-score", analyze_opts->min_score);
    viz_cmd->add_option("--sample-pairs", analyze_opts->sample_pairs);
    viz_cmd->add_option("--sample-irrelevant", analyze_opts->sample_irrelevant);
    viz_cmd->add_option("--seed", analyze_opts->seed, "sampling seed");
    auto* viz_model = viz_cmd->add_option("--model", analyze_opts->model);
    viz_cmd->add_option("--embeddings", analyze_opts->embeddings)->excludes(viz_model);
    viz_cmd->callback([analyze_opts] {
        if (analyze_opts->model.empty() && analyze_opts->embeddings.empty())
            throw CLI::RequiredError("--model or --embeddings");
        if (analyze_opts->pairs.empty() && analyze_opts->queries.empty())
            throw CLI::RequiredError("--pairs or --queries");
        run_viz(*analyze_opts);
    });

    // fixtures
    auto fixtures_dir = std::make_shared<std::string>();
    auto fixtures_seed = std::make_shared<std::uint64_t>(7);
    auto* fixtures_cmd = app.add_subcommand("fixtures", "regenerate the bundled toy domain");
    fixtures_cmd->add_option("--out-dir", *fixtures_dir)->required();
    fixtures_cmd->add_option("--seed", *fixtures_seed);
    fixtures_cmd->callback([fixtures_dir, fixtures_seed] {
        run_fixtures(*fixtures_dir, *fixtures_seed);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e);
        app.exit(e);
        return 2;
    } catch (const senda::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
