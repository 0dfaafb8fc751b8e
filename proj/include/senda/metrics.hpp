#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "senda/corpus.hpp"
#include "senda/encoder.hpp"
#include "senda/errors.hpp"

namespace senda {

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

/// Average fractional ranks with ties averaged.
inline std::vector<double> fractional_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::domain_error("correlation undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}

/// Spearman's rank correlation over all pairs at once (the "all" setting).
inline double spearman_all(const std::vector<double>& pred, const std::vector<double>& gold) {
    if (pred.size() != gold.size() || pred.size() < 2)
        throw std::invalid_argument("spearman_all: need two equally sized lists of length >= 2");
    return pearson(fractional_ranks(pred), fractional_ranks(gold));
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

/// Indices of questions sorted by descending cosine to the query; equal
/// cosines keep ascending index order.
inline std::vector<std::size_t> rank_by_cosine(const Embedding& query,
                                               const std::vector<Embedding>& questions) {
    std::vector<double> sims(questions.size());
    for (std::size_t i = 0; i < questions.size(); ++i) sims[i] = cosine(query, questions[i]);
    std::vector<std::size_t> order(questions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    return order;
}

using RankedRelevance = std::vector<char>;  // 1 = relevant, in ranked order

inline void require_relevant(const RankedRelevance& ranked) {
    if (std::find(ranked.begin(), ranked.end(), 1) == ranked.end())
        throw std::domain_error("ranking metric: query with no relevant item");
}

inline std::vector<double> reciprocal_ranks(const std::vector<RankedRelevance>& results) {
    std::vector<double> out;
    out.reserve(results.size());
    for (const auto& ranked : results) {
        require_relevant(ranked);
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            if (ranked[r]) {
                out.push_back(1.0 / static_cast<double>(r + 1));
                break;
            }
        }
    }
    return out;
}

inline std::vector<double> average_precisions(const std::vector<RankedRelevance>& results) {
    std::vector<double> out;
    out.reserve(results.size());
    for (const auto& ranked : results) {
        require_relevant(ranked);
        double hits = 0.0, sum = 0.0;
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            if (!ranked[r]) continue;
            hits += 1.0;
            sum += hits / static_cast<double>(r + 1);
        }
        out.push_back(sum / hits);
    }
    return out;
}

inline std::vector<double> precisions_at_n(const std::vector<RankedRelevance>& results,
                                           std::size_t n) {
    if (n < 1) throw std::invalid_argument("precision_at_n: n must be >= 1");
    std::vector<double> out;
    out.reserve(results.size());
    for (const auto& ranked : results) {
        const std::size_t basis = std::min(n, ranked.size());
        if (basis == 0) throw std::invalid_argument("precision_at_n: empty ranking");
        std::size_t hits = 0;
        for (std::size_t r = 0; r < basis; ++r) hits += ranked[r] ? 1 : 0;
        out.push_back(static_cast<double>(hits) / static_cast<double>(basis));
    }
    return out;
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean of empty list");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double mrr(const std::vector<RankedRelevance>& results) {
    return mean_of(reciprocal_ranks(results));
}

inline double mean_average_precision(const std::vector<RankedRelevance>& results) {
    return mean_of(average_precisions(results));
}

inline double precision_at_n(const std::vector<RankedRelevance>& results, std::size_t n) {
    return mean_of(precisions_at_n(results, n));
}

// ---------------------------------------------------------------------------
// Linear-regression probe
// ---------------------------------------------------------------------------

struct ProbeResult {
    double mae = 0.0;
    double mse = 0.0;
    double r2 = 0.0;
};

struct LinregFit {
    Eigen::VectorXd weights;  // feature weights, intercept last
    ProbeResult metrics;
};

/// Ridge-stabilized least squares (lambda = 1e-6) by normal equations;
/// MAE/MSE/R2 are reported on the fitted predictions.
inline LinregFit linreg_probe(const std::vector<Eigen::VectorXd>& features,
                              const std::vector<double>& gold, double lambda = 1e-6) {
    if (features.size() != gold.size() || features.size() < 2)
        throw std::invalid_argument("linreg_probe: need >= 2 aligned samples");
    const auto n = static_cast<Eigen::Index>(features.size());
    const Eigen::Index dim = features[0].size();
    for (const auto& f : features)
        if (f.size() != dim) throw std::invalid_argument("linreg_probe: ragged features");

    Eigen::MatrixXd design(n, dim + 1);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        design.row(i).head(dim) = features[static_cast<std::size_t>(i)].transpose();
        design(i, dim) = 1.0;
        y[i] = gold[static_cast<std::size_t>(i)];
    }

    const Eigen::MatrixXd gram =
        design.transpose() * design +
        lambda * Eigen::MatrixXd::Identity(dim + 1, dim + 1);
    LinregFit fit;
    fit.weights = gram.ldlt().solve(design.transpose() * y);

    const Eigen::VectorXd pred = design * fit.weights;
    const Eigen::VectorXd residual = y - pred;
    fit.metrics.mae = residual.cwiseAbs().mean();
    fit.metrics.mse = residual.squaredNorm() / static_cast<double>(n);

    const double mean_y = y.mean();
    const double ss_tot = (y.array() - mean_y).square().sum();
    if (ss_tot == 0.0) throw std::domain_error("linreg_probe: constant gold scores");
    fit.metrics.r2 = 1.0 - residual.squaredNorm() / ss_tot;
    return fit;
}

// ---------------------------------------------------------------------------
// Evaluation file formats
// ---------------------------------------------------------------------------

struct STSPair {
    TaggedSentence sentence_a;
    TaggedSentence sentence_b;
    double gold = 0.0;
};

struct RetrievalRecord {
    TaggedSentence query;
    std::vector<TaggedSentence> questions;
    std::vector<char> relevance;  // aligned to questions
};

inline std::unordered_map<std::string, std::size_t> build_index(const Corpus& corpus) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i)
        index.emplace(corpus.sentences[i].id, i);
    return index;
}

// STS evaluation file: `id<TAB>score<TAB>sentence_a_id<TAB>sentence_b_id`,
// referencing a tagged corpus; `#` comments allowed.
inline std::vector<STSPair> read_sts_tsv(std::istream& in, const Corpus& corpus) {
    auto index = build_index(corpus);
    std::vector<STSPair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 4)
            throw ParseError("STS row needs id, score, sentence_a_id, sentence_b_id", line_no);
        STSPair pair;
        try {
            pair.gold = std::stod(fields[1]);
        } catch (const std::exception&) {
            throw ParseError("bad STS score \"" + fields[1] + "\"", line_no);
        }
        auto a = index.find(fields[2]);
        auto b = index.find(fields[3]);
        if (a == index.end() || b == index.end())
            throw ParseError("STS row references unknown sentence id", line_no);
        pair.sentence_a = corpus.sentences[a->second];
        pair.sentence_b = corpus.sentences[b->second];
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

inline std::vector<STSPair> load_sts_tsv(const std::string& path, const Corpus& corpus) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open STS file: " + path);
    return read_sts_tsv(in, corpus);
}

// Retrieval file: JSON object with a "queries" array; each query names its
// sentence id and a question list with binary relevance.
inline std::vector<RetrievalRecord> read_retrieval_json(std::istream& in, const Corpus& corpus) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("retrieval JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("queries"))
        throw ParseError("retrieval file needs a queries array");

    auto index = build_index(corpus);
    auto resolve = [&](const std::string& id) -> const TaggedSentence& {
        auto it = index.find(id);
        if (it == index.end()) throw ParseError("retrieval file references unknown sentence id " + id);
        return corpus.sentences[it->second];
    };

    std::vector<RetrievalRecord> records;
    for (const auto& q : j["queries"]) {
        RetrievalRecord rec;
        rec.query = resolve(q.at("query_sentence_id").get<std::string>());
        for (const auto& item : q.at("questions")) {
            rec.questions.push_back(resolve(item.at("sentence_id").get<std::string>()));
            rec.relevance.push_back(item.at("relevant").get<int>() ? 1 : 0);
        }
        if (std::find(rec.relevance.begin(), rec.relevance.end(), 1) == rec.relevance.end())
            throw ParseError("retrieval query without any relevant question");
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<RetrievalRecord> load_retrieval_json(const std::string& path,
                                                        const Corpus& corpus) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open retrieval file: " + path);
    return read_retrieval_json(in, corpus);
}

/// Rank one retrieval record under an embedding function and return its
/// relevance list in ranked order.
template <typename EmbedFn>
RankedRelevance rank_record(const RetrievalRecord& rec, EmbedFn&& embed) {
    const Embedding q = embed(rec.query);
    std::vector<Embedding> questions;
    questions.reserve(rec.questions.size());
    for (const auto& s : rec.questions) questions.push_back(embed(s));
    RankedRelevance ranked;
    ranked.reserve(questions.size());
    for (std::size_t idx : rank_by_cosine(q, questions)) ranked.push_back(rec.relevance[idx]);
    return ranked;
}

}  // namespace senda
