#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "senda/errors.hpp"

namespace senda {

struct TranslationTriple {
    std::string id;
    std::vector<std::string> original;         // source language tokens
    std::string translated;                    // target language, carried through opaque
    std::vector<std::string> back_translated;  // source language tokens
};

/// Clipped unigram precision times the brevity penalty min(1, e^(1 - r/c)).
/// Without the penalty a one-word candidate matching any reference word would
/// score 1.0, which defeats the gibberish check this score exists for.
inline double bleu1(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference) {
    if (candidate.empty() || reference.empty())
        throw std::invalid_argument("bleu1: empty token list");
    std::unordered_map<std::string, std::size_t> ref_counts;
    for (const auto& w : reference) ++ref_counts[w];
    std::size_t matched = 0;
    for (const auto& w : candidate) {
        auto it = ref_counts.find(w);
        if (it != ref_counts.end() && it->second > 0) {
            ++matched;
            --it->second;
        }
    }
    const double c = static_cast<double>(candidate.size());
    const double r = static_cast<double>(reference.size());
    const double precision = static_cast<double>(matched) / c;
    const double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return precision * brevity;
}

struct FilterReport {
    double threshold = 0.0;
    std::size_t kept = 0;
    std::size_t discarded = 0;
    std::array<std::size_t, 20> histogram{};  // equal-width bins over [0, 1]
};

struct FilterOutcome {
    std::vector<TranslationTriple> kept;
    std::vector<TranslationTriple> discarded;
    FilterReport report;
};

/// Scores each back-translation against its original. Threshold 0 discards
/// only exact-zero scores; a positive threshold discards scores <= threshold.
inline FilterOutcome filter_triples(const std::vector<TranslationTriple>& triples,
                                    double threshold) {
    if (!(threshold >= 0.0 && threshold < 1.0))
        throw std::invalid_argument("filter_triples: threshold must be in [0, 1)");
    FilterOutcome out;
    out.report.threshold = threshold;
    for (const auto& triple : triples) {
        const double score = bleu1(triple.back_translated, triple.original);
        const auto bin = std::min<std::size_t>(19, static_cast<std::size_t>(score * 20.0));
        ++out.report.histogram[bin];
        const bool discard = threshold == 0.0 ? score == 0.0 : score <= threshold;
        if (discard) {
            out.discarded.push_back(triple);
            ++out.report.discarded;
        } else {
            out.kept.push_back(triple);
            ++out.report.kept;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Formats: TSV `original<TAB>translated<TAB>back_translated` with tokens
// space-separated inside fields, or JSON lines with explicit arrays.
// ---------------------------------------------------------------------------

inline std::vector<std::string> split_spaces(const std::string& field) {
    std::vector<std::string> out;
    std::istringstream ss(field);
    std::string w;
    while (ss >> w) out.push_back(w);
    return out;
}

inline std::vector<TranslationTriple> read_triples_tsv(std::istream& in) {
    std::vector<TranslationTriple> triples;
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
        if (fields.size() != 3)
            throw ParseError("triple row needs original, translated, back_translated", line_no);
        TranslationTriple t;
        t.id = std::to_string(triples.size());
        t.original = split_spaces(fields[0]);
        t.translated = fields[1];
        t.back_translated = split_spaces(fields[2]);
        if (t.original.empty() || t.back_translated.empty())
            throw ParseError("triple with empty original or back-translation", line_no);
        triples.push_back(std::move(t));
    }
    return triples;
}

inline std::vector<TranslationTriple> read_triples_jsonl(std::istream& in) {
    std::vector<TranslationTriple> triples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("triple JSON: ") + e.what(), line_no);
        }
        TranslationTriple t;
        t.id = j.value("id", std::to_string(triples.size()));
        t.original = j.at("original").get<std::vector<std::string>>();
        t.translated = j.value("translated", "");
        t.back_translated = j.at("back_translated").get<std::vector<std::string>>();
        if (t.original.empty() || t.back_translated.empty())
            throw ParseError("triple with empty original or back-translation", line_no);
        triples.push_back(std::move(t));
    }
    return triples;
}

inline void write_triples_tsv(std::ostream& out, const std::vector<TranslationTriple>& triples) {
    for (const auto& t : triples) {
        for (std::size_t i = 0; i < t.original.size(); ++i)
            out << (i ? " " : "") << t.original[i];
        out << '\t' << t.translated << '\t';
        for (std::size_t i = 0; i < t.back_translated.size(); ++i)
            out << (i ? " " : "") << t.back_translated[i];
        out << '\n';
    }
}

inline nlohmann::json report_to_json(const FilterReport& report) {
    nlohmann::json j;
    j["threshold"] = report.threshold;
    j["kept"] = report.kept;
    j["discarded"] = report.discarded;
    j["total"] = report.kept + report.discarded;
    j["histogram"] = report.histogram;
    return j;
}

}  // namespace senda
