#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "senda/errors.hpp"
#include "senda/pos.hpp"

namespace senda {

struct Token {
    std::string surface;
    PosTag pos = PosTag::X;

    bool operator==(const Token&) const = default;
};

struct TaggedSentence {
    std::string id;
    std::vector<Token> tokens;
    std::string source;

    std::size_t size() const { return tokens.size(); }

    std::vector<std::string> surfaces() const {
        std::vector<std::string> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) out.push_back(t.surface);
        return out;
    }
};

struct Corpus {
    std::string domain_tag;
    std::vector<TaggedSentence> sentences;

    std::size_t size() const { return sentences.size(); }
    bool empty() const { return sentences.empty(); }

    const TaggedSentence* find(const std::string& id) const {
        for (const auto& s : sentences)
            if (s.id == id) return &s;
        return nullptr;
    }
};

struct CorpusStats {
    std::size_t n_sentences = 0;
    double avg_tokens = 0.0;
    std::size_t n_unique_tokens = 0;
};

struct LoadResult {
    Corpus corpus;
    std::size_t unknown_tag_count = 0;  // tags degraded to X
};

// ---------------------------------------------------------------------------
// Tagged-corpus format: one `surface<TAB>POS` per line, blank line between
// sentences, `#` starts a comment line. Ids are positional ("0", "1", ...).
// ---------------------------------------------------------------------------

inline LoadResult read_tagged_corpus(std::istream& in, const std::string& domain_tag,
                                     const std::string& source = "") {
    LoadResult result;
    result.corpus.domain_tag = domain_tag;

    std::vector<Token> pending;
    std::size_t line_no = 0;
    std::size_t next_id = 0;

    auto flush = [&] {
        if (pending.empty()) return;
        TaggedSentence sent;
        sent.id = std::to_string(next_id++);
        sent.tokens = std::move(pending);
        sent.source = source;
        result.corpus.sentences.push_back(std::move(sent));
        pending.clear();
    };

    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        if (line.front() == '#') continue;

        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
            throw ParseError("expected `surface<TAB>POS`, got \"" + line + "\"", line_no);
        if (line.find('\t', tab + 1) != std::string::npos)
            throw ParseError("too many fields in \"" + line + "\"", line_no);

        Token tok;
        tok.surface = line.substr(0, tab);
        std::string tag_text = line.substr(tab + 1);
        if (auto tag = parse_pos_tag(tag_text)) {
            tok.pos = *tag;
        } else {
            tok.pos = PosTag::X;
            ++result.unknown_tag_count;
        }
        pending.push_back(std::move(tok));
    }
    flush();
    return result;
}

inline LoadResult load_tagged_corpus(const std::string& path, const std::string& domain_tag) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open corpus file: " + path);
    return read_tagged_corpus(in, domain_tag, path);
}

inline void write_tagged_corpus(std::ostream& out, const Corpus& corpus) {
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
        if (i) out << '\n';
        for (const auto& tok : corpus.sentences[i].tokens)
            out << tok.surface << '\t' << to_string(tok.pos) << '\n';
    }
}

inline void save_tagged_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write corpus file: " + path);
    write_tagged_corpus(out, corpus);
}

// ---------------------------------------------------------------------------
// Cleaning and summaries
// ---------------------------------------------------------------------------

/// Keeps the first occurrence of each distinct surface sequence with at least
/// min_len tokens; relative order preserved. Duplicate detection ignores POS.
inline Corpus clean(const Corpus& corpus, std::size_t min_len = 5) {
    if (min_len < 1) throw std::invalid_argument("clean: min_len must be >= 1");
    Corpus out;
    out.domain_tag = corpus.domain_tag;
    std::unordered_set<std::string> seen;
    for (const auto& sent : corpus.sentences) {
        if (sent.tokens.size() < min_len) continue;
        std::string key;
        for (const auto& tok : sent.tokens) {
            key += tok.surface;
            key += '\x1f';
        }
        if (seen.insert(std::move(key)).second) out.sentences.push_back(sent);
    }
    return out;
}

inline CorpusStats stats(const Corpus& corpus) {
    CorpusStats s;
    s.n_sentences = corpus.sentences.size();
    if (s.n_sentences == 0) return s;
    std::size_t total = 0;
    std::unordered_set<std::string> unique;
    for (const auto& sent : corpus.sentences) {
        total += sent.tokens.size();
        for (const auto& tok : sent.tokens) unique.insert(tok.surface);
    }
    s.avg_tokens = static_cast<double>(total) / static_cast<double>(s.n_sentences);
    s.n_unique_tokens = unique.size();
    return s;
}

/// Exact surface counts, descending; ties broken lexicographically.
inline std::vector<std::pair<std::string, std::size_t>> term_frequencies(const Corpus& corpus,
                                                                         std::size_t top_k) {
    if (top_k < 1) throw std::invalid_argument("term_frequencies: top_k must be >= 1");
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& sent : corpus.sentences)
        for (const auto& tok : sent.tokens) ++counts[tok.surface];

    std::vector<std::pair<std::string, std::size_t>> out(counts.begin(), counts.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (out.size() > top_k) out.resize(top_k);
    return out;
}

}  // namespace senda
