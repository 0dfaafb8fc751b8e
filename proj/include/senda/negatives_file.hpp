#pragma once

#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "senda/corpus.hpp"
#include "senda/errors.hpp"

namespace senda {

struct ScoredSentence {
    TaggedSentence sentence;
    double score = 0.0;
};

/// All generated negatives for one anchor, aligned by anchor id.
struct AnchorNegatives {
    std::string anchor_id;
    std::vector<ScoredSentence> negatives;
};

// JSON lines, one object per anchor:
//   {"anchor_id":"3","negatives":[{"score":-1.5,"tokens":[["w","NOUN"],...]},...]}

inline void write_negatives_jsonl(std::ostream& out, const std::vector<AnchorNegatives>& all) {
    for (const auto& rec : all) {
        nlohmann::json j;
        j["anchor_id"] = rec.anchor_id;
        auto& arr = j["negatives"] = nlohmann::json::array();
        for (const auto& neg : rec.negatives) {
            nlohmann::json n;
            n["score"] = neg.score;
            auto& toks = n["tokens"] = nlohmann::json::array();
            for (const auto& tok : neg.sentence.tokens)
                toks.push_back({tok.surface, std::string(to_string(tok.pos))});
            arr.push_back(std::move(n));
        }
        out << j.dump() << '\n';
    }
}

inline std::vector<AnchorNegatives> read_negatives_jsonl(std::istream& in) {
    std::vector<AnchorNegatives> all;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("negatives JSON: ") + e.what(), line_no);
        }
        if (!j.contains("anchor_id") || !j.contains("negatives"))
            throw ParseError("negatives record needs anchor_id and negatives", line_no);
        AnchorNegatives rec;
        rec.anchor_id = j["anchor_id"].get<std::string>();
        std::size_t k = 0;
        for (const auto& n : j["negatives"]) {
            ScoredSentence neg;
            neg.score = n.value("score", 0.0);
            neg.sentence.id = rec.anchor_id + "#" + std::to_string(k++);
            neg.sentence.source = "generated";
            for (const auto& t : n.at("tokens")) {
                if (!t.is_array() || t.size() != 2)
                    throw ParseError("negative token must be [surface, pos]", line_no);
                Token tok;
                tok.surface = t[0].get<std::string>();
                auto tag = parse_pos_tag(t[1].get<std::string>());
                tok.pos = tag ? *tag : PosTag::X;
                neg.sentence.tokens.push_back(std::move(tok));
            }
            if (neg.sentence.tokens.empty())
                throw ParseError("negative with no tokens", line_no);
            rec.negatives.push_back(std::move(neg));
        }
        all.push_back(std::move(rec));
    }
    return all;
}

inline void save_negatives(const std::string& path, const std::vector<AnchorNegatives>& all) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write negatives file: " + path);
    write_negatives_jsonl(out, all);
}

inline std::vector<AnchorNegatives> load_negatives(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open negatives file: " + path);
    return read_negatives_jsonl(in);
}

}  // namespace senda
