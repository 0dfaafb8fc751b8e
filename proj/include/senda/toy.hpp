#pragma once

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <unordered_set>
#include <vector>

#include "senda/corpus.hpp"
#include "senda/rng.hpp"

namespace senda {

// ---------------------------------------------------------------------------
// Bundled synthetic domain: topics own disjoint noun sets, sentence frames
// share all non-noun tokens across topics. Semantic similarity is therefore
// controlled entirely by noun overlap, which is what the adaptation loop is
// supposed to learn to exploit.
// ---------------------------------------------------------------------------

struct ToyDomainConfig {
    std::size_t sentences_per_topic = 20;
    std::size_t queries_per_topic = 2;
    std::size_t max_relevant_per_query = 4;
    std::size_t irrelevant_per_query = 45;
    std::size_t sts_pairs = 60;
    std::uint64_t seed = 7;
};

struct StsRow {
    std::string id;
    double gold = 0.0;
    std::string a_id;
    std::string b_id;
};

struct ToyDomain {
    Corpus corpus;               // training sentences first, query sentences appended
    std::size_t n_training = 0;  // corpus index where queries start
    nlohmann::json retrieval;    // queries/questions/relevance
    std::vector<StsRow> sts;
};

namespace toydata {

inline const std::vector<std::vector<std::string>>& topic_nouns() {
    static const std::vector<std::vector<std::string>> topics = {
        {"river", "lake", "stream", "tide", "shore", "wave"},
        {"tree", "birch", "moss", "fern", "grove", "root"},
        {"cloud", "storm", "thunder", "rain", "wind", "mist"},
        {"barn", "tractor", "wheat", "silo", "fence", "hay"},
        {"violin", "drum", "chord", "melody", "tempo", "flute"},
        {"bread", "cheese", "stew", "spice", "flour", "oven"},
        {"train", "harbor", "ticket", "luggage", "route", "station"},
        {"fever", "dose", "clinic", "pulse", "symptom", "remedy"},
        {"hammer", "chisel", "lathe", "bolt", "wrench", "blade"},
        {"lesson", "chalk", "exam", "notebook", "teacher", "desk"},
    };
    return topics;
}

struct FrameToken {
    const char* surface;  // nullptr marks a noun slot
    PosTag pos;
};

inline const std::vector<std::vector<FrameToken>>& frames() {
    static const std::vector<std::vector<FrameToken>> all = {
        {{"the", PosTag::Det}, {nullptr, PosTag::Noun}, {"near", PosTag::Adp},
         {"the", PosTag::Det}, {nullptr, PosTag::Noun}, {"looks", PosTag::Verb},
         {"old", PosTag::Adj}},
        {{"a", PosTag::Det}, {nullptr, PosTag::Noun}, {"and", PosTag::Cconj},
         {"a", PosTag::Det}, {nullptr, PosTag::Noun}, {"stand", PosTag::Verb},
         {"there", PosTag::Adv}},
        {{"they", PosTag::Pron}, {"watch", PosTag::Verb}, {"the", PosTag::Det},
         {nullptr, PosTag::Noun}, {"beside", PosTag::Adp}, {"the", PosTag::Det},
         {nullptr, PosTag::Noun}, {"quietly", PosTag::Adv}},
        {{"every", PosTag::Det}, {nullptr, PosTag::Noun}, {"holds", PosTag::Verb},
         {"a", PosTag::Det}, {nullptr, PosTag::Noun}, {"now", PosTag::Adv}},
        {{"the", PosTag::Det}, {nullptr, PosTag::Noun}, {"sits", PosTag::Verb},
         {"under", PosTag::Adp}, {"the", PosTag::Det}, {nullptr, PosTag::Noun},
         {"always", PosTag::Adv}},
        {{"some", PosTag::Det}, {nullptr, PosTag::Noun}, {"falls", PosTag::Verb},
         {"onto", PosTag::Adp}, {"the", PosTag::Det}, {nullptr, PosTag::Noun},
         {"again", PosTag::Adv}},
        {{"this", PosTag::Det}, {nullptr, PosTag::Noun}, {"seems", PosTag::Verb},
         {"bigger", PosTag::Adj}, {"than", PosTag::Sconj}, {"that", PosTag::Det},
         {nullptr, PosTag::Noun}},
        {{"no", PosTag::Det}, {nullptr, PosTag::Noun}, {"moves", PosTag::Verb},
         {"toward", PosTag::Adp}, {"the", PosTag::Det}, {nullptr, PosTag::Noun},
         {"slowly", PosTag::Adv}},
    };
    return all;
}

inline TaggedSentence instantiate(std::size_t frame_idx, const std::string& noun1,
                                  const std::string& noun2) {
    TaggedSentence s;
    bool first = true;
    for (const auto& ft : frames()[frame_idx]) {
        if (ft.surface) {
            s.tokens.push_back({ft.surface, ft.pos});
        } else {
            s.tokens.push_back({first ? noun1 : noun2, PosTag::Noun});
            first = false;
        }
    }
    return s;
}

inline std::string surface_key(const TaggedSentence& s) {
    std::string key;
    for (const auto& t : s.tokens) {
        key += t.surface;
        key += '\x1f';
    }
    return key;
}

}  // namespace toydata

inline ToyDomain make_toy_domain(const ToyDomainConfig& cfg = {}) {
    const auto& topics = toydata::topic_nouns();
    const std::size_t n_frames = toydata::frames().size();
    Rng rng(cfg.seed);

    ToyDomain domain;
    domain.corpus.domain_tag = "toy";
    std::unordered_set<std::string> seen;
    std::vector<std::size_t> topic_of;               // per training sentence
    std::vector<std::pair<std::string, std::string>> nouns_of;

    auto draw_pair = [&](std::size_t topic) {
        const auto& nouns = topics[topic];
        const std::size_t i = rng.uniform_index(nouns.size());
        std::size_t j = rng.uniform_index(nouns.size() - 1);
        if (j >= i) ++j;
        return std::make_pair(nouns[i], nouns[j]);
    };

    // Training sentences: cycle the frames, draw distinct topic nouns,
    // reject duplicate surface sequences.
    for (std::size_t t = 0; t < topics.size(); ++t) {
        for (std::size_t k = 0; k < cfg.sentences_per_topic; ++k) {
            for (int attempt = 0; attempt < 1000; ++attempt) {
                const std::size_t frame = (k + attempt) % n_frames;
                auto [n1, n2] = draw_pair(t);
                auto sent = toydata::instantiate(frame, n1, n2);
                if (!seen.insert(toydata::surface_key(sent)).second) continue;
                sent.id = std::to_string(domain.corpus.sentences.size());
                sent.source = "toy";
                domain.corpus.sentences.push_back(std::move(sent));
                topic_of.push_back(t);
                nouns_of.emplace_back(n1, n2);
                break;
            }
        }
    }
    domain.n_training = domain.corpus.sentences.size();

    // Query sentences: new surface sequences over the same topic nouns.
    struct QueryInfo {
        std::size_t corpus_index;
        std::size_t topic;
        std::pair<std::string, std::string> nouns;
    };
    std::vector<QueryInfo> queries;
    for (std::size_t t = 0; t < topics.size(); ++t) {
        for (std::size_t q = 0; q < cfg.queries_per_topic; ++q) {
            for (int attempt = 0; attempt < 1000; ++attempt) {
                const std::size_t frame = rng.uniform_index(n_frames);
                auto nouns = draw_pair(t);
                auto sent = toydata::instantiate(frame, nouns.first, nouns.second);
                if (!seen.insert(toydata::surface_key(sent)).second) continue;
                sent.id = std::to_string(domain.corpus.sentences.size());
                sent.source = "toy-query";
                domain.corpus.sentences.push_back(std::move(sent));
                queries.push_back({domain.corpus.sentences.size() - 1, t, nouns});
                break;
            }
        }
    }

    // Retrieval fixture: relevant questions share the query's topic and at
    // least one of its nouns; irrelevant ones come from other topics.
    nlohmann::json queries_json = nlohmann::json::array();
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const auto& info = queries[qi];
        std::vector<std::size_t> relevant;
        for (std::size_t s = 0; s < domain.n_training && relevant.size() < cfg.max_relevant_per_query;
             ++s) {
            if (topic_of[s] != info.topic) continue;
            const auto& [a, b] = nouns_of[s];
            if (a == info.nouns.first || a == info.nouns.second || b == info.nouns.first ||
                b == info.nouns.second)
                relevant.push_back(s);
        }
        std::vector<std::size_t> other_topic;
        for (std::size_t s = 0; s < domain.n_training; ++s)
            if (topic_of[s] != info.topic) other_topic.push_back(s);
        rng.shuffle(other_topic);
        other_topic.resize(std::min(cfg.irrelevant_per_query, other_topic.size()));

        struct Q {
            std::size_t idx;
            int rel;
        };
        std::vector<Q> mixed;
        for (auto s : relevant) mixed.push_back({s, 1});
        for (auto s : other_topic) mixed.push_back({s, 0});
        rng.shuffle(mixed);

        nlohmann::json qj;
        qj["id"] = "q" + std::to_string(qi);
        qj["query_sentence_id"] = domain.corpus.sentences[info.corpus_index].id;
        auto& questions = qj["questions"] = nlohmann::json::array();
        for (const auto& m : mixed)
            questions.push_back({{"sentence_id", domain.corpus.sentences[m.idx].id},
                                 {"relevant", m.rel}});
        queries_json.push_back(std::move(qj));
    }
    domain.retrieval = nlohmann::json{{"queries", queries_json}};

    // STS fixture: gold score from construction. 5: same topic sharing two
    // nouns; 4: same topic sharing one; 3: same topic, disjoint nouns;
    // 1/0: different topics.
    std::unordered_set<std::string> used_pairs;
    auto shared_nouns = [&](std::size_t a, std::size_t b) {
        int shared = 0;
        const auto& [a1, a2] = nouns_of[a];
        const auto& [b1, b2] = nouns_of[b];
        if (a1 == b1 || a1 == b2) ++shared;
        if (a2 == b1 || a2 == b2) ++shared;
        return shared;
    };
    auto add_pair = [&](std::size_t a, std::size_t b, double gold) {
        if (a == b) return false;
        std::string key = std::min(a, b) < std::max(a, b)
                              ? std::to_string(std::min(a, b)) + ":" + std::to_string(std::max(a, b))
                              : "";
        if (!used_pairs.insert(key).second) return false;
        StsRow row;
        row.id = "p" + std::to_string(domain.sts.size());
        row.gold = gold;
        row.a_id = domain.corpus.sentences[a].id;
        row.b_id = domain.corpus.sentences[b].id;
        domain.sts.push_back(std::move(row));
        return true;
    };

    while (domain.sts.size() < cfg.sts_pairs) {
        const std::size_t kind = domain.sts.size() % 3;
        bool placed = false;
        for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
            const std::size_t a = rng.uniform_index(domain.n_training);
            const std::size_t b = rng.uniform_index(domain.n_training);
            if (a == b) continue;
            const int shared = topic_of[a] == topic_of[b] ? shared_nouns(a, b) : 0;
            if (kind == 0) {  // high similarity
                if (topic_of[a] != topic_of[b] || shared == 0) continue;
                placed = add_pair(a, b, shared >= 2 ? 5.0 : 4.0);
            } else if (kind == 1) {  // same topic, disjoint nouns
                if (topic_of[a] != topic_of[b] || shared != 0) continue;
                placed = add_pair(a, b, 3.0);
            } else {  // cross topic
                if (topic_of[a] == topic_of[b]) continue;
                placed = add_pair(a, b, domain.sts.size() % 2 ? 1.0 : 0.0);
            }
        }
        if (!placed) break;
    }
    return domain;
}

inline std::string sts_to_tsv(const std::vector<StsRow>& rows) {
    std::string out = "# id\tscore\tsentence_a_id\tsentence_b_id\n";
    for (const auto& r : rows) {
        char gold[32];
        std::snprintf(gold, sizeof(gold), "%g", r.gold);
        out += r.id + "\t" + gold + "\t" + r.a_id + "\t" + r.b_id + "\n";
    }
    return out;
}

/// Write corpus.tsv, ir.json and sts.tsv under dir.
inline void write_toy_domain(const std::string& dir, const ToyDomain& domain) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_tagged_corpus((fs::path(dir) / "corpus.tsv").string(), domain.corpus);
    std::ofstream ir(fs::path(dir) / "ir.json");
    ir << domain.retrieval.dump(2) << '\n';
    std::ofstream sts(fs::path(dir) / "sts.tsv");
    sts << sts_to_tsv(domain.sts);
}

}  // namespace senda
