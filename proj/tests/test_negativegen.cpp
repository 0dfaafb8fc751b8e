#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "senda/negativegen.hpp"
#include "senda/negatives_file.hpp"

using namespace senda;
using Catch::Approx;

namespace {

TaggedSentence tagged(std::initializer_list<std::pair<const char*, PosTag>> toks) {
    TaggedSentence s;
    s.id = "0";
    for (const auto& [w, p] : toks) s.tokens.push_back({w, p});
    return s;
}

TaggedSentence words(std::initializer_list<const char*> surfaces, PosTag pos = PosTag::Verb) {
    TaggedSentence s;
    s.id = "0";
    for (const char* w : surfaces) s.tokens.push_back({w, pos});
    return s;
}

std::vector<std::string> surfaces_of(const std::vector<SeqItem>& items) {
    std::vector<std::string> out;
    for (const auto& it : items)
        if (const auto* t = std::get_if<Token>(&it)) out.push_back(t->surface);
    return out;
}

// Exhaustive top-m oracle: enumerate every joint fill, score the full
// assembly, drop the identity, order by (score desc, fills lex).
std::vector<FillCandidate> exhaustive_fill(const MaskedTemplate& tmpl, const NGramLM& lm,
                                           std::size_t m) {
    const auto& vocab = lm.span_vocabulary();
    const std::size_t slots = tmpl.sentinel_count();
    std::vector<std::vector<std::string>> original(slots);
    for (std::size_t i = 0; i < slots; ++i) original[i] = tmpl.span_surfaces(i);

    std::vector<FillCandidate> all;
    std::vector<std::size_t> choice(slots, 0);
    while (true) {
        FillCandidate cand;
        bool identity = true;
        for (std::size_t i = 0; i < slots; ++i) {
            cand.fills.push_back(vocab[choice[i]]);
            if (cand.fills.back() != original[i]) identity = false;
        }
        if (!identity) {
            cand.score = lm.avg_log_prob(assemble_surfaces(tmpl, cand.fills));
            all.push_back(std::move(cand));
        }
        std::size_t d = 0;
        for (; d < slots; ++d) {
            if (++choice[d] < vocab.size()) break;
            choice[d] = 0;
        }
        if (d == slots) break;
    }
    std::sort(all.begin(), all.end(), [](const FillCandidate& a, const FillCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.fills < b.fills;
    });
    if (all.size() > m) all.resize(m);
    return all;
}

Corpus span_corpus() {
    // Noun spans: (river bank), (water), (stone), (bird), (river)
    Corpus c;
    c.sentences = {
        tagged({{"the", PosTag::Det}, {"river", PosTag::Noun}, {"bank", PosTag::Noun},
                {"is", PosTag::Aux}, {"wide", PosTag::Adj}}),
        tagged({{"cold", PosTag::Adj}, {"water", PosTag::Noun}, {"flows", PosTag::Verb},
                {"past", PosTag::Adp}, {"stone", PosTag::Noun}}),
        tagged({{"a", PosTag::Det}, {"bird", PosTag::Noun}, {"sees", PosTag::Verb},
                {"the", PosTag::Det}, {"river", PosTag::Noun}}),
    };
    for (std::size_t i = 0; i < c.sentences.size(); ++i) c.sentences[i].id = std::to_string(i);
    return c;
}

}  // namespace

TEST_CASE("noun span extraction", "[negativegen]") {
    SECTION("maximal runs, left to right") {
        auto s = tagged({{"a", PosTag::Noun}, {"b", PosTag::Noun}, {"of", PosTag::Adp},
                         {"c", PosTag::Noun}, {"go", PosTag::Verb}});
        auto spans = extract_noun_spans(s);
        REQUIRE(spans.size() == 2);
        CHECK(spans[0] == NounSpan{0, 2});
        CHECK(spans[1] == NounSpan{3, 4});
    }

    SECTION("no nouns") {
        CHECK(extract_noun_spans(words({"go", "fast"}, PosTag::Verb)).empty());
    }

    SECTION("all nouns gives one full span") {
        auto spans = extract_noun_spans(words({"a", "b", "c"}, PosTag::Noun));
        REQUIRE(spans.size() == 1);
        CHECK(spans[0] == NounSpan{0, 3});
    }
}

TEST_CASE("masked templates", "[negativegen]") {
    auto s = words({"t0", "t1", "t2", "t3"});

    SECTION("one span renders to sentinel") {
        auto tmpl = mask_spans(s, {{1, 3}});
        auto items = tmpl.render();
        REQUIRE(items.size() == 3);
        CHECK(std::get<Token>(items[0]).surface == "t0");
        CHECK(std::get<Sentinel>(items[1]).id == 0);
        CHECK(std::get<Token>(items[2]).surface == "t3");
    }

    SECTION("empty span list is the identity") {
        auto tmpl = mask_spans(s, {});
        auto items = tmpl.render();
        REQUIRE(items.size() == 4);
        CHECK(surfaces_of(items) == s.surfaces());
    }

    SECTION("two spans get ordered sentinels") {
        auto tmpl = mask_spans(s, {{0, 1}, {2, 3}});
        auto items = tmpl.render();
        REQUIRE(items.size() == 4);
        CHECK(std::get<Sentinel>(items[0]).id == 0);
        CHECK(std::get<Sentinel>(items[2]).id == 1);
    }

    SECTION("overlapping or out-of-range spans rejected") {
        CHECK_THROWS_AS(mask_spans(s, {{0, 2}, {1, 3}}), std::invalid_argument);
        CHECK_THROWS_AS(mask_spans(s, {{2, 9}}), std::invalid_argument);
        CHECK_THROWS_AS(mask_spans(s, {{2, 2}}), std::invalid_argument);
    }
}

TEST_CASE("span corruption round-trip", "[negativegen]") {
    SpanCorruptionConfig cfg;
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t len = 2 + rng.uniform_index(39);
        TaggedSentence s;
        for (std::size_t t = 0; t < len; ++t)
            s.tokens.push_back({"w" + std::to_string(t), PosTag::Noun});

        auto ex = span_corruption(s, cfg, rng);
        CHECK(reconstruct(ex.corrupted, ex.target) == s.tokens);

        // Spans sorted, non-adjacent, in range.
        for (std::size_t i = 0; i < ex.spans.size(); ++i) {
            CHECK(ex.spans[i].start < ex.spans[i].end);
            CHECK(ex.spans[i].end <= len);
            if (i) CHECK(ex.spans[i].start > ex.spans[i - 1].end);
        }
    }
}

TEST_CASE("span corruption zero-mask limit", "[negativegen]") {
    // Two tokens at rate 0.15 rounds to zero masked tokens.
    SpanCorruptionConfig cfg;
    Rng rng(5);
    auto s = words({"a", "b"});
    auto ex = span_corruption(s, cfg, rng);
    CHECK(ex.spans.empty());
    CHECK(ex.target.empty());
    CHECK(surfaces_of(ex.corrupted) == s.surfaces());
}

TEST_CASE("span corruption statistics over 1000 sentences", "[negativegen]") {
    SpanCorruptionConfig cfg;  // 0.15, mean 3
    Rng rng(404);
    std::size_t masked = 0, total = 0, spans = 0;
    for (int i = 0; i < 1000; ++i) {
        TaggedSentence s;
        for (std::size_t t = 0; t < 40; ++t)
            s.tokens.push_back({"w" + std::to_string(t), PosTag::Noun});
        auto ex = span_corruption(s, cfg, rng);
        total += 40;
        spans += ex.spans.size();
        for (const auto& sp : ex.spans) masked += sp.length();
    }
    const double fraction = static_cast<double>(masked) / static_cast<double>(total);
    const double mean_span = static_cast<double>(masked) / static_cast<double>(spans);
    CHECK(fraction == Approx(0.15).margin(0.02));
    CHECK(mean_span == Approx(3.0).margin(0.3));
}

TEST_CASE("span corruption frozen trace", "[negativegen]") {
    // Seed 11 on a 10-token sentence. Hand trace of the Rng stream:
    // n_target = round(1.5) = 2, one span; first uniform = 0.16571... so the
    // geometric length is 1 + floor(log(0.83429)/log(2/3)) = 1; placement draw
    // uniform_index(10) = 5 puts the span at [5, 6).
    TaggedSentence s;
    for (int t = 0; t < 10; ++t) s.tokens.push_back({"t" + std::to_string(t), PosTag::Noun});
    SpanCorruptionConfig cfg;
    Rng rng(11);
    auto ex = span_corruption(s, cfg, rng);
    REQUIRE(ex.spans.size() == 1);
    CHECK(ex.spans[0] == NounSpan{5, 6});

    std::vector<std::string> corrupted = surfaces_of(ex.corrupted);
    CHECK(corrupted == std::vector<std::string>{"t0", "t1", "t2", "t3", "t4", "t6", "t7", "t8", "t9"});
    CHECK(std::get<Sentinel>(ex.corrupted[5]).id == 0);

    REQUIRE(ex.target.size() == 2);
    CHECK(std::get<Sentinel>(ex.target[0]).id == 0);
    CHECK(std::get<Token>(ex.target[1]).surface == "t5");
    CHECK(reconstruct(ex.corrupted, ex.target) == s.tokens);
}

TEST_CASE("n-gram language model", "[negativegen]") {
    SECTION("unigram hand count: P(a) = 0.75") {
        Corpus c;
        c.sentences = {words({"a", "a", "a", "b"})};
        auto lm = train_ngram_lm(c, 1, 0.0);
        CHECK(lm.prob({}, "a") == Approx(0.75).epsilon(1e-15));
        CHECK(lm.prob({}, "b") == Approx(0.25).epsilon(1e-15));
    }

    SECTION("unseen token with add-k smoothing: k / (N + kV)") {
        Corpus c;
        c.sentences = {words({"a", "a", "a", "b"})};
        auto lm = train_ngram_lm(c, 1, 0.5);
        // N = 4 tokens, V = 2 types, k = 0.5
        CHECK(lm.prob({}, "zzz") == Approx(0.5 / (4.0 + 0.5 * 2.0)).epsilon(1e-15));
    }

    SECTION("bigram conditional: ratio of bigram to context counts") {
        Corpus c;
        c.sentences = {words({"a", "b", "a", "b"}), words({"a", "c"})};
        auto lm = train_ngram_lm(c, 2, 0.0);
        // contexts: a-> b:2, c:1 (the final b in sentence 1 is sentence-final)
        CHECK(lm.prob({"a"}, "b") == Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(lm.prob({"a"}, "c") == Approx(1.0 / 3.0).epsilon(1e-15));
        // both sentences start with a
        CHECK(lm.prob({NGramLM::kBos}, "a") == Approx(1.0).epsilon(1e-15));
    }

    SECTION("empty corpus rejected") {
        CHECK_THROWS_AS(train_ngram_lm(Corpus{}, 1, 0.1), std::invalid_argument);
    }

    SECTION("span vocabulary harvested with first-occurrence dedup") {
        auto lm = train_ngram_lm(span_corpus(), 2, 0.1);
        const auto& vocab = lm.span_vocabulary();
        REQUIRE(vocab.size() == 5);
        CHECK(vocab[0] == std::vector<std::string>{"river", "bank"});
        CHECK(vocab[1] == std::vector<std::string>{"water"});
        CHECK(vocab[4] == std::vector<std::string>{"river"});
    }

    SECTION("log_prob decomposes over tokens") {
        Corpus c;
        c.sentences = {words({"a", "b", "a", "b"})};
        auto lm = train_ngram_lm(c, 1, 0.0);
        const double expect = 4.0 * std::log(0.5);
        CHECK(lm.log_prob({"a", "b", "b", "a"}) == Approx(expect).epsilon(1e-12));
        CHECK(lm.avg_log_prob({"a", "b", "b", "a"}) == Approx(std::log(0.5)).epsilon(1e-12));
    }
}

TEST_CASE("beam fill equals exhaustive search", "[negativegen]") {
    auto lm = train_ngram_lm(span_corpus(), 2, 0.1);

    SECTION("single sentinel, full-width beam") {
        auto anchor = span_corpus().sentences[0];  // the [river bank] is wide
        auto tmpl = mask_spans(anchor, extract_noun_spans(anchor));
        REQUIRE(tmpl.sentinel_count() == 1);

        auto got = beam_fill(tmpl, lm, 5, 4);
        auto want = exhaustive_fill(tmpl, lm, 4);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].fills == want[i].fills);
            CHECK(got[i].score == Approx(want[i].score).margin(1e-12));
        }
    }

    SECTION("two sentinels, beam covers the joint space") {
        auto anchor = span_corpus().sentences[1];  // cold [water] flows past [stone]
        auto tmpl = mask_spans(anchor, extract_noun_spans(anchor));
        REQUIRE(tmpl.sentinel_count() == 2);

        auto got = beam_fill(tmpl, lm, 25, 6);
        auto want = exhaustive_fill(tmpl, lm, 6);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].fills == want[i].fills);
            CHECK(got[i].score == Approx(want[i].score).margin(1e-12));
        }
    }

    SECTION("descending score order and no identity fill") {
        auto anchor = span_corpus().sentences[2];
        auto tmpl = mask_spans(anchor, extract_noun_spans(anchor));
        auto got = beam_fill(tmpl, lm, 30, 8);
        std::vector<std::vector<std::string>> original;
        for (std::size_t i = 0; i < tmpl.sentinel_count(); ++i)
            original.push_back(tmpl.span_surfaces(i));
        for (std::size_t i = 0; i < got.size(); ++i) {
            if (i) CHECK(got[i - 1].score >= got[i].score);
            CHECK(got[i].fills != original);
        }
    }

    SECTION("identity-only vocabulary is an error") {
        TaggedSentence anchor = tagged({{"see", PosTag::Verb}, {"bird", PosTag::Noun}});
        Corpus c;
        c.sentences = {anchor};
        auto lonely = train_ngram_lm(c, 1, 0.1);  // span vocab = {bird} only
        auto tmpl = mask_spans(anchor, extract_noun_spans(anchor));
        CHECK_THROWS_AS(beam_fill(tmpl, lonely, 4, 1), std::domain_error);
    }

    SECTION("zero sentinels is an error") {
        auto tmpl = mask_spans(words({"go", "fast"}), {});
        CHECK_THROWS_AS(beam_fill(tmpl, lm, 4, 1), std::invalid_argument);
    }
}

TEST_CASE("assemble", "[negativegen]") {
    auto anchor = span_corpus().sentences[0];  // the river bank is wide
    auto tmpl = mask_spans(anchor, extract_noun_spans(anchor));

    SECTION("identity fills reproduce the surface") {
        FillCandidate identity;
        identity.fills = {tmpl.span_surfaces(0)};
        CHECK(assemble(tmpl, identity).surfaces() == anchor.surfaces());
    }

    SECTION("length arithmetic with a different-size fill") {
        FillCandidate cand;
        cand.fills = {{"water"}};
        auto out = assemble(tmpl, cand);
        CHECK(out.size() == anchor.size() - 2 + 1);
        CHECK(out.tokens[1].surface == "water");
        CHECK(out.tokens[1].pos == PosTag::Noun);
    }

    SECTION("non-noun frame is preserved positionally for same-length fills") {
        FillCandidate cand;
        cand.fills = {{"sea", "wall"}};
        auto out = assemble(tmpl, cand);
        REQUIRE(out.size() == anchor.size());
        for (std::size_t t = 0; t < out.size(); ++t)
            if (anchor.tokens[t].pos != PosTag::Noun)
                CHECK(out.tokens[t].surface == anchor.tokens[t].surface);
    }

    SECTION("misaligned candidate rejected") {
        FillCandidate bad;
        bad.fills = {{"x"}, {"y"}};
        CHECK_THROWS_AS(assemble(tmpl, bad), std::invalid_argument);
        FillCandidate empty_fill;
        empty_fill.fills = {{}};
        CHECK_THROWS_AS(assemble(tmpl, empty_fill), std::invalid_argument);
    }

    SECTION("frame invariant holds for every beam candidate") {
        auto lm = train_ngram_lm(span_corpus(), 2, 0.1);
        for (const auto& sent : span_corpus().sentences) {
            auto spans = extract_noun_spans(sent);
            if (spans.empty()) continue;
            auto t = mask_spans(sent, spans);
            for (const auto& cand : beam_fill(t, lm, 30, 5)) {
                auto neg = assemble(t, cand);
                // Outside-span subsequences must be identical.
                std::vector<std::string> anchor_frame, neg_frame;
                std::size_t cursor = 0;
                for (const auto& sp : spans) {
                    for (; cursor < sp.start; ++cursor)
                        anchor_frame.push_back(sent.tokens[cursor].surface);
                    cursor = sp.end;
                }
                for (; cursor < sent.size(); ++cursor)
                    anchor_frame.push_back(sent.tokens[cursor].surface);
                for (const auto& tok : neg.tokens)
                    if (tok.pos != PosTag::Noun) neg_frame.push_back(tok.surface);
                // Frame tokens here are exactly the non-noun tokens by construction.
                CHECK(neg_frame == anchor_frame);
            }
        }
    }
}

TEST_CASE("negatives file round-trip", "[negativegen]") {
    std::vector<AnchorNegatives> all(2);
    all[0].anchor_id = "0";
    all[0].negatives.push_back({words({"a", "b"}), -1.5});
    all[1].anchor_id = "3";
    all[1].negatives.push_back({tagged({{"x", PosTag::Noun}, {"go", PosTag::Verb}}), -0.25});
    all[1].negatives.push_back({words({"y"}), -2.0});

    std::ostringstream out;
    write_negatives_jsonl(out, all);
    std::istringstream in(out.str());
    auto back = read_negatives_jsonl(in);

    REQUIRE(back.size() == 2);
    CHECK(back[0].anchor_id == "0");
    REQUIRE(back[1].negatives.size() == 2);
    CHECK(back[1].negatives[0].sentence.tokens == all[1].negatives[0].sentence.tokens);
    CHECK(back[1].negatives[0].score == -0.25);

    SECTION("malformed line names its number") {
        std::istringstream bad("{\"anchor_id\":\"0\",\"negatives\":[]}\nnot json\n");
        try {
            read_negatives_jsonl(bad);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }
}
