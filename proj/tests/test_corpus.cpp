#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "senda/corpus.hpp"
#include "senda/rng.hpp"

using namespace senda;

namespace {

TaggedSentence make_sentence(const std::string& id, std::initializer_list<const char*> surfaces,
                             PosTag pos = PosTag::Noun) {
    TaggedSentence s;
    s.id = id;
    for (const char* w : surfaces) s.tokens.push_back({w, pos});
    return s;
}

}  // namespace

TEST_CASE("tagged corpus parsing", "[corpus]") {
    SECTION("two sentence blocks") {
        std::istringstream in(
            "# header comment\n"
            "the\tDET\n"
            "cat\tNOUN\n"
            "\n"
            "dogs\tNOUN\n"
            "run\tVERB\n");
        auto loaded = read_tagged_corpus(in, "toy");
        REQUIRE(loaded.corpus.size() == 2);
        CHECK(loaded.corpus.sentences[0].id == "0");
        CHECK(loaded.corpus.sentences[1].id == "1");
        CHECK(loaded.corpus.sentences[0].tokens[0].surface == "the");
        CHECK(loaded.corpus.sentences[0].tokens[0].pos == PosTag::Det);
        CHECK(loaded.corpus.sentences[1].tokens[1].pos == PosTag::Verb);
        CHECK(loaded.unknown_tag_count == 0);
    }

    SECTION("empty file") {
        std::istringstream in("");
        auto loaded = read_tagged_corpus(in, "toy");
        CHECK(loaded.corpus.size() == 0);
    }

    SECTION("missing tag field names the line") {
        std::istringstream in("ok\tNOUN\nword\n");
        try {
            read_tagged_corpus(in, "toy");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }

    SECTION("unknown POS degrades to X and is counted") {
        std::istringstream in("w\tWEIRD\n");
        auto loaded = read_tagged_corpus(in, "toy");
        REQUIRE(loaded.corpus.size() == 1);
        CHECK(loaded.corpus.sentences[0].tokens[0].pos == PosTag::X);
        CHECK(loaded.unknown_tag_count == 1);
    }

    SECTION("trailing block without blank line is flushed") {
        std::istringstream in("a\tNOUN\nb\tNOUN\n");
        auto loaded = read_tagged_corpus(in, "toy");
        REQUIRE(loaded.corpus.size() == 1);
        CHECK(loaded.corpus.sentences[0].size() == 2);
    }

    SECTION("round-trip through writer") {
        std::istringstream in("a\tNOUN\nb\tVERB\n\nc\tADJ\n");
        auto loaded = read_tagged_corpus(in, "toy");
        std::ostringstream out;
        write_tagged_corpus(out, loaded.corpus);
        std::istringstream back(out.str());
        auto reloaded = read_tagged_corpus(back, "toy");
        REQUIRE(reloaded.corpus.size() == loaded.corpus.size());
        for (std::size_t i = 0; i < loaded.corpus.size(); ++i)
            CHECK(reloaded.corpus.sentences[i].tokens == loaded.corpus.sentences[i].tokens);
    }
}

TEST_CASE("clean drops short and duplicate sentences", "[corpus]") {
    Corpus c;
    c.domain_tag = "toy";
    auto A = make_sentence("0", {"a", "b", "c", "d", "e"});
    auto B = make_sentence("1", {"f", "g", "h", "i", "j", "k"});
    auto A2 = make_sentence("2", {"a", "b", "c", "d", "e"});
    auto short4 = make_sentence("3", {"p", "q", "r", "s"});
    c.sentences = {A, B, A2, short4};

    auto cleaned = clean(c, 5);
    REQUIRE(cleaned.size() == 2);
    CHECK(cleaned.sentences[0].id == "0");
    CHECK(cleaned.sentences[1].id == "1");

    SECTION("boundary: exactly five tokens kept") {
        Corpus five;
        five.sentences = {make_sentence("0", {"a", "b", "c", "d", "e"})};
        CHECK(clean(five, 5).size() == 1);
    }

    SECTION("four tokens removed") {
        Corpus four;
        four.sentences = {short4};
        CHECK(clean(four, 5).size() == 0);
    }

    SECTION("duplicate detection ignores POS") {
        Corpus mixed;
        auto n = make_sentence("0", {"x", "y", "z", "w", "v"}, PosTag::Noun);
        auto v = make_sentence("1", {"x", "y", "z", "w", "v"}, PosTag::Verb);
        mixed.sentences = {n, v};
        CHECK(clean(mixed, 5).size() == 1);
    }
}

TEST_CASE("clean properties", "[corpus]") {
    // Random corpora from a tiny vocabulary to force duplicates.
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Corpus c;
        std::size_t n = 1 + rng.uniform_index(20);
        for (std::size_t i = 0; i < n; ++i) {
            TaggedSentence s;
            s.id = std::to_string(i);
            std::size_t len = 1 + rng.uniform_index(8);
            for (std::size_t t = 0; t < len; ++t)
                s.tokens.push_back({std::string(1, static_cast<char>('a' + rng.uniform_index(3))),
                                    PosTag::Noun});
            c.sentences.push_back(std::move(s));
        }

        auto once = clean(c, 3);
        auto twice = clean(once, 3);

        REQUIRE(once.size() == twice.size());
        for (std::size_t i = 0; i < once.size(); ++i)
            CHECK(once.sentences[i].tokens == twice.sentences[i].tokens);

        // Output sentences all come from the input, in order, and meet min_len.
        std::size_t cursor = 0;
        for (const auto& s : once.sentences) {
            CHECK(s.size() >= 3);
            while (cursor < c.size() && c.sentences[cursor].id != s.id) ++cursor;
            REQUIRE(cursor < c.size());
            ++cursor;
        }
        if (!once.sentences.empty()) CHECK(stats(once).avg_tokens >= 3.0);
    }
}

TEST_CASE("corpus stats", "[corpus]") {
    SECTION("empty corpus") {
        Corpus c;
        auto s = stats(c);
        CHECK(s.n_sentences == 0);
        CHECK(s.avg_tokens == 0.0);
        CHECK(s.n_unique_tokens == 0);
    }

    SECTION("hand count: 3 + 5 tokens, 6 distinct surfaces") {
        Corpus c;
        c.sentences = {make_sentence("0", {"a", "b", "c"}),
                       make_sentence("1", {"a", "b", "d", "e", "f"})};
        auto s = stats(c);
        CHECK(s.n_sentences == 2);
        CHECK(s.avg_tokens == 4.0);
        CHECK(s.n_unique_tokens == 6);
    }
}

TEST_CASE("term frequencies", "[corpus]") {
    Corpus c;
    c.sentences = {make_sentence("0", {"x", "y", "x"}), make_sentence("1", {"x", "y"})};

    SECTION("hand count, descending") {
        auto freq = term_frequencies(c, 2);
        REQUIRE(freq.size() == 2);
        CHECK(freq[0] == std::pair<std::string, std::size_t>{"x", 3});
        CHECK(freq[1] == std::pair<std::string, std::size_t>{"y", 2});
    }

    SECTION("top_k larger than vocabulary returns all") {
        auto freq = term_frequencies(c, 100);
        CHECK(freq.size() == 2);
    }

    SECTION("empty corpus gives empty list") {
        Corpus empty;
        CHECK(term_frequencies(empty, 5).empty());
    }

    SECTION("counts sum to token total when top_k covers vocabulary") {
        auto freq = term_frequencies(c, 100);
        std::size_t sum = 0;
        for (const auto& [w, n] : freq) sum += n;
        CHECK(sum == 5);
    }

    SECTION("ties broken lexicographically") {
        Corpus t;
        t.sentences = {make_sentence("0", {"b", "a"})};
        auto freq = term_frequencies(t, 2);
        CHECK(freq[0].first == "a");
        CHECK(freq[1].first == "b");
    }
}
