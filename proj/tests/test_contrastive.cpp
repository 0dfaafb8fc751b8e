#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "senda/contrastive.hpp"

using namespace senda;
using Catch::Approx;

namespace {

// Small corpus of noun/verb frames for gradient and training checks.
Corpus frame_corpus(std::size_t n_sentences, Rng& rng) {
    const std::vector<std::string> nouns = {"ant", "bee", "cat", "dog", "elk", "fox"};
    const std::vector<std::string> verbs = {"sees", "likes", "bites"};
    Corpus c;
    for (std::size_t i = 0; i < n_sentences; ++i) {
        TaggedSentence s;
        s.id = std::to_string(i);
        s.tokens = {{"the", PosTag::Det},
                    {nouns[rng.uniform_index(nouns.size())], PosTag::Noun},
                    {verbs[rng.uniform_index(verbs.size())], PosTag::Verb},
                    {"the", PosTag::Det},
                    {nouns[rng.uniform_index(nouns.size())], PosTag::Noun}};
        c.sentences.push_back(std::move(s));
    }
    return c;
}

// Negatives replace the anchor's nouns with out-of-frame nouns.
TaggedSentence noun_swapped(const TaggedSentence& anchor, Rng& rng) {
    const std::vector<std::string> pool = {"owl", "pig", "rat", "yak"};
    TaggedSentence neg = anchor;
    neg.id = anchor.id + "*";
    for (auto& tok : neg.tokens)
        if (tok.pos == PosTag::Noun) tok.surface = pool[rng.uniform_index(pool.size())];
    return neg;
}

ContrastiveBatch frame_batch(std::size_t n, Rng& rng) {
    ContrastiveBatch batch;
    auto corpus = frame_corpus(n, rng);
    for (auto& a : corpus.sentences) {
        batch.negatives.push_back(noun_swapped(a, rng));
        batch.anchors.push_back(std::move(a));
    }
    return batch;
}

Views random_views(Rng& rng, Eigen::Index n, Eigen::Index width) {
    Views v;
    v.anchor.resize(n, width);
    v.positive.resize(n, width);
    v.negative.resize(n, width);
    for (auto* m : {&v.anchor, &v.positive, &v.negative})
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index c = 0; c < width; ++c) (*m)(i, c) = rng.uniform(-1.0, 1.0);
    return v;
}

double loss_with_masks(const ToyEncoder& model, const ContrastiveBatch& batch,
                       const LossConfig& cfg, const DropoutMasks& masks) {
    return batch_loss(sim_matrices(build_views_masked(model, batch, masks), cfg));
}

}  // namespace

TEST_CASE("similarity matrices", "[contrastive]") {
    Rng rng(3);
    auto views = random_views(rng, 4, 8);

    SECTION("alpha = 1 adds zero to the diagonal") {
        LossConfig cfg{1.0, 1.0};
        auto sim = sim_matrices(views, cfg);
        for (Eigen::Index i = 0; i < 4; ++i) {
            const double expect = cosine(Embedding(views.anchor.row(i)),
                                         Embedding(views.negative.row(i)));
            CHECK(sim.values(i, 4 + i) == Approx(expect).margin(1e-15));
        }
    }

    SECTION("alpha = e, tau = 1 adds exactly one") {
        LossConfig cfg{1.0, std::exp(1.0)};
        auto sim = sim_matrices(views, cfg);
        for (Eigen::Index i = 0; i < 4; ++i) {
            const double cos_in = cosine(Embedding(views.anchor.row(i)),
                                         Embedding(views.negative.row(i)));
            CHECK(sim.values(i, 4 + i) == Approx(cos_in + 1.0).margin(1e-12));
        }
    }

    SECTION("log(alpha) identity: exp(s/tau + log a) = a exp(s/tau)") {
        LossConfig cfg{0.05, 0.5};
        auto sim = sim_matrices(views, cfg);
        for (Eigen::Index i = 0; i < 4; ++i) {
            const double s = cosine(Embedding(views.anchor.row(i)),
                                    Embedding(views.negative.row(i)));
            const double lhs = std::exp(sim.values(i, 4 + i));
            const double rhs = cfg.alpha * std::exp(s / cfg.tau);
            CHECK(lhs == Approx(rhs).epsilon(1e-12));
        }
    }

    SECTION("alpha = 0 writes -inf on the diagonal") {
        LossConfig cfg{1.0, 0.0};
        auto sim = sim_matrices(views, cfg);
        CHECK(std::isinf(sim.values(0, 4)));
        CHECK(sim.values(0, 4) < 0);
        CHECK(std::isfinite(sim.values(0, 5)));
    }

    SECTION("zero-norm row rejected") {
        views.positive.row(1).setZero();
        CHECK_THROWS_AS(sim_matrices(views, LossConfig{}), std::domain_error);
    }

    SECTION("dimensions are N x 2N") {
        auto sim = sim_matrices(views, LossConfig{});
        CHECK(sim.values.rows() == 4);
        CHECK(sim.values.cols() == 8);
    }
}

TEST_CASE("reference loss hand cases at N = 1", "[contrastive]") {
    Views views;
    views.anchor.resize(1, 2);
    views.positive.resize(1, 2);
    views.negative.resize(1, 2);

    SECTION("equal positive and hard-negative sims, alpha 1: ln 2") {
        views.anchor << 1.0, 0.0;
        views.positive << 1.0, 0.0;  // sim = 1
        views.negative << 1.0, 0.0;  // sim = 1
        LossConfig cfg{1.0, 1.0};
        CHECK(reference_loss(0, views, cfg) == Approx(std::log(2.0)).epsilon(1e-12));
    }

    SECTION("sim+ = 1, sim* = 0, tau 1, alpha 1: ln(1 + 1/e)") {
        views.anchor << 1.0, 0.0;
        views.positive << 1.0, 0.0;  // sim = 1
        views.negative << 0.0, 1.0;  // sim = 0
        LossConfig cfg{1.0, 1.0};
        CHECK(reference_loss(0, views, cfg) ==
              Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
        CHECK(reference_loss(0, views, cfg) == Approx(0.31326168751822286).epsilon(1e-10));
    }

    SECTION("alpha = 0 at N = 1: only the positive term survives") {
        views.anchor << 1.0, 0.0;
        views.positive << 0.3, 0.7;
        views.negative << -0.2, 0.5;
        LossConfig cfg{0.05, 0.0};
        CHECK(reference_loss(0, views, cfg) == Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("batched loss equals mean reference loss", "[contrastive]") {
    // The vectorization theorem over 100 seeded random batches.
    Rng rng(17);
    const double taus[] = {0.05, 1.0};
    const double alphas[] = {0.25, 1.0, 4.0};
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.uniform_index(8));
        const Eigen::Index width = 4 + static_cast<Eigen::Index>(rng.uniform_index(13));
        LossConfig cfg{taus[rng.uniform_index(2)], alphas[rng.uniform_index(3)]};
        auto views = random_views(rng, n, width);

        const double batched = batch_loss(sim_matrices(views, cfg));
        double mean_ref = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
            mean_ref += reference_loss(i, views, cfg);
        mean_ref /= static_cast<double>(n);

        REQUIRE(batched == Approx(mean_ref).margin(1e-10));
    }
}

TEST_CASE("batch loss limits and bounds", "[contrastive]") {
    SECTION("N = 1 degenerate cases match the reference examples") {
        Views views;
        views.anchor.resize(1, 2);
        views.positive.resize(1, 2);
        views.negative.resize(1, 2);
        views.anchor << 1.0, 0.0;
        views.positive << 1.0, 0.0;
        views.negative << 1.0, 0.0;
        LossConfig cfg{1.0, 1.0};
        CHECK(batch_loss(sim_matrices(views, cfg)) == Approx(std::log(2.0)).epsilon(1e-12));

        views.negative << 0.0, 1.0;
        CHECK(batch_loss(sim_matrices(views, cfg)) ==
              Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
    }

    SECTION("diagonal saturation drives the loss to zero") {
        SimMatrix sim;
        sim.values = Eigen::MatrixXd::Zero(2, 4);
        sim.values(0, 0) = 1000.0;
        sim.values(1, 1) = 1000.0;
        CHECK(batch_loss(sim) == Approx(0.0).margin(1e-12));
    }

    SECTION("all-equal similarities with alpha 1 give ln(2N)") {
        for (Eigen::Index n : {1, 3, 8}) {
            Views views;
            views.anchor = Eigen::MatrixXd::Ones(n, 4);
            views.positive = Eigen::MatrixXd::Ones(n, 4);
            views.negative = Eigen::MatrixXd::Ones(n, 4);
            LossConfig cfg{0.5, 1.0};
            CHECK(batch_loss(sim_matrices(views, cfg)) ==
                  Approx(std::log(2.0 * static_cast<double>(n))).epsilon(1e-12));
        }
    }

    SECTION("loss is nonnegative and alpha-monotone") {
        Rng rng(23);
        for (int trial = 0; trial < 30; ++trial) {
            const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.uniform_index(6));
            auto views = random_views(rng, n, 8);
            double prev = -1.0;
            for (double alpha : {0.0, 0.5, 1.0, 2.0, 8.0}) {
                LossConfig cfg{0.5, alpha};
                const double loss = batch_loss(sim_matrices(views, cfg));
                CHECK(loss >= 0.0);
                CHECK(loss > prev);  // denominator strictly grows with alpha
                prev = loss;
            }
        }
    }
}

TEST_CASE("build views", "[contrastive]") {
    Rng data_rng(5);
    auto batch = frame_batch(3, data_rng);
    Corpus vocab_corpus;
    vocab_corpus.sentences = batch.anchors;
    for (const auto& s : batch.negatives) vocab_corpus.sentences.push_back(s);

    SECTION("p = 0 makes the positive view equal the anchor view") {
        auto model = init_encoder(vocab_corpus, 8, 2, 0.0);
        Rng rng(1);
        auto views = build_views(model, batch, rng);
        CHECK(views.anchor == views.positive);
    }

    SECTION("N = 1 gives three 1 x C matrices") {
        auto model = init_encoder(vocab_corpus, 8, 2, 0.1);
        ContrastiveBatch one;
        one.anchors = {batch.anchors[0]};
        one.negatives = {batch.negatives[0]};
        Rng rng(1);
        auto views = build_views(model, one, rng);
        CHECK(views.anchor.rows() == 1);
        CHECK(views.positive.rows() == 1);
        CHECK(views.negative.rows() == 1);
        CHECK(views.anchor.cols() == 8);
    }

    SECTION("fixed seed reproduces the positive view") {
        auto model = init_encoder(vocab_corpus, 8, 2, 0.1);
        Rng r1(77), r2(77);
        auto a = build_views(model, batch, r1);
        auto b = build_views(model, batch, r2);
        CHECK(a.positive == b.positive);
    }

    SECTION("mismatched batch rejected") {
        ContrastiveBatch bad;
        bad.anchors = {batch.anchors[0]};
        Rng rng(1);
        auto model = init_encoder(vocab_corpus, 8, 2, 0.1);
        CHECK_THROWS_AS(build_views(model, bad, rng), std::invalid_argument);
    }
}

TEST_CASE("analytic gradients match central finite differences", "[contrastive]") {
    const double h = 1e-5;
    const double tol = 1e-4;

    // Finite-difference oracle over every parameter entry; returns the worst
    // relative error against the analytic gradient.
    auto check_batch = [&](const ToyEncoder& model, const ContrastiveBatch& batch,
                           const LossConfig& cfg, const DropoutMasks& masks) {
        auto fb = forward_backward(model, batch, cfg, masks);
        double worst = 0.0;

        auto probe_entry = [&](auto&& mutate, double analytic) {
            ToyEncoder plus = model, minus = model;
            mutate(plus, h);
            mutate(minus, -h);
            const double fd = (loss_with_masks(plus, batch, cfg, masks) -
                               loss_with_masks(minus, batch, cfg, masks)) /
                              (2.0 * h);
            const double rel =
                std::abs(analytic - fd) / std::max({1e-6, std::abs(analytic), std::abs(fd)});
            worst = std::max(worst, rel);
        };

        for (Eigen::Index r = 0; r < model.embedding().rows(); ++r)
            for (Eigen::Index c = 0; c < model.width(); ++c)
                probe_entry([r, c](ToyEncoder& m, double d) { m.embedding()(r, c) += d; },
                            fb.grads.embedding(r, c));
        for (Eigen::Index r = 0; r < model.width(); ++r)
            for (Eigen::Index c = 0; c < model.width(); ++c)
                probe_entry([r, c](ToyEncoder& m, double d) { m.projection()(r, c) += d; },
                            fb.grads.projection(r, c));
        for (Eigen::Index c = 0; c < model.width(); ++c)
            probe_entry([c](ToyEncoder& m, double d) { m.bias()[c] += d; }, fb.grads.bias[c]);
        return worst;
    };

    SECTION("20 seeded batches at N = 3, C = 4") {
        Rng rng(99);
        for (int trial = 0; trial < 20; ++trial) {
            auto batch = frame_batch(3, rng);
            Corpus vocab_corpus;
            vocab_corpus.sentences = batch.anchors;
            for (const auto& s : batch.negatives) vocab_corpus.sentences.push_back(s);
            auto model = init_encoder(vocab_corpus, 4, 1000 + trial, 0.1);
            LossConfig cfg{trial % 2 ? 1.0 : 0.05, trial % 3 ? 1.0 : 0.25};
            auto masks = draw_dropout_masks(model.dropout_rate(), 3, model.width(), rng);
            REQUIRE(check_batch(model, batch, cfg, masks) < tol);
        }
    }

    SECTION("identical sentences, p = 0, alpha = 0") {
        Rng rng(7);
        auto one = frame_batch(1, rng);
        ContrastiveBatch batch;
        for (int i = 0; i < 3; ++i) {
            batch.anchors.push_back(one.anchors[0]);
            batch.negatives.push_back(one.negatives[0]);
        }
        Corpus vocab_corpus;
        vocab_corpus.sentences = {one.anchors[0], one.negatives[0]};
        auto model = init_encoder(vocab_corpus, 4, 55, 0.0);
        LossConfig cfg{0.5, 0.0};
        auto masks = draw_dropout_masks(0.0, 3, 4, rng);
        CHECK(check_batch(model, batch, cfg, masks) < tol);
    }

    SECTION("doubling tau still matches the oracle") {
        Rng rng(13);
        auto batch = frame_batch(3, rng);
        Corpus vocab_corpus;
        vocab_corpus.sentences = batch.anchors;
        for (const auto& s : batch.negatives) vocab_corpus.sentences.push_back(s);
        auto model = init_encoder(vocab_corpus, 4, 21, 0.1);
        auto masks = draw_dropout_masks(0.1, 3, 4, rng);
        CHECK(check_batch(model, batch, LossConfig{0.05, 1.0}, masks) < tol);
        CHECK(check_batch(model, batch, LossConfig{0.10, 1.0}, masks) < tol);
    }
}

TEST_CASE("adapt", "[contrastive]") {
    Rng data_rng(41);
    auto corpus = frame_corpus(40, data_rng);
    std::unordered_map<std::string, std::vector<TaggedSentence>> negatives;
    for (const auto& anchor : corpus.sentences)
        negatives[anchor.id] = {noun_swapped(anchor, data_rng), noun_swapped(anchor, data_rng)};

    Corpus vocab_corpus = corpus;
    for (const auto& [id, negs] : negatives)
        for (const auto& n : negs) vocab_corpus.sentences.push_back(n);
    auto model = init_encoder(vocab_corpus, 16, 3, 0.1);

    SECTION("zero steps returns the input model unchanged") {
        TrainConfig cfg;
        cfg.steps = 0;
        cfg.batch_size = 8;
        auto result = adapt(model, corpus, negatives, cfg);
        CHECK(result.model.embedding() == model.embedding());
        CHECK(result.model.projection() == model.projection());
        CHECK(result.model.bias() == model.bias());
        CHECK(result.loss_trace.empty());
    }

    SECTION("same seed gives bitwise-identical traces") {
        TrainConfig cfg;
        cfg.steps = 40;
        cfg.batch_size = 8;
        cfg.seed = 12;
        auto a = adapt(model, corpus, negatives, cfg);
        auto b = adapt(model, corpus, negatives, cfg);
        REQUIRE(a.loss_trace.size() == 40);
        CHECK(a.loss_trace == b.loss_trace);
        CHECK(a.model.embedding() == b.model.embedding());
    }

    SECTION("loss decreases on the synthetic domain") {
        TrainConfig cfg;
        cfg.steps = 300;
        cfg.batch_size = 8;
        cfg.seed = 5;
        cfg.learning_rate = 0.1;
        auto result = adapt(model, corpus, negatives, cfg);
        double head = 0.0, tail = 0.0;
        for (std::size_t i = 0; i < 50; ++i) {
            head += result.loss_trace[i];
            tail += result.loss_trace[result.loss_trace.size() - 1 - i];
        }
        CHECK(tail / 50.0 < head / 50.0);
    }

    SECTION("anchor without negatives fails before training") {
        auto broken = negatives;
        broken.erase(corpus.sentences[3].id);
        TrainConfig cfg;
        cfg.steps = 10;
        cfg.batch_size = 8;
        CHECK_THROWS_AS(adapt(model, corpus, broken, cfg), std::invalid_argument);
    }

    SECTION("probe keeps the best checkpoint") {
        TrainConfig cfg;
        cfg.steps = 60;
        cfg.batch_size = 8;
        int calls = 0;
        auto probe = [&calls](const ToyEncoder&) {
            return static_cast<double>(-std::abs(calls++ - 1));
        };
        auto result = adapt(model, corpus, negatives, cfg, probe, 20);
        CHECK(result.best_model.has_value());
        CHECK(result.best_probe == 0.0);  // second probe call scored highest
    }
}
