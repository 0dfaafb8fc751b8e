#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "senda/corpus.hpp"
#include "senda/encoder.hpp"
#include "senda/rng.hpp"

namespace senda {

struct ContrastiveBatch {
    std::vector<TaggedSentence> anchors;
    std::vector<TaggedSentence> negatives;  // aligned by index

    std::size_t size() const { return anchors.size(); }

    void validate() const {
        if (anchors.empty() || anchors.size() != negatives.size())
            throw std::invalid_argument("ContrastiveBatch: need N >= 1 aligned anchors and negatives");
    }
};

struct LossConfig {
    double tau = 0.05;    // temperature
    double alpha = 1.0;   // hard-negative weight; 0 disables the diagonal term

    void validate() const {
        if (!(tau > 0.0)) throw std::invalid_argument("LossConfig: tau must be > 0");
        if (!(alpha >= 0.0)) throw std::invalid_argument("LossConfig: alpha must be >= 0");
    }
};

/// Per-unit inverted-dropout scales for the positive view, one row per anchor.
/// Entries are 0 (dropped) or 1/(1-p). Drawn once per step and reused by the
/// backward pass.
struct DropoutMasks {
    Eigen::MatrixXd scale;
};

inline DropoutMasks draw_dropout_masks(double p, Eigen::Index n, Eigen::Index width, Rng& rng) {
    DropoutMasks masks;
    masks.scale = Eigen::MatrixXd::Ones(n, width);
    if (p == 0.0) return masks;
    const double keep = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < width; ++c)
            masks.scale(i, c) = rng.bernoulli(p) ? 0.0 : keep;
    return masks;
}

/// Row i holds: anchor embedding, dropout (positive) embedding, hard-negative
/// embedding.
struct Views {
    Eigen::MatrixXd anchor;    // V in the batch computation
    Eigen::MatrixXd positive;  // V+
    Eigen::MatrixXd negative;  // V*
};

inline Views build_views_masked(const ToyEncoder& model, const ContrastiveBatch& batch,
                                const DropoutMasks& masks) {
    batch.validate();
    const auto n = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index width = model.width();
    if (masks.scale.rows() != n || masks.scale.cols() != width)
        throw std::invalid_argument("build_views: mask shape mismatch");

    Views views;
    views.anchor.resize(n, width);
    views.positive.resize(n, width);
    views.negative.resize(n, width);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Embedding pooled = model.pooled(batch.anchors[static_cast<std::size_t>(i)]);
        views.anchor.row(i) = model.project(pooled).transpose();
        const Embedding masked = masks.scale.row(i).transpose().cwiseProduct(pooled);
        views.positive.row(i) = model.project(masked).transpose();
        views.negative.row(i) =
            model.encode(batch.negatives[static_cast<std::size_t>(i)]).transpose();
    }
    return views;
}

inline Views build_views(const ToyEncoder& model, const ContrastiveBatch& batch, Rng& rng) {
    batch.validate();
    const auto masks = draw_dropout_masks(model.dropout_rate(),
                                          static_cast<Eigen::Index>(batch.size()), model.width(), rng);
    return build_views_masked(model, batch, masks);
}

/// N x 2N: left block anchor<->positive cosines / tau, right block
/// anchor<->hard-negative cosines / tau with +log(alpha) on its diagonal
/// (alpha = 0 writes -inf so the softmax weight is exactly zero).
struct SimMatrix {
    Eigen::MatrixXd values;

    Eigen::Index batch_size() const { return values.rows(); }
};

namespace detail {

inline Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m, const char* what) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double norm = m.row(i).norm();
        if (norm == 0.0) throw std::domain_error(std::string(what) + ": zero-norm row");
        out.row(i) = m.row(i) / norm;
    }
    return out;
}

}  // namespace detail

inline SimMatrix sim_matrices(const Views& views, const LossConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = views.anchor.rows();
    if (views.positive.rows() != n || views.negative.rows() != n)
        throw std::invalid_argument("sim_matrices: inconsistent dimensions");

    const Eigen::MatrixXd va = detail::normalize_rows(views.anchor, "sim_matrices");
    const Eigen::MatrixXd vp = detail::normalize_rows(views.positive, "sim_matrices");
    const Eigen::MatrixXd vn = detail::normalize_rows(views.negative, "sim_matrices");

    SimMatrix sim;
    sim.values.resize(n, 2 * n);
    sim.values.leftCols(n) = (va * vp.transpose()) / cfg.tau;
    sim.values.rightCols(n) = (va * vn.transpose()) / cfg.tau;
    const double diag_add = cfg.alpha > 0.0 ? std::log(cfg.alpha)
                                            : -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) sim.values(i, n + i) += diag_add;
    return sim;
}

/// The per-anchor loss written out literally: positive term over positive
/// term + alpha * hard-negative term + the 2N-2 in-batch negative terms.
/// Independent of the batched route; the tests hold the two equal.
inline double reference_loss(std::size_t i, const Views& views, const LossConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(views.anchor.rows());
    if (i >= n) throw std::invalid_argument("reference_loss: index out of range");

    const Embedding vi = views.anchor.row(static_cast<Eigen::Index>(i));
    auto sim_to = [&](const Eigen::MatrixXd& m, std::size_t j) {
        return cosine(vi, Embedding(m.row(static_cast<Eigen::Index>(j))));
    };

    const double numerator = std::exp(sim_to(views.positive, i) / cfg.tau);
    double denominator = numerator + cfg.alpha * std::exp(sim_to(views.negative, i) / cfg.tau);
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        denominator += std::exp(sim_to(views.positive, j) / cfg.tau);
        denominator += std::exp(sim_to(views.negative, j) / cfg.tau);
    }
    return -std::log(numerator / denominator);
}

/// Mean over rows of cross-entropy against the label vector (1, ..., N):
/// row i's correct class is column i of the positive block.
inline double batch_loss(const SimMatrix& sim) {
    const Eigen::Index n = sim.batch_size();
    if (sim.values.cols() != 2 * n) throw std::invalid_argument("batch_loss: matrix must be N x 2N");
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double row_max = sim.values.row(i).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index j = 0; j < 2 * n; ++j) sum += std::exp(sim.values(i, j) - row_max);
        total += -(sim.values(i, i) - row_max) + std::log(sum);
    }
    return total / static_cast<double>(n);
}

struct Gradients {
    Eigen::MatrixXd embedding;
    Eigen::MatrixXd projection;
    Eigen::VectorXd bias;
};

struct ForwardBackwardResult {
    double loss = 0.0;
    Gradients grads;
};

/// Analytic gradient of batch_loss(sim_matrices(build_views_masked(...)))
/// with respect to every encoder parameter, with the dropout masks held fixed.
inline ForwardBackwardResult forward_backward(const ToyEncoder& model,
                                              const ContrastiveBatch& batch,
                                              const LossConfig& cfg, const DropoutMasks& masks) {
    batch.validate();
    cfg.validate();
    const auto n = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index width = model.width();

    // Forward, keeping intermediates.
    Eigen::MatrixXd pooled_a(n, width), pooled_m(n, width), pooled_n(n, width);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        pooled_a.row(i) = model.pooled(batch.anchors[ui]).transpose();
        pooled_m.row(i) = masks.scale.row(i).cwiseProduct(pooled_a.row(i));
        pooled_n.row(i) = model.pooled(batch.negatives[ui]).transpose();
    }
    auto affine_tanh = [&](const Eigen::MatrixXd& pooled) {
        Eigen::MatrixXd out(n, width);
        for (Eigen::Index i = 0; i < n; ++i)
            out.row(i) = model.project(Embedding(pooled.row(i).transpose())).transpose();
        return out;
    };
    Views views;
    views.anchor = affine_tanh(pooled_a);
    views.positive = affine_tanh(pooled_m);
    views.negative = affine_tanh(pooled_n);

    const SimMatrix sim = sim_matrices(views, cfg);

    ForwardBackwardResult result;
    result.loss = batch_loss(sim);

    // dL/dSim = (softmax - onehot(label)) / N, computed row by row.
    Eigen::MatrixXd dsim(n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double row_max = sim.values.row(i).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index j = 0; j < 2 * n; ++j) sum += std::exp(sim.values(i, j) - row_max);
        for (Eigen::Index j = 0; j < 2 * n; ++j)
            dsim(i, j) = std::exp(sim.values(i, j) - row_max) / sum;
        dsim(i, i) -= 1.0;
    }
    dsim /= static_cast<double>(n);

    // Cosine backward into the three view matrices.
    Eigen::MatrixXd g_anchor = Eigen::MatrixXd::Zero(n, width);
    Eigen::MatrixXd g_positive = Eigen::MatrixXd::Zero(n, width);
    Eigen::MatrixXd g_negative = Eigen::MatrixXd::Zero(n, width);
    auto cosine_backward = [&](Eigen::Index i, const Eigen::MatrixXd& other,
                               Eigen::MatrixXd& g_other, Eigen::Index j, double g) {
        if (g == 0.0) return;
        const Eigen::RowVectorXd a = views.anchor.row(i);
        const Eigen::RowVectorXd b = other.row(j);
        const double na = a.norm(), nb = b.norm();
        const double cos_ab = a.dot(b) / (na * nb);
        g_anchor.row(i) += g * (b / (na * nb) - cos_ab * a / (na * na));
        g_other.row(j) += g * (a / (na * nb) - cos_ab * b / (nb * nb));
    };
    const double inv_tau = 1.0 / cfg.tau;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            cosine_backward(i, views.positive, g_positive, j, dsim(i, j) * inv_tau);
            cosine_backward(i, views.negative, g_negative, j, dsim(i, n + j) * inv_tau);
        }
    }

    // Backward through tanh(W m + b) and mean pooling.
    result.grads.embedding = Eigen::MatrixXd::Zero(model.embedding().rows(), width);
    result.grads.projection = Eigen::MatrixXd::Zero(width, width);
    result.grads.bias = Eigen::VectorXd::Zero(width);

    auto head_backward = [&](const Eigen::MatrixXd& g_view, const Eigen::MatrixXd& view,
                             const Eigen::MatrixXd& pooled, Eigen::Index i) {
        const Eigen::VectorXd gz = g_view.row(i).transpose().cwiseProduct(
            (1.0 - view.row(i).array().square()).matrix().transpose());
        result.grads.projection += gz * pooled.row(i);
        result.grads.bias += gz;
        return Eigen::VectorXd(model.projection().transpose() * gz);
    };
    auto scatter_tokens = [&](const TaggedSentence& sent, const Eigen::VectorXd& g_pooled) {
        const double inv_len = 1.0 / static_cast<double>(sent.tokens.size());
        for (const auto& tok : sent.tokens)
            result.grads.embedding.row(model.token_index(tok.surface)) +=
                inv_len * g_pooled.transpose();
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        scatter_tokens(batch.anchors[ui], head_backward(g_anchor, views.anchor, pooled_a, i));
        const Eigen::VectorXd g_masked = head_backward(g_positive, views.positive, pooled_m, i);
        scatter_tokens(batch.anchors[ui],
                       Eigen::VectorXd(masks.scale.row(i).transpose().cwiseProduct(g_masked)));
        scatter_tokens(batch.negatives[ui], head_backward(g_negative, views.negative, pooled_n, i));
    }
    return result;
}

inline ForwardBackwardResult gradients(const ToyEncoder& model, const ContrastiveBatch& batch,
                                       const LossConfig& cfg, Rng& rng) {
    batch.validate();
    const auto masks = draw_dropout_masks(model.dropout_rate(),
                                          static_cast<Eigen::Index>(batch.size()), model.width(), rng);
    return forward_backward(model, batch, cfg, masks);
}

// ---------------------------------------------------------------------------
// Adaptation loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t steps = 500;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    LossConfig loss;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
        if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch size must be >= 2");
        loss.validate();
    }
};

struct AdaptResult {
    ToyEncoder model;
    std::vector<double> loss_trace;            // one entry per step
    std::optional<ToyEncoder> best_model;      // set when a probe is supplied
    double best_probe = 0.0;
};

using ProbeFn = std::function<double(const ToyEncoder&)>;

/// Seeded minibatch SGD over Eq.-style batches: anchors shuffled per epoch and
/// sharded sequentially; per-anchor negatives consumed round-robin across
/// epochs. A probe, when given, is evaluated every probe_every steps and the
/// best checkpoint kept.
inline AdaptResult adapt(const ToyEncoder& model, const Corpus& corpus,
                         const std::unordered_map<std::string, std::vector<TaggedSentence>>& negatives,
                         const TrainConfig& cfg, const ProbeFn& probe = nullptr,
                         std::size_t probe_every = 50) {
    cfg.validate();
    if (corpus.empty()) throw std::invalid_argument("adapt: empty corpus");
    if (corpus.size() < cfg.batch_size)
        throw std::invalid_argument("adapt: corpus smaller than one batch");
    for (const auto& sent : corpus.sentences) {
        auto it = negatives.find(sent.id);
        if (it == negatives.end() || it->second.empty())
            throw std::invalid_argument("adapt: anchor " + sent.id + " has no generated negative");
    }

    AdaptResult result;
    result.model = model;
    result.loss_trace.reserve(cfg.steps);
    result.best_probe = -std::numeric_limits<double>::infinity();

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();  // force a shuffle on the first step
    std::size_t epoch = 0;

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        if (cursor + cfg.batch_size > order.size()) {
            if (step > 0) ++epoch;
            rng.shuffle(order);
            cursor = 0;
        }
        ContrastiveBatch batch;
        for (std::size_t k = 0; k < cfg.batch_size; ++k) {
            const auto& anchor = corpus.sentences[order[cursor + k]];
            const auto& negs = negatives.at(anchor.id);
            batch.anchors.push_back(anchor);
            batch.negatives.push_back(negs[epoch % negs.size()]);
        }
        cursor += cfg.batch_size;

        auto fb = gradients(result.model, batch, cfg.loss, rng);
        result.model.embedding() -= cfg.learning_rate * fb.grads.embedding;
        result.model.projection() -= cfg.learning_rate * fb.grads.projection;
        result.model.bias() -= cfg.learning_rate * fb.grads.bias;
        result.loss_trace.push_back(fb.loss);

        if (probe && ((step + 1) % probe_every == 0 || step + 1 == cfg.steps)) {
            const double score = probe(result.model);
            if (score > result.best_probe) {
                result.best_probe = score;
                result.best_model = result.model;
            }
        }
    }
    return result;
}

}  // namespace senda
