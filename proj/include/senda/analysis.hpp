#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "senda/corpus.hpp"
#include "senda/encoder.hpp"

namespace senda {

using EmbedFn = std::function<Embedding(const TaggedSentence&)>;

struct RelevantWordResult {
    std::string word;
    PosTag pos = PosTag::X;
    double drop = 0.0;  // similarity reduction achieved by deleting the word
};

namespace detail {

/// Sentence with every occurrence of one surface removed.
inline TaggedSentence delete_word(const TaggedSentence& sent, const std::string& surface) {
    TaggedSentence out;
    out.id = sent.id;
    out.source = sent.source;
    for (const auto& tok : sent.tokens)
        if (tok.surface != surface) out.tokens.push_back(tok);
    return out;
}

}  // namespace detail

/// The word whose deletion maximally reduces sim(a, b). A word appearing in
/// only one sentence counts only that side's deletion; one appearing in both
/// takes the smaller resulting similarity. Deleting all occurrences can empty
/// a sentence; such deletions are skipped, and a word with no usable deletion
/// drops out of the argmax. Ties keep the first candidate in a-then-b order.
inline RelevantWordResult relevant_word(const TaggedSentence& a, const TaggedSentence& b,
                                        const EmbedFn& embed) {
    if (a.tokens.empty() || b.tokens.empty())
        throw std::invalid_argument("relevant_word: empty sentence");

    struct Candidate {
        std::string word;
        PosTag pos;
    };
    std::vector<Candidate> candidates;
    std::unordered_set<std::string> seen;
    for (const auto* sent : {&a, &b})
        for (const auto& tok : sent->tokens)
            if (seen.insert(tok.surface).second) candidates.push_back({tok.surface, tok.pos});

    const Embedding ea = embed(a);
    const Embedding eb = embed(b);
    const double base = cosine(ea, eb);

    bool found = false;
    RelevantWordResult best;
    for (const auto& cand : candidates) {
        double min_sim = std::numeric_limits<double>::infinity();
        bool usable = false;
        const TaggedSentence a_del = detail::delete_word(a, cand.word);
        if (a_del.size() != a.size() && !a_del.tokens.empty()) {
            min_sim = std::min(min_sim, cosine(embed(a_del), eb));
            usable = true;
        }
        const TaggedSentence b_del = detail::delete_word(b, cand.word);
        if (b_del.size() != b.size() && !b_del.tokens.empty()) {
            min_sim = std::min(min_sim, cosine(ea, embed(b_del)));
            usable = true;
        }
        if (!usable) continue;
        const double drop = base - min_sim;
        if (!found || drop > best.drop) {
            best = {cand.word, cand.pos, drop};
            found = true;
        }
    }
    if (!found) throw std::domain_error("relevant_word: every deletion degenerate");
    return best;
}

// ---------------------------------------------------------------------------
// POS distribution of relevant words
// ---------------------------------------------------------------------------

struct PosDistribution {
    std::vector<PosTag> tags;       // display order, X last
    std::vector<std::size_t> counts;
    std::vector<double> fractions;  // sum to 1
};

inline std::vector<PosTag> default_display_tags() {
    std::vector<PosTag> tags;
    for (PosTag t : kAllPosTags)
        if (t != PosTag::X) tags.push_back(t);
    return tags;
}

/// Histogram of relevant-word POS tags over sentence pairs; any tag outside
/// the display set lands in the trailing X bucket.
inline PosDistribution pos_distribution(
    const std::vector<std::pair<TaggedSentence, TaggedSentence>>& pairs, const EmbedFn& embed,
    std::vector<PosTag> display = default_display_tags()) {
    if (pairs.empty()) throw std::invalid_argument("pos_distribution: no pairs");
    display.erase(std::remove(display.begin(), display.end(), PosTag::X), display.end());

    PosDistribution dist;
    dist.tags = display;
    dist.tags.push_back(PosTag::X);
    dist.counts.assign(dist.tags.size(), 0);

    for (const auto& [a, b] : pairs) {
        const auto result = relevant_word(a, b, embed);
        auto it = std::find(display.begin(), display.end(), result.pos);
        const std::size_t bucket =
            it == display.end() ? display.size() : static_cast<std::size_t>(it - display.begin());
        ++dist.counts[bucket];
    }
    dist.fractions.resize(dist.counts.size());
    for (std::size_t i = 0; i < dist.counts.size(); ++i)
        dist.fractions[i] =
            static_cast<double>(dist.counts[i]) / static_cast<double>(pairs.size());
    return dist;
}

// ---------------------------------------------------------------------------
// Dimensionality reduction for the embedding plots
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd cosine_distance_matrix(const std::vector<Embedding>& embs) {
    const auto n = static_cast<Eigen::Index>(embs.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            d(i, j) = d(j, i) = 1.0 - cosine(embs[static_cast<std::size_t>(i)],
                                             embs[static_cast<std::size_t>(j)]);
    return d;
}

struct Reduced2D {
    std::vector<Eigen::Vector2d> coords;
    int clipped_eigenvalues = 0;  // negative eigenvalues clipped to zero
};

/// Classical MDS: double-center -D^2/2, take the top two eigenpairs, scale
/// eigenvectors by sqrt(eigenvalue). Axis signs are fixed so the first
/// nonzero coordinate of each axis is positive.
inline Reduced2D reduce_2d(const Eigen::MatrixXd& distances) {
    const Eigen::Index n = distances.rows();
    if (distances.cols() != n) throw std::invalid_argument("reduce_2d: matrix must be square");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(distances(i, i)) > 1e-12)
            throw std::invalid_argument("reduce_2d: diagonal must be zero");
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (std::abs(distances(i, j) - distances(j, i)) > 1e-9)
                throw std::invalid_argument("reduce_2d: matrix must be symmetric");
    }

    const Eigen::MatrixXd squared = distances.array().square();
    const Eigen::MatrixXd centering =
        Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    const Eigen::MatrixXd gram = -0.5 * centering * squared * centering;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw std::runtime_error("reduce_2d: eigensolver failed");

    Reduced2D out;
    out.coords.assign(static_cast<std::size_t>(n), Eigen::Vector2d::Zero());
    for (int axis = 0; axis < 2 && axis < n; ++axis) {
        const Eigen::Index col = n - 1 - axis;  // eigenvalues ascend
        double lambda = solver.eigenvalues()(col);
        if (lambda < 0.0) {
            lambda = 0.0;
            ++out.clipped_eigenvalues;
        }
        Eigen::VectorXd column = solver.eigenvectors().col(col) * std::sqrt(lambda);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(column[i]) <= 1e-12) continue;
            if (column[i] < 0.0) column = -column;
            break;
        }
        for (Eigen::Index i = 0; i < n; ++i)
            out.coords[static_cast<std::size_t>(i)][axis] = column[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Polar-coordinate plot data
// ---------------------------------------------------------------------------

enum class PointKind { PairA, PairB, Query, RelevantQ, IrrelevantQ };

inline std::string_view to_string(PointKind kind) {
    switch (kind) {
        case PointKind::PairA: return "pair_a";
        case PointKind::PairB: return "pair_b";
        case PointKind::Query: return "query";
        case PointKind::RelevantQ: return "relevant_q";
        case PointKind::IrrelevantQ: return "irrelevant_q";
    }
    return "";
}

struct PointMeta {
    std::string id;
    int group = -1;  // -1: ungrouped (irrelevant questions)
    PointKind kind = PointKind::Query;
};

struct PolarPoint {
    std::string id;
    double r = 0.0;
    double theta = 0.0;  // radians in (-pi, pi]
    int group = -1;
    PointKind kind = PointKind::Query;
};

struct PolarSegment {
    int group = -1;
    std::string from_id;
    std::string to_id;
    double r1 = 0.0, theta1 = 0.0, r2 = 0.0, theta2 = 0.0;
};

struct PolarExport {
    std::vector<PolarPoint> points;
    std::vector<std::string> group_colors;  // hex, one per group index
    std::vector<PolarSegment> segments;     // hub-to-member connections per group
};

/// Hue in degrees to #rrggbb at full saturation and value.
inline std::string hue_to_hex(double degrees) {
    const double h = std::fmod(std::fmod(degrees, 360.0) + 360.0, 360.0) / 60.0;
    const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h)) {
        case 0: r = 1; g = x; break;
        case 1: r = x; g = 1; break;
        case 2: g = 1; b = x; break;
        case 3: g = x; b = 1; break;
        case 4: r = x; b = 1; break;
        default: r = 1; b = x; break;
    }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(std::lround(r * 255.0)),
                  static_cast<int>(std::lround(g * 255.0)),
                  static_cast<int>(std::lround(b * 255.0)));
    return buf;
}

/// Evenly spaced hues across the color wheel, one per group.
inline std::vector<std::string> group_colors(std::size_t n_groups) {
    std::vector<std::string> colors;
    colors.reserve(n_groups);
    for (std::size_t g = 0; g < n_groups; ++g)
        colors.push_back(hue_to_hex(360.0 * static_cast<double>(g) / static_cast<double>(n_groups)));
    return colors;
}

/// Cartesian 2-D coordinates to polar plot records. Each group's first
/// pair_a/query point acts as the hub; one segment connects it to every other
/// member, which draws a pair as one line and a query as a star.
inline PolarExport polar_export(const std::vector<Eigen::Vector2d>& coords,
                                const std::vector<PointMeta>& metas) {
    if (coords.empty() || coords.size() != metas.size())
        throw std::invalid_argument("polar_export: coords and metas must align and be non-empty");

    PolarExport out;
    int max_group = -1;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        PolarPoint p;
        p.id = metas[i].id;
        p.group = metas[i].group;
        p.kind = metas[i].kind;
        p.r = coords[i].norm();
        p.theta = std::atan2(coords[i][1], coords[i][0]);
        max_group = std::max(max_group, p.group);
        out.points.push_back(std::move(p));
    }
    out.group_colors = group_colors(static_cast<std::size_t>(max_group + 1));

    for (int g = 0; g <= max_group; ++g) {
        // Hub: the group's first pair_a/query point, else its first point.
        std::size_t hub = coords.size();
        std::size_t first_in_group = coords.size();
        for (std::size_t i = 0; i < out.points.size() && hub == coords.size(); ++i) {
            if (out.points[i].group != g) continue;
            if (first_in_group == coords.size()) first_in_group = i;
            if (out.points[i].kind == PointKind::PairA || out.points[i].kind == PointKind::Query)
                hub = i;
        }
        if (hub == coords.size()) hub = first_in_group;
        if (hub == coords.size()) continue;
        for (std::size_t i = 0; i < out.points.size(); ++i) {
            if (i == hub || out.points[i].group != g) continue;
            PolarSegment seg;
            seg.group = g;
            seg.from_id = out.points[hub].id;
            seg.to_id = out.points[i].id;
            seg.r1 = out.points[hub].r;
            seg.theta1 = out.points[hub].theta;
            seg.r2 = out.points[i].r;
            seg.theta2 = out.points[i].theta;
            out.segments.push_back(std::move(seg));
        }
    }
    return out;
}

inline void format_double(std::ostream& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
}

inline void write_points_csv(std::ostream& out, const PolarExport& data,
                             const std::string& ungrouped_color = "#808080") {
    out << "id,group,r,theta,color_hex,kind\n";
    for (const auto& p : data.points) {
        out << p.id << ',' << p.group << ',';
        format_double(out, p.r);
        out << ',';
        format_double(out, p.theta);
        out << ','
            << (p.group >= 0 ? data.group_colors[static_cast<std::size_t>(p.group)]
                             : ungrouped_color)
            << ',' << to_string(p.kind) << '\n';
    }
}

inline void write_segments_csv(std::ostream& out, const PolarExport& data) {
    out << "group,from_id,to_id,r1,theta1,r2,theta2,color_hex\n";
    for (const auto& s : data.segments) {
        out << s.group << ',' << s.from_id << ',' << s.to_id << ',';
        format_double(out, s.r1);
        out << ',';
        format_double(out, s.theta1);
        out << ',';
        format_double(out, s.r2);
        out << ',';
        format_double(out, s.theta2);
        out << ',' << data.group_colors[static_cast<std::size_t>(s.group)] << '\n';
    }
}

}  // namespace senda
