#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "senda/corpus.hpp"
#include "senda/rng.hpp"

namespace senda {

/// Maximal run of consecutive NOUN tokens, [start, end).
struct NounSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - start; }
    bool operator==(const NounSpan&) const = default;
};

inline std::vector<NounSpan> extract_noun_spans(const TaggedSentence& sent) {
    std::vector<NounSpan> spans;
    std::size_t i = 0;
    while (i < sent.tokens.size()) {
        if (sent.tokens[i].pos != PosTag::Noun) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < sent.tokens.size() && sent.tokens[j].pos == PosTag::Noun) ++j;
        spans.push_back({i, j});
        i = j;
    }
    return spans;
}

struct Sentinel {
    int id = 0;
    bool operator==(const Sentinel&) const = default;
};

/// One element of a masked rendering: either a kept token or a sentinel.
using SeqItem = std::variant<Token, Sentinel>;

struct MaskedTemplate {
    TaggedSentence base;
    std::vector<NounSpan> spans;  // sorted, non-overlapping; sentinel i <-> spans[i]

    std::size_t sentinel_count() const { return spans.size(); }

    /// Original surfaces of span i.
    std::vector<std::string> span_surfaces(std::size_t i) const {
        std::vector<std::string> out;
        for (std::size_t t = spans[i].start; t < spans[i].end; ++t)
            out.push_back(base.tokens[t].surface);
        return out;
    }

    /// Token sequence with each span replaced by its sentinel.
    std::vector<SeqItem> render() const {
        std::vector<SeqItem> items;
        std::size_t cursor = 0;
        for (std::size_t i = 0; i < spans.size(); ++i) {
            for (; cursor < spans[i].start; ++cursor) items.emplace_back(base.tokens[cursor]);
            items.emplace_back(Sentinel{static_cast<int>(i)});
            cursor = spans[i].end;
        }
        for (; cursor < base.tokens.size(); ++cursor) items.emplace_back(base.tokens[cursor]);
        return items;
    }
};

inline void validate_spans(const TaggedSentence& sent, const std::vector<NounSpan>& spans) {
    std::size_t prev_end = 0;
    bool first = true;
    for (const auto& span : spans) {
        if (span.start >= span.end || span.end > sent.tokens.size())
            throw std::invalid_argument("mask_spans: span out of range");
        if (!first && span.start < prev_end)
            throw std::invalid_argument("mask_spans: overlapping or unsorted spans");
        prev_end = span.end;
        first = false;
    }
}

inline MaskedTemplate mask_spans(const TaggedSentence& sent, std::vector<NounSpan> spans) {
    validate_spans(sent, spans);
    return MaskedTemplate{sent, std::move(spans)};
}

// ---------------------------------------------------------------------------
// Span corruption: the fill-in-the-blank pretraining objective. Selected spans
// become sentinels in the corrupted input; the target lists each sentinel
// followed by the tokens it hides, so corrupted + target reconstructs the
// original sentence.
// ---------------------------------------------------------------------------

struct SpanCorruptionConfig {
    double mask_rate = 0.15;
    double mean_span = 3.0;
};

struct CorruptionExample {
    std::vector<SeqItem> corrupted;
    std::vector<SeqItem> target;
    std::vector<NounSpan> spans;  // what was masked, sorted
};

/// Span count is mask_rate*len/mean_span; lengths are geometric with mean
/// mean_span, clamped to fit. Placement is uniform over slots that keep spans
/// non-adjacent, so sentinels never merge.
inline CorruptionExample span_corruption(const TaggedSentence& sent,
                                         const SpanCorruptionConfig& cfg, Rng& rng) {
    if (sent.tokens.size() < 2) throw std::invalid_argument("span_corruption: sentence too short");
    if (!(cfg.mask_rate > 0.0 && cfg.mask_rate < 1.0))
        throw std::invalid_argument("span_corruption: mask_rate must be in (0, 1)");
    if (cfg.mean_span < 1.0) throw std::invalid_argument("span_corruption: mean_span must be >= 1");

    const std::size_t len = sent.tokens.size();
    const auto n_target = static_cast<std::size_t>(std::llround(cfg.mask_rate * static_cast<double>(len)));

    CorruptionExample out;
    if (n_target > 0) {
        const auto n_spans = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(static_cast<double>(n_target) / cfg.mean_span)));

        // When even one average-length span would blow the mask budget, cap
        // spans at the budget itself; otherwise leave the geometric draw
        // untouched so the mean span length stays at mean_span.
        const std::size_t cap =
            static_cast<double>(n_target) < cfg.mean_span ? n_target : len;

        std::vector<bool> blocked(len, false);  // masked or adjacent to a mask
        std::vector<NounSpan> chosen;
        for (std::size_t k = 0; k < n_spans; ++k) {
            auto want = static_cast<std::size_t>(rng.geometric(1.0 / cfg.mean_span));
            for (std::size_t s = std::min(want, cap); s >= 1; --s) {
                std::vector<std::size_t> starts;
                for (std::size_t st = 0; st + s <= len; ++st) {
                    bool ok = true;
                    for (std::size_t t = st; t < st + s && ok; ++t) ok = !blocked[t];
                    if (ok) starts.push_back(st);
                }
                if (starts.empty()) continue;
                std::size_t st = starts[rng.uniform_index(starts.size())];
                chosen.push_back({st, st + s});
                for (std::size_t t = (st == 0 ? 0 : st - 1); t < std::min(len, st + s + 1); ++t)
                    blocked[t] = true;
                break;
            }
        }
        std::sort(chosen.begin(), chosen.end(),
                  [](const NounSpan& a, const NounSpan& b) { return a.start < b.start; });
        out.spans = std::move(chosen);
    }

    MaskedTemplate tmpl{sent, out.spans};
    out.corrupted = tmpl.render();
    for (std::size_t i = 0; i < out.spans.size(); ++i) {
        out.target.emplace_back(Sentinel{static_cast<int>(i)});
        for (std::size_t t = out.spans[i].start; t < out.spans[i].end; ++t)
            out.target.emplace_back(sent.tokens[t]);
    }
    return out;
}

/// Inverse of span_corruption: splice target spans back into the corrupted
/// sequence. Fails on sentinel mismatch.
inline std::vector<Token> reconstruct(const std::vector<SeqItem>& corrupted,
                                      const std::vector<SeqItem>& target) {
    // Split target into per-sentinel token runs.
    std::map<int, std::vector<Token>> fills;
    int current = -1;
    for (const auto& item : target) {
        if (const auto* s = std::get_if<Sentinel>(&item)) {
            current = s->id;
            fills[current];
        } else {
            if (current < 0) throw std::invalid_argument("reconstruct: target starts mid-span");
            fills[current].push_back(std::get<Token>(item));
        }
    }
    std::vector<Token> tokens;
    for (const auto& item : corrupted) {
        if (const auto* s = std::get_if<Sentinel>(&item)) {
            auto it = fills.find(s->id);
            if (it == fills.end()) throw std::invalid_argument("reconstruct: sentinel missing from target");
            tokens.insert(tokens.end(), it->second.begin(), it->second.end());
        } else {
            tokens.push_back(std::get<Token>(item));
        }
    }
    return tokens;
}

// ---------------------------------------------------------------------------
// Add-k n-gram language model over surfaces. Sentence starts are padded with
// a reserved boundary symbol so initial tokens have full-width contexts. The
// baseline generator scores candidate fills with it.
// ---------------------------------------------------------------------------

class NGramLM {
public:
    static constexpr const char* kBos = "<s>";

    NGramLM() = default;
    NGramLM(std::size_t order, double smoothing) : order_(order), smoothing_(smoothing) {
        if (order_ < 1) throw std::invalid_argument("NGramLM: order must be >= 1");
        if (smoothing_ < 0.0) throw std::invalid_argument("NGramLM: smoothing must be >= 0");
    }

    std::size_t order() const { return order_; }
    double smoothing() const { return smoothing_; }
    std::size_t vocab_size() const { return vocab_.size(); }

    const std::vector<std::vector<std::string>>& span_vocabulary() const { return span_vocab_; }

    void observe_sentence(const std::vector<std::string>& surfaces) {
        for (const auto& w : surfaces) vocab_.insert(w);
        std::vector<std::string> padded(order_ - 1, kBos);
        padded.insert(padded.end(), surfaces.begin(), surfaces.end());
        for (std::size_t t = order_ - 1; t < padded.size(); ++t) {
            std::string ctx = join(padded, t - (order_ - 1), t);
            auto& slot = counts_[ctx];
            ++slot.next[padded[t]];
            ++slot.total;
        }
    }

    void add_span_candidate(const std::vector<std::string>& span) {
        std::string key = join(span, 0, span.size());
        if (span_seen_.insert(key).second) span_vocab_.push_back(span);
    }

    double prob(const std::vector<std::string>& context, const std::string& next) const {
        std::string ctx = join(context, context.size() - std::min(context.size(), order_ - 1),
                               context.size());
        double count = 0.0, total = 0.0;
        if (auto it = counts_.find(ctx); it != counts_.end()) {
            total = static_cast<double>(it->second.total);
            if (auto jt = it->second.next.find(next); jt != it->second.next.end())
                count = static_cast<double>(jt->second);
        }
        const double denom = total + smoothing_ * static_cast<double>(vocab_.size());
        if (denom == 0.0) return 0.0;
        return (count + smoothing_) / denom;
    }

    /// Total log-probability of a sentence, BOS-padded.
    double log_prob(const std::vector<std::string>& surfaces) const {
        std::vector<std::string> padded(order_ - 1, kBos);
        padded.insert(padded.end(), surfaces.begin(), surfaces.end());
        double lp = 0.0;
        for (std::size_t t = order_ - 1; t < padded.size(); ++t) {
            std::vector<std::string> ctx(padded.begin(), padded.begin() + static_cast<long>(t));
            const double p = prob(ctx, padded[t]);
            lp += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
        }
        return lp;
    }

    double avg_log_prob(const std::vector<std::string>& surfaces) const {
        if (surfaces.empty()) return 0.0;
        return log_prob(surfaces) / static_cast<double>(surfaces.size());
    }

private:
    struct ContextCounts {
        std::unordered_map<std::string, std::uint64_t> next;
        std::uint64_t total = 0;
    };

    static std::string join(const std::vector<std::string>& v, std::size_t from, std::size_t to) {
        std::string out;
        for (std::size_t i = from; i < to; ++i) {
            out += v[i];
            out += '\x1f';
        }
        return out;
    }

    std::size_t order_ = 1;
    double smoothing_ = 0.0;
    std::unordered_set<std::string> vocab_;
    std::unordered_map<std::string, ContextCounts> counts_;
    std::vector<std::vector<std::string>> span_vocab_;
    std::unordered_set<std::string> span_seen_;
};

/// Counts n-grams and harvests the corpus noun spans as the fill vocabulary.
inline NGramLM train_ngram_lm(const Corpus& corpus, std::size_t order, double smoothing) {
    if (corpus.empty()) throw std::invalid_argument("train_ngram_lm: empty corpus");
    NGramLM lm(order, smoothing);
    for (const auto& sent : corpus.sentences) {
        lm.observe_sentence(sent.surfaces());
        for (const auto& span : extract_noun_spans(sent)) {
            std::vector<std::string> surf;
            for (std::size_t t = span.start; t < span.end; ++t)
                surf.push_back(sent.tokens[t].surface);
            lm.add_span_candidate(surf);
        }
    }
    return lm;
}

// ---------------------------------------------------------------------------
// Beam-search fill-in
// ---------------------------------------------------------------------------

struct FillCandidate {
    std::vector<std::vector<std::string>> fills;  // one surface sequence per sentinel
    double score = 0.0;                           // average per-token log-prob of the assembly
};

/// Replaces each sentinel with the candidate's fill; fill tokens are tagged
/// NOUN. All tokens outside the spans are carried over unchanged.
inline TaggedSentence assemble(const MaskedTemplate& tmpl, const FillCandidate& cand) {
    if (cand.fills.size() != tmpl.sentinel_count())
        throw std::invalid_argument("assemble: candidate not aligned to template");
    for (const auto& fill : cand.fills)
        if (fill.empty()) throw std::invalid_argument("assemble: empty fill");

    TaggedSentence out;
    out.id = tmpl.base.id;
    out.source = "generated";
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < tmpl.spans.size(); ++i) {
        for (; cursor < tmpl.spans[i].start; ++cursor) out.tokens.push_back(tmpl.base.tokens[cursor]);
        for (const auto& w : cand.fills[i]) out.tokens.push_back({w, PosTag::Noun});
        cursor = tmpl.spans[i].end;
    }
    for (; cursor < tmpl.base.tokens.size(); ++cursor) out.tokens.push_back(tmpl.base.tokens[cursor]);
    return out;
}

inline std::vector<std::string> assemble_surfaces(const MaskedTemplate& tmpl,
                                                  const std::vector<std::vector<std::string>>& fills) {
    std::vector<std::string> out;
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < tmpl.spans.size(); ++i) {
        for (; cursor < tmpl.spans[i].start; ++cursor) out.push_back(tmpl.base.tokens[cursor].surface);
        out.insert(out.end(), fills[i].begin(), fills[i].end());
        cursor = tmpl.spans[i].end;
    }
    for (; cursor < tmpl.base.tokens.size(); ++cursor) out.push_back(tmpl.base.tokens[cursor].surface);
    return out;
}

/// Top-m joint fills by beam search over the LM's span vocabulary. Beams are
/// pruned on the log-prob of the assembled prefix; final candidates are
/// rescored as the average per-token log-prob of the whole assembled sentence.
/// The identity fill (every span equal to the original) is excluded: a
/// generated negative must differ from its anchor. Ties break on
/// lexicographic fills for reproducibility.
inline std::vector<FillCandidate> beam_fill(const MaskedTemplate& tmpl, const NGramLM& lm,
                                            std::size_t beam_width, std::size_t m) {
    if (tmpl.sentinel_count() == 0) throw std::invalid_argument("beam_fill: template has no sentinel");
    if (m < 1 || beam_width < m) throw std::invalid_argument("beam_fill: need beam_width >= m >= 1");
    const auto& vocab = lm.span_vocabulary();
    if (vocab.empty()) throw std::domain_error("beam_fill: empty candidate vocabulary");

    const std::size_t n_slots = tmpl.sentinel_count();

    // Base token segments: segment s precedes span s; last segment is the tail.
    std::vector<std::vector<std::string>> segments(n_slots + 1);
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < n_slots; ++i) {
        for (; cursor < tmpl.spans[i].start; ++cursor)
            segments[i].push_back(tmpl.base.tokens[cursor].surface);
        cursor = tmpl.spans[i].end;
    }
    for (; cursor < tmpl.base.tokens.size(); ++cursor)
        segments[n_slots].push_back(tmpl.base.tokens[cursor].surface);

    struct Beam {
        std::vector<std::size_t> choice;    // vocab index per filled slot
        std::vector<std::string> prefix;    // BOS padding + assembled surfaces so far
        double log_prob = 0.0;
    };

    auto extend = [&lm](Beam& b, const std::vector<std::string>& tokens) {
        for (const auto& w : tokens) {
            const double p = lm.prob(b.prefix, w);
            b.log_prob += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
            b.prefix.push_back(w);
        }
    };

    Beam root;
    root.prefix.assign(lm.order() - 1, NGramLM::kBos);
    extend(root, segments[0]);
    std::vector<Beam> beams{std::move(root)};
    const std::size_t bos_pad = lm.order() - 1;

    for (std::size_t slot = 0; slot < n_slots; ++slot) {
        std::vector<Beam> expanded;
        expanded.reserve(beams.size() * vocab.size());
        for (const auto& b : beams) {
            for (std::size_t v = 0; v < vocab.size(); ++v) {
                Beam nb = b;
                nb.choice.push_back(v);
                extend(nb, vocab[v]);
                extend(nb, segments[slot + 1]);
                expanded.push_back(std::move(nb));
            }
        }
        std::stable_sort(expanded.begin(), expanded.end(),
                         [](const Beam& a, const Beam& b) { return a.log_prob > b.log_prob; });
        if (expanded.size() > beam_width) expanded.resize(beam_width);
        beams = std::move(expanded);
    }

    std::vector<std::vector<std::string>> original(n_slots);
    for (std::size_t i = 0; i < n_slots; ++i) original[i] = tmpl.span_surfaces(i);

    std::vector<FillCandidate> results;
    for (const auto& b : beams) {
        FillCandidate cand;
        cand.fills.reserve(n_slots);
        bool identity = true;
        for (std::size_t i = 0; i < n_slots; ++i) {
            cand.fills.push_back(vocab[b.choice[i]]);
            if (cand.fills.back() != original[i]) identity = false;
        }
        if (identity) continue;
        std::vector<std::string> assembled(b.prefix.begin() + static_cast<long>(bos_pad),
                                           b.prefix.end());
        cand.score = lm.avg_log_prob(assembled);
        results.push_back(std::move(cand));
    }
    std::sort(results.begin(), results.end(), [](const FillCandidate& a, const FillCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.fills < b.fills;
    });
    if (results.empty()) throw std::domain_error("beam_fill: no valid negative (identity only)");
    if (results.size() > m) results.resize(m);
    return results;
}

}  // namespace senda
