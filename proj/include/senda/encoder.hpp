#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "senda/corpus.hpp"
#include "senda/errors.hpp"
#include "senda/rng.hpp"

namespace senda {

using Embedding = Eigen::VectorXd;

inline double cosine(const Embedding& u, const Embedding& v) {
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) throw std::domain_error("cosine: zero-norm embedding");
    return u.dot(v) / (nu * nv);
}

/// Trainable embedding-table + mean-pool + affine + tanh encoder. Stands in
/// for a full backbone: small enough to differentiate by hand, expressive
/// enough for contrastive adaptation to move similarities around.
class ToyEncoder {
public:
    static constexpr const char* kUnkSurface = "<unk>";

    ToyEncoder() = default;

    ToyEncoder(std::vector<std::string> vocabulary, int width, double dropout_rate)
        : surfaces_(std::move(vocabulary)), dropout_rate_(dropout_rate) {
        if (width < 2) throw std::invalid_argument("ToyEncoder: width must be >= 2");
        if (!(dropout_rate_ >= 0.0 && dropout_rate_ < 1.0))
            throw std::invalid_argument("ToyEncoder: dropout rate must be in [0, 1)");
        for (std::size_t i = 0; i < surfaces_.size(); ++i) index_.emplace(surfaces_[i], i);
        embedding_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(surfaces_.size()), width);
        projection_ = Eigen::MatrixXd::Zero(width, width);
        bias_ = Eigen::VectorXd::Zero(width);
    }

    int width() const { return static_cast<int>(bias_.size()); }
    std::size_t vocab_size() const { return surfaces_.size(); }
    double dropout_rate() const { return dropout_rate_; }
    const std::vector<std::string>& vocabulary() const { return surfaces_; }

    Eigen::MatrixXd& embedding() { return embedding_; }
    const Eigen::MatrixXd& embedding() const { return embedding_; }
    Eigen::MatrixXd& projection() { return projection_; }
    const Eigen::MatrixXd& projection() const { return projection_; }
    Eigen::VectorXd& bias() { return bias_; }
    const Eigen::VectorXd& bias() const { return bias_; }

    /// Index of a surface form, UNK (row 0) when out of vocabulary.
    int token_index(const std::string& surface) const {
        auto it = index_.find(surface);
        return it == index_.end() ? 0 : static_cast<int>(it->second);
    }

    std::vector<int> token_indices(const TaggedSentence& sent) const {
        std::vector<int> idx;
        idx.reserve(sent.tokens.size());
        for (const auto& tok : sent.tokens) idx.push_back(token_index(tok.surface));
        return idx;
    }

    /// Mean of token embedding rows.
    Embedding pooled(const TaggedSentence& sent) const {
        if (sent.tokens.empty()) throw std::invalid_argument("encode: empty sentence");
        Embedding m = Embedding::Zero(width());
        for (const auto& tok : sent.tokens) m += embedding_.row(token_index(tok.surface));
        return m / static_cast<double>(sent.tokens.size());
    }

    /// Inverted dropout on the pooled vector: units zeroed with probability p,
    /// survivors scaled by 1/(1-p). Expectation equals pooled().
    Embedding pooled_dropout(const TaggedSentence& sent, Rng& rng) const {
        Embedding m = pooled(sent);
        if (dropout_rate_ == 0.0) return m;
        const double scale = 1.0 / (1.0 - dropout_rate_);
        for (Eigen::Index c = 0; c < m.size(); ++c)
            m[c] = rng.bernoulli(dropout_rate_) ? 0.0 : m[c] * scale;
        return m;
    }

    Embedding project(const Embedding& pooled_vec) const {
        return (projection_ * pooled_vec + bias_).array().tanh();
    }

    Embedding encode(const TaggedSentence& sent) const { return project(pooled(sent)); }

    Embedding encode_dropout(const TaggedSentence& sent, Rng& rng) const {
        return project(pooled_dropout(sent, rng));
    }

private:
    std::vector<std::string> surfaces_;
    std::unordered_map<std::string, std::size_t> index_;
    Eigen::MatrixXd embedding_;   // V x C
    Eigen::MatrixXd projection_;  // C x C
    Eigen::VectorXd bias_;        // C
    double dropout_rate_ = 0.1;
};

/// Vocabulary = UNK + corpus surfaces in first-occurrence order; parameters
/// uniform in [-0.1, 0.1], drawn embedding rows first, then projection, then
/// bias, all row-major.
inline ToyEncoder init_encoder(const Corpus& corpus, int width, std::uint64_t seed,
                               double dropout_rate = 0.1) {
    if (corpus.empty()) throw std::invalid_argument("init_encoder: empty corpus");
    std::vector<std::string> vocab{ToyEncoder::kUnkSurface};
    std::unordered_map<std::string, bool> seen{{ToyEncoder::kUnkSurface, true}};
    for (const auto& sent : corpus.sentences)
        for (const auto& tok : sent.tokens)
            if (seen.emplace(tok.surface, true).second) vocab.push_back(tok.surface);

    ToyEncoder enc(std::move(vocab), width, dropout_rate);
    Rng rng(seed);
    for (Eigen::Index r = 0; r < enc.embedding().rows(); ++r)
        for (Eigen::Index c = 0; c < enc.embedding().cols(); ++c)
            enc.embedding()(r, c) = rng.uniform(-0.1, 0.1);
    for (Eigen::Index r = 0; r < enc.projection().rows(); ++r)
        for (Eigen::Index c = 0; c < enc.projection().cols(); ++c)
            enc.projection()(r, c) = rng.uniform(-0.1, 0.1);
    for (Eigen::Index c = 0; c < enc.bias().size(); ++c) enc.bias()[c] = rng.uniform(-0.1, 0.1);
    return enc;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON with header (V, C, p, vocabulary) then row-major matrices.
// nlohmann serializes doubles with round-trip precision, so save/load is exact.
// ---------------------------------------------------------------------------

inline nlohmann::json encoder_to_json(const ToyEncoder& enc) {
    nlohmann::json j;
    j["format"] = "senda-encoder";
    j["version"] = 1;
    j["vocab_size"] = enc.vocab_size();
    j["width"] = enc.width();
    j["dropout_rate"] = enc.dropout_rate();
    j["vocabulary"] = enc.vocabulary();
    auto flatten = [](const Eigen::MatrixXd& m) {
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
        return v;
    };
    j["embedding"] = flatten(enc.embedding());
    j["projection"] = flatten(enc.projection());
    j["bias"] = std::vector<double>(enc.bias().data(), enc.bias().data() + enc.bias().size());
    return j;
}

inline ToyEncoder encoder_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "senda-encoder")
        throw ParseError("not an encoder checkpoint");
    auto vocab = j.at("vocabulary").get<std::vector<std::string>>();
    const int width = j.at("width").get<int>();
    ToyEncoder enc(std::move(vocab), width, j.at("dropout_rate").get<double>());

    auto unflatten = [](Eigen::MatrixXd& m, const nlohmann::json& arr) {
        if (arr.size() != static_cast<std::size_t>(m.size()))
            throw ParseError("checkpoint matrix size mismatch");
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = arr[k++].get<double>();
    };
    unflatten(enc.embedding(), j.at("embedding"));
    unflatten(enc.projection(), j.at("projection"));
    const auto& b = j.at("bias");
    if (b.size() != static_cast<std::size_t>(width)) throw ParseError("checkpoint bias size mismatch");
    for (Eigen::Index c = 0; c < width; ++c) enc.bias()[c] = b[c].get<double>();
    return enc;
}

inline void save_encoder(const std::string& path, const ToyEncoder& enc) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write checkpoint: " + path);
    out << encoder_to_json(enc).dump(2) << '\n';
}

inline ToyEncoder load_encoder(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint JSON: ") + e.what());
    }
    return encoder_from_json(j);
}

// ---------------------------------------------------------------------------
// External embeddings escape hatch: TSV of `id<TAB>f1<TAB>...<TAB>fC`, so
// evaluation and analysis can run on vectors from a real backbone.
// ---------------------------------------------------------------------------

struct EmbeddingTable {
    std::vector<std::string> ids;
    std::vector<Embedding> vectors;

    const Embedding* lookup(const std::string& id) const {
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == id) return &vectors[i];
        return nullptr;
    }
};

inline EmbeddingTable read_embeddings_tsv(std::istream& in) {
    EmbeddingTable table;
    std::string line;
    std::size_t line_no = 0;
    Eigen::Index width = -1;
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
        if (fields.size() < 2) throw ParseError("embedding row needs id and values", line_no);
        Embedding v(static_cast<Eigen::Index>(fields.size() - 1));
        for (std::size_t k = 1; k < fields.size(); ++k) {
            try {
                v[static_cast<Eigen::Index>(k - 1)] = std::stod(fields[k]);
            } catch (const std::exception&) {
                throw ParseError("bad float \"" + fields[k] + "\"", line_no);
            }
        }
        if (width < 0) width = v.size();
        if (v.size() != width) throw ParseError("inconsistent embedding width", line_no);
        table.ids.push_back(fields[0]);
        table.vectors.push_back(std::move(v));
    }
    return table;
}

inline EmbeddingTable load_embeddings_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open embeddings file: " + path);
    return read_embeddings_tsv(in);
}

}  // namespace senda
