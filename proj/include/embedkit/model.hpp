#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "embedkit/random.hpp"
#include "embedkit/vocab.hpp"

namespace embedkit {

// Token-embedding lookup table: the entire trainable state. Each row is the
// context vector of one vocabulary entry; a text embedding is the mean of its
// token rows.
struct ModelParams {
    std::uint32_t dim = 0;
    Vocabulary vocab;
    std::vector<double> embedding;  // row-major, vocab.size() x dim

    std::uint32_t vocab_size() const { return vocab.size(); }

    std::span<double> row(std::uint32_t id) {
        return {embedding.data() + static_cast<std::size_t>(id) * dim, dim};
    }
    std::span<const double> row(std::uint32_t id) const {
        return {embedding.data() + static_cast<std::size_t>(id) * dim, dim};
    }
};

inline ModelParams init_params(Vocabulary vocab, std::uint32_t dim, std::uint64_t seed) {
    if (dim < 1) throw std::runtime_error("embedding dim must be >= 1");
    if (vocab.size() < 2) throw std::runtime_error("vocabulary must have at least 2 entries");
    ModelParams params;
    params.dim = dim;
    params.vocab = std::move(vocab);
    params.embedding.resize(static_cast<std::size_t>(params.vocab.size()) * dim);
    Rng rng(seed);
    const double scale = 0.5 / static_cast<double>(dim);
    for (double& w : params.embedding) w = rng.uniform(-scale, scale);
    return params;
}

// Mean pooling over looked-up rows.
inline std::vector<double> encode(const ModelParams& params, const TokenSequence& seq) {
    if (seq.ids.empty()) throw std::runtime_error("empty sequence");
    std::vector<double> out(params.dim, 0.0);
    for (std::uint32_t id : seq.ids) {
        if (id >= params.vocab_size()) throw std::runtime_error("invalid token id");
        const auto r = params.row(id);
        for (std::uint32_t k = 0; k < params.dim; ++k) out[k] += r[k];
    }
    const double inv_n = 1.0 / static_cast<double>(seq.ids.size());
    for (double& v : out) v *= inv_n;
    return out;
}

// Dense gradient buffer with a touched-row list. Reused across optimizer
// steps; clear() only zeroes rows that were written.
class GradBuffer {
public:
    GradBuffer(std::uint32_t vocab_size, std::uint32_t dim)
        : dim_(dim),
          data_(static_cast<std::size_t>(vocab_size) * dim, 0.0),
          is_touched_(vocab_size, 0) {}

    std::uint32_t dim() const { return dim_; }

    void accumulate(std::uint32_t row_id, std::span<const double> grad, double scale) {
        if (grad.size() != dim_) throw std::runtime_error("gradient dimension mismatch");
        if (!is_touched_[row_id]) {
            is_touched_[row_id] = 1;
            touched_.push_back(row_id);
        }
        double* dst = data_.data() + static_cast<std::size_t>(row_id) * dim_;
        for (std::uint32_t k = 0; k < dim_; ++k) dst[k] += grad[k] * scale;
    }

    std::span<const double> row(std::uint32_t row_id) const {
        return {data_.data() + static_cast<std::size_t>(row_id) * dim_, dim_};
    }

    // Touched rows in ascending order; fixed iteration order keeps the
    // optimizer bit-exact run to run.
    std::vector<std::uint32_t> sorted_touched() const {
        std::vector<std::uint32_t> rows = touched_;
        std::sort(rows.begin(), rows.end());
        return rows;
    }

    void clear() {
        for (std::uint32_t row_id : touched_) {
            double* dst = data_.data() + static_cast<std::size_t>(row_id) * dim_;
            std::fill(dst, dst + dim_, 0.0);
            is_touched_[row_id] = 0;
        }
        touched_.clear();
    }

private:
    std::uint32_t dim_;
    std::vector<double> data_;
    std::vector<std::uint32_t> touched_;
    std::vector<std::uint8_t> is_touched_;
};

// Backward pass of mean pooling: every token row of the sequence accumulates
// grad_e / n, one accumulation per occurrence.
inline void encode_backward(const ModelParams& params, const TokenSequence& seq,
                            std::span<const double> grad_e, GradBuffer& grads) {
    if (seq.ids.empty()) throw std::runtime_error("empty sequence");
    if (grad_e.size() != params.dim) throw std::runtime_error("gradient dimension mismatch");
    const double inv_n = 1.0 / static_cast<double>(seq.ids.size());
    for (std::uint32_t id : seq.ids) {
        if (id >= params.vocab_size()) throw std::runtime_error("invalid token id");
        grads.accumulate(id, grad_e, inv_n);
    }
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic, version, dims, vocabulary table, then the
// row-major matrix as little-endian IEEE-754 doubles. Round-trips bit-exact.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'E', 'M', 'B', 'K', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
        throw std::runtime_error(std::string("truncated checkpoint file while reading ") + what);
    return value;
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint file for writing: " + path);
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::write_raw(out, detail::kCheckpointVersion);
    detail::write_raw(out, params.dim);
    detail::write_raw(out, params.vocab.unk_id);
    detail::write_raw(out, params.vocab.query_prefix_id);
    detail::write_raw(out, static_cast<std::uint64_t>(params.vocab_size()));
    for (const auto& tok : params.vocab.id_to_token) {
        detail::write_raw(out, static_cast<std::uint32_t>(tok.size()));
        out.write(tok.data(), static_cast<std::streamsize>(tok.size()));
    }
    out.write(reinterpret_cast<const char*>(params.embedding.data()),
              static_cast<std::streamsize>(params.embedding.size() * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing checkpoint file: " + path);
}

// Loads a checkpoint. When expected_dim is given, a stored dimension that
// differs is rejected instead of silently reshaping downstream state.
inline ModelParams load_checkpoint(const std::string& path,
                                   std::optional<std::uint32_t> expected_dim = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint file: " + path);

    char magic[8];
    if (!in.read(magic, sizeof(magic)) ||
        std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("not a checkpoint file (bad magic); expected EMBKCKPT format v" +
                                 std::to_string(detail::kCheckpointVersion));
    const auto version = detail::read_raw<std::uint32_t>(in, "version");
    if (version != detail::kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint format version " + std::to_string(version) +
                                 "; this build reads version " +
                                 std::to_string(detail::kCheckpointVersion));

    ModelParams params;
    params.dim = detail::read_raw<std::uint32_t>(in, "dim");
    if (params.dim < 1) throw std::runtime_error("corrupt checkpoint: dim must be >= 1");
    if (expected_dim && *expected_dim != params.dim)
        throw std::runtime_error("checkpoint dimension mismatch: file has dim " +
                                 std::to_string(params.dim) + ", expected " +
                                 std::to_string(*expected_dim));
    params.vocab.unk_id = detail::read_raw<std::uint32_t>(in, "unk_id");
    params.vocab.query_prefix_id = detail::read_raw<std::uint32_t>(in, "query_prefix_id");
    const auto vocab_size = detail::read_raw<std::uint64_t>(in, "vocab size");
    if (vocab_size < 2) throw std::runtime_error("corrupt checkpoint: vocabulary too small");
    params.vocab.id_to_token.reserve(vocab_size);
    for (std::uint64_t id = 0; id < vocab_size; ++id) {
        const auto len = detail::read_raw<std::uint32_t>(in, "token length");
        std::string tok(len, '\0');
        if (!in.read(tok.data(), len))
            throw std::runtime_error("truncated checkpoint file while reading vocabulary");
        params.vocab.token_to_id.emplace(tok, static_cast<std::uint32_t>(id));
        params.vocab.id_to_token.push_back(std::move(tok));
    }
    if (params.vocab.unk_id >= vocab_size || params.vocab.query_prefix_id >= vocab_size ||
        params.vocab.unk_id == params.vocab.query_prefix_id)
        throw std::runtime_error("corrupt checkpoint: reserved token ids out of range");

    params.embedding.resize(static_cast<std::size_t>(vocab_size) * params.dim);
    if (!in.read(reinterpret_cast<char*>(params.embedding.data()),
                 static_cast<std::streamsize>(params.embedding.size() * sizeof(double))))
        throw std::runtime_error("truncated checkpoint file while reading embedding matrix");
    for (double w : params.embedding) {
        if (!std::isfinite(w)) throw std::runtime_error("corrupt checkpoint: non-finite weight");
    }
    return params;
}

}  // namespace embedkit
