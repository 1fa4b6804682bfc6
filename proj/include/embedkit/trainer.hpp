#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "embedkit/data.hpp"
#include "embedkit/model.hpp"
#include "embedkit/objectives.hpp"
#include "embedkit/optimizer.hpp"
#include "embedkit/random.hpp"

namespace embedkit {

enum class Regime { kInBatch, kHardNegative };

inline const char* to_string(Regime r) {
    return r == Regime::kInBatch ? "in_batch" : "hard_negative";
}

inline Regime parse_regime(const std::string& s) {
    if (s == "in_batch" || s == "in-batch") return Regime::kInBatch;
    if (s == "hard_negative" || s == "hard-negative") return Regime::kHardNegative;
    throw std::runtime_error("unknown regime '" + s + "'; expected in-batch or hard-negative");
}

struct TrainConfig {
    std::size_t batch_size = 32;
    double learning_rate = 5e-5;
    std::size_t epochs = 3;
    double temperature = 0.1;
    LossVariant variant = LossVariant::kInfoNCE;
    Regime regime = Regime::kInBatch;
    std::uint64_t seed = 42;
    std::size_t max_len = 224;
    std::size_t min_len = 1;
};

struct TrainResult {
    std::vector<double> epoch_mean_loss;  // one entry per epoch
    std::size_t dropped_singletons = 0;   // size-1 in-batch remainders skipped
};

namespace detail {

inline void validate_train_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::runtime_error("epochs must be >= 1");
    if (cfg.temperature <= 0.0) throw std::runtime_error("temperature must be > 0");
    if (cfg.learning_rate <= 0.0) throw std::runtime_error("learning rate must be > 0");
    if (cfg.regime == Regime::kInBatch && cfg.batch_size < 2)
        throw std::runtime_error("batch_size must be >= 2 for the in-batch regime");
    if (cfg.batch_size < 1) throw std::runtime_error("batch_size must be >= 1");
}

// Shuffle order for one epoch; the run seed is advanced per epoch so batch
// composition differs across epochs but is fixed for a given (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t count, const Rng& root,
                                            std::size_t epoch) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    Rng rng = root.fork(epoch);
    rng.shuffle(order);
    return order;
}

}  // namespace detail

// In-batch negative training over anchor/positive pairs. Anchors are
// tokenized with the query role, positives with the document role.
inline TrainResult train(ModelParams& params, std::span<const PairExample> examples,
                         const TrainConfig& cfg) {
    detail::validate_train_config(cfg);
    if (cfg.regime != Regime::kInBatch)
        throw std::runtime_error(
            "regime/data mismatch: hard_negative regime expects triplet examples");
    if (examples.empty()) throw std::runtime_error("no training examples");

    std::vector<TokenSequence> anchors, positives;
    anchors.reserve(examples.size());
    positives.reserve(examples.size());
    for (const auto& ex : examples) {
        anchors.push_back(tokenize(params.vocab, ex.anchor, Role::kQuery, cfg.max_len));
        positives.push_back(tokenize(params.vocab, ex.positive, Role::kDocument, cfg.max_len));
    }

    const LossConfig loss_cfg{cfg.temperature, cfg.variant};
    Rng root(cfg.seed);
    OptimizerState opt = OptimizerState::for_params(params);
    GradBuffer grads(params.vocab_size(), params.dim);

    TrainResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = detail::epoch_order(examples.size(), root, epoch);
        double loss_sum = 0.0;
        std::size_t anchors_seen = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            const std::size_t batch_n = end - start;
            if (batch_n < 2) {
                ++result.dropped_singletons;
                continue;
            }
            std::vector<std::vector<double>> query_embs(batch_n), doc_embs(batch_n);
            for (std::size_t b = 0; b < batch_n; ++b) {
                query_embs[b] = encode(params, anchors[order[start + b]]);
                doc_embs[b] = encode(params, positives[order[start + b]]);
            }
            const BatchLoss batch = in_batch_loss(query_embs, doc_embs, loss_cfg);

            grads.clear();
            for (std::size_t b = 0; b < batch_n; ++b) {
                encode_backward(params, anchors[order[start + b]], batch.grad_queries[b], grads);
                encode_backward(params, positives[order[start + b]], batch.grad_docs[b], grads);
            }
            optimizer_step(params, grads, opt, cfg.learning_rate);

            loss_sum += batch.loss * static_cast<double>(batch_n);
            anchors_seen += batch_n;
        }
        if (anchors_seen == 0)
            throw std::runtime_error("batch too small for in-batch negatives");
        result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(anchors_seen));
    }
    return result;
}

// Curated-hard-negative training over triplet groups. Triplets are
// mini-batched for the optimizer but each one scores only its own negatives.
inline TrainResult train(ModelParams& params, std::span<const TripletExample> examples,
                         const TrainConfig& cfg) {
    detail::validate_train_config(cfg);
    if (cfg.regime != Regime::kHardNegative)
        throw std::runtime_error("regime/data mismatch: in_batch regime expects pair examples");
    if (examples.empty()) throw std::runtime_error("no training examples");

    struct TokenizedTriplet {
        TokenSequence anchor;
        TokenSequence positive;
        std::vector<TokenSequence> negatives;
    };
    std::vector<TokenizedTriplet> tokenized;
    tokenized.reserve(examples.size());
    for (const auto& ex : examples) {
        if (ex.negatives.empty())
            throw std::runtime_error(
                "triplet has no negatives; run negative completion before training");
        TokenizedTriplet t;
        t.anchor = tokenize(params.vocab, ex.anchor, Role::kQuery, cfg.max_len);
        t.positive = tokenize(params.vocab, ex.positive, Role::kDocument, cfg.max_len);
        for (const auto& neg : ex.negatives)
            t.negatives.push_back(tokenize(params.vocab, neg, Role::kDocument, cfg.max_len));
        tokenized.push_back(std::move(t));
    }

    const LossConfig loss_cfg{cfg.temperature, cfg.variant};
    Rng root(cfg.seed);
    OptimizerState opt = OptimizerState::for_params(params);
    GradBuffer grads(params.vocab_size(), params.dim);

    TrainResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = detail::epoch_order(examples.size(), root, epoch);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            const std::size_t batch_n = end - start;
            const double scale = 1.0 / static_cast<double>(batch_n);

            grads.clear();
            for (std::size_t b = 0; b < batch_n; ++b) {
                const auto& t = tokenized[order[start + b]];
                const auto anchor_emb = encode(params, t.anchor);
                const auto positive_emb = encode(params, t.positive);
                std::vector<std::vector<double>> negative_embs;
                negative_embs.reserve(t.negatives.size());
                for (const auto& neg : t.negatives) negative_embs.push_back(encode(params, neg));

                const TripletLoss out =
                    triplet_group_loss(anchor_emb, positive_emb, negative_embs, loss_cfg);
                loss_sum += out.loss;

                std::vector<double> scaled(params.dim);
                auto add_scaled = [&](const TokenSequence& seq, const std::vector<double>& g) {
                    for (std::uint32_t k = 0; k < params.dim; ++k) scaled[k] = g[k] * scale;
                    encode_backward(params, seq, scaled, grads);
                };
                add_scaled(t.anchor, out.grad_anchor);
                add_scaled(t.positive, out.grad_positive);
                for (std::size_t j = 0; j < t.negatives.size(); ++j)
                    add_scaled(t.negatives[j], out.grad_negatives[j]);
            }
            optimizer_step(params, grads, opt, cfg.learning_rate);
        }
        result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(examples.size()));
    }
    return result;
}

}  // namespace embedkit
