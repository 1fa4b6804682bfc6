#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace embedkit {

enum class LossVariant { kInfoNCE, kWeighted };

inline const char* to_string(LossVariant v) {
    return v == LossVariant::kInfoNCE ? "infonce" : "weighted";
}

inline LossVariant parse_loss_variant(const std::string& s) {
    if (s == "infonce") return LossVariant::kInfoNCE;
    if (s == "weighted") return LossVariant::kWeighted;
    throw std::runtime_error("unknown loss variant '" + s + "'; expected infonce or weighted");
}

struct LossConfig {
    double temperature = 0.1;
    LossVariant variant = LossVariant::kInfoNCE;
};

// One positive score and at least one negative score for a single anchor.
struct SimilarityScores {
    double positive = 0.0;
    std::vector<double> negatives;
};

struct LossOutput {
    double loss = 0.0;
    double p_plus = 0.0;
    double grad_positive = 0.0;             // dL/ds+
    std::vector<double> grad_negatives;     // dL/ds- per negative
};

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::runtime_error("dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    if (na == 0.0 || nb == 0.0) throw std::runtime_error("zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace detail {

// Softmax over {positive} ∪ negatives at temperature tau, with max-score
// subtraction. log_p_plus stays finite for any finite scores, so the loss and
// the p*log(p) products never produce NaN even when p saturates to 0 or 1.
struct ScoreDistribution {
    double p_plus = 0.0;
    double log_p_plus = 0.0;
    std::vector<double> neg_probs;
};

inline ScoreDistribution score_distribution(const SimilarityScores& scores, double tau) {
    if (tau <= 0.0) throw std::runtime_error("temperature must be > 0");
    if (scores.negatives.empty()) throw std::runtime_error("at least one negative score required");
    const double inv_tau = 1.0 / tau;
    double max_z = scores.positive * inv_tau;
    for (double s : scores.negatives) max_z = std::max(max_z, s * inv_tau);

    ScoreDistribution dist;
    dist.neg_probs.resize(scores.negatives.size());
    const double pos_exp = std::exp(scores.positive * inv_tau - max_z);
    double denom = pos_exp;
    for (std::size_t j = 0; j < scores.negatives.size(); ++j) {
        dist.neg_probs[j] = std::exp(scores.negatives[j] * inv_tau - max_z);
        denom += dist.neg_probs[j];
    }
    const double log_denom = std::log(denom);
    dist.log_p_plus = scores.positive * inv_tau - max_z - log_denom;
    dist.p_plus = std::exp(dist.log_p_plus);
    for (double& q : dist.neg_probs) q /= denom;
    return dist;
}

}  // namespace detail

inline double positive_probability(const SimilarityScores& scores, double tau) {
    return detail::score_distribution(scores, tau).p_plus;
}

// L = -log(p+). Gradients: dL/ds+ = -(1-p+)/tau, dL/ds-_j = p_j/tau.
inline LossOutput infonce_loss(const SimilarityScores& scores, double tau) {
    const auto dist = detail::score_distribution(scores, tau);
    LossOutput out;
    out.p_plus = dist.p_plus;
    out.loss = -dist.log_p_plus;
    out.grad_positive = -(1.0 - dist.p_plus) / tau;
    out.grad_negatives.resize(dist.neg_probs.size());
    for (std::size_t j = 0; j < dist.neg_probs.size(); ++j)
        out.grad_negatives[j] = dist.neg_probs[j] / tau;
    return out;
}

// L = -log(p+) * (1-p+). By the product rule the score gradient is the
// InfoNCE gradient scaled by w(p+) = (1-p+) - p+*log(p+), which crosses 1 at
// p+ = 1/e: confident examples are damped, uncertain ones slightly amplified.
inline LossOutput weighted_loss(const SimilarityScores& scores, double tau) {
    const auto dist = detail::score_distribution(scores, tau);
    LossOutput out;
    out.p_plus = dist.p_plus;
    out.loss = -dist.log_p_plus * (1.0 - dist.p_plus);
    const double weight = (1.0 - dist.p_plus) - dist.p_plus * dist.log_p_plus;
    out.grad_positive = weight * (-(1.0 - dist.p_plus) / tau);
    out.grad_negatives.resize(dist.neg_probs.size());
    for (std::size_t j = 0; j < dist.neg_probs.size(); ++j)
        out.grad_negatives[j] = weight * (dist.neg_probs[j] / tau);
    return out;
}

inline LossOutput compute_loss(const SimilarityScores& scores, const LossConfig& cfg) {
    return cfg.variant == LossVariant::kInfoNCE ? infonce_loss(scores, cfg.temperature)
                                                : weighted_loss(scores, cfg.temperature);
}

namespace detail {

// d cos(a,b) / da = b/(|a||b|) - cos(a,b) * a/|a|^2
inline void add_cosine_grad_wrt_a(std::span<const double> a, std::span<const double> b,
                                  double upstream, std::span<double> grad_a) {
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na2 += a[k] * a[k];
        nb2 += b[k] * b[k];
    }
    if (na2 == 0.0 || nb2 == 0.0) throw std::runtime_error("zero vector");
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    const double c = dot / (na * nb);
    const double inv_nanb = 1.0 / (na * nb);
    const double c_over_na2 = c / na2;
    for (std::size_t k = 0; k < a.size(); ++k)
        grad_a[k] += upstream * (b[k] * inv_nanb - c_over_na2 * a[k]);
}

}  // namespace detail

// One anchor's loss and embedding gradients against a candidate list where
// candidates[positive_index] is the positive. Gradients accumulate in place.
namespace detail {

inline double scored_group_loss(std::span<const double> anchor,
                                std::span<const std::vector<double>> candidates,
                                std::size_t positive_index, const LossConfig& cfg, double scale,
                                std::span<double> grad_anchor,
                                std::span<std::vector<double>> grad_candidates) {
    SimilarityScores scores;
    scores.negatives.reserve(candidates.size() - 1);
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        const double s = cosine_similarity(anchor, candidates[j]);
        if (j == positive_index) {
            scores.positive = s;
        } else {
            scores.negatives.push_back(s);
        }
    }
    const LossOutput out = compute_loss(scores, cfg);

    std::size_t neg_slot = 0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        const double upstream =
            (j == positive_index ? out.grad_positive : out.grad_negatives[neg_slot++]) * scale;
        detail::add_cosine_grad_wrt_a(anchor, candidates[j], upstream, grad_anchor);
        detail::add_cosine_grad_wrt_a(candidates[j], anchor, upstream, grad_candidates[j]);
    }
    return out.loss;
}

}  // namespace detail

struct BatchLoss {
    double loss = 0.0;  // arithmetic mean over anchors
    std::vector<std::vector<double>> grad_queries;
    std::vector<std::vector<double>> grad_docs;
};

// In-batch negatives: anchor i scores all documents; d_i is the positive and
// every d_j (j != i) a negative. Colliding duplicate documents are kept as-is.
inline BatchLoss in_batch_loss(std::span<const std::vector<double>> query_embs,
                               std::span<const std::vector<double>> doc_embs,
                               const LossConfig& cfg) {
    const std::size_t n = query_embs.size();
    if (n < 2) throw std::runtime_error("batch too small for in-batch negatives");
    if (doc_embs.size() != n) throw std::runtime_error("query/document batch size mismatch");
    const std::size_t dim = query_embs[0].size();

    BatchLoss batch;
    batch.grad_queries.assign(n, std::vector<double>(dim, 0.0));
    batch.grad_docs.assign(n, std::vector<double>(dim, 0.0));
    const double scale = 1.0 / static_cast<double>(n);

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (query_embs[i].size() != dim || doc_embs[i].size() != dim)
            throw std::runtime_error("dimension mismatch");
        total += detail::scored_group_loss(query_embs[i], doc_embs, i, cfg, scale,
                                           batch.grad_queries[i],
                                           std::span<std::vector<double>>(batch.grad_docs));
    }
    batch.loss = total * scale;
    return batch;
}

struct TripletLoss {
    double loss = 0.0;
    std::vector<double> grad_anchor;
    std::vector<double> grad_positive;
    std::vector<std::vector<double>> grad_negatives;
};

// Curated-hard-negative group: one anchor, its positive, explicit negatives.
inline TripletLoss triplet_group_loss(std::span<const double> anchor_emb,
                                      std::span<const double> positive_emb,
                                      std::span<const std::vector<double>> negative_embs,
                                      const LossConfig& cfg) {
    if (negative_embs.empty()) throw std::runtime_error("triplet requires at least one negative");
    const std::size_t dim = anchor_emb.size();
    if (positive_emb.size() != dim) throw std::runtime_error("dimension mismatch");

    std::vector<std::vector<double>> candidates;
    candidates.reserve(negative_embs.size() + 1);
    candidates.emplace_back(positive_emb.begin(), positive_emb.end());
    for (const auto& neg : negative_embs) {
        if (neg.size() != dim) throw std::runtime_error("dimension mismatch");
        candidates.push_back(neg);
    }

    TripletLoss out;
    out.grad_anchor.assign(dim, 0.0);
    std::vector<std::vector<double>> grad_candidates(candidates.size(),
                                                     std::vector<double>(dim, 0.0));
    out.loss = detail::scored_group_loss(anchor_emb, candidates, 0, cfg, 1.0, out.grad_anchor,
                                         grad_candidates);
    out.grad_positive = std::move(grad_candidates[0]);
    out.grad_negatives.assign(grad_candidates.begin() + 1, grad_candidates.end());
    return out;
}

}  // namespace embedkit
