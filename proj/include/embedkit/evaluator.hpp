#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "embedkit/datasets.hpp"
#include "embedkit/model.hpp"
#include "embedkit/objectives.hpp"
#include "embedkit/trainer.hpp"

namespace embedkit {

namespace detail {

// Index-parallel map: each worker claims indices from a shared counter and
// writes into its own slot, so results do not depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> workers;
    const std::size_t count = std::min(jobs, n);
    workers.reserve(count);
    for (std::size_t i = 0; i < count; ++i) workers.emplace_back(worker);
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
}

inline std::string format_metric(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", value);
    return buf;
}

// Shortest round-trip decimal form, e.g. 0.1 stays "0.1".
inline std::string format_number(double value) { return nlohmann::json(value).dump(); }

inline std::string render_aligned(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], row[c].size());
    }
    std::string out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out += row[c];
            if (c + 1 < row.size())
                out += std::string(widths[c] - row[c].size() + 2, ' ');
        }
        out += '\n';
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ranking primitives
// ---------------------------------------------------------------------------

struct DocEmbedding {
    std::string doc_id;
    std::vector<double> embedding;
};

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
};

struct RankedResult {
    std::string query_id;
    std::vector<ScoredDoc> hits;   // score descending, doc_id ascending on ties
    bool k_clamped = false;        // k exceeded the corpus size
};

// Exact brute-force top-k by cosine similarity.
inline RankedResult top_k(std::span<const double> query_emb, std::span<const DocEmbedding> corpus,
                          std::size_t k, std::string query_id = {}) {
    if (k < 1) throw std::runtime_error("k must be >= 1");
    if (corpus.empty()) throw std::runtime_error("empty corpus");

    RankedResult result;
    result.query_id = std::move(query_id);
    if (k > corpus.size()) {
        result.k_clamped = true;
        k = corpus.size();
    }
    result.hits.reserve(corpus.size());
    for (const auto& doc : corpus)
        result.hits.push_back({doc.doc_id, cosine_similarity(query_emb, doc.embedding)});
    auto better = [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    };
    std::partial_sort(result.hits.begin(), result.hits.begin() + static_cast<std::ptrdiff_t>(k),
                      result.hits.end(), better);
    result.hits.resize(k);
    return result;
}

// ---------------------------------------------------------------------------
// Retrieval: accuracy@k over a full corpus
// ---------------------------------------------------------------------------

struct RetrievalReport {
    std::map<std::size_t, double> accuracy_at;
    std::vector<std::size_t> gold_ranks;  // 1-based, aligned with corpus query order
    std::size_t corpus_size = 0;
    std::string model_id;
    double mrr = 0.0;  // supplementary metric, not part of the headline protocol
};

inline RetrievalReport accuracy_at_k(const ModelParams& params, const RetrievalCorpus& corpus,
                                     const std::vector<std::size_t>& k_values = {5, 10, 20},
                                     std::size_t max_len = 224, std::size_t jobs = 1,
                                     std::string model_id = {}) {
    corpus.validate();
    if (corpus.queries.empty()) throw std::runtime_error("retrieval task has no queries");
    if (k_values.empty()) throw std::runtime_error("k_values must not be empty");

    std::vector<std::vector<double>> doc_embs(corpus.documents.size());
    std::unordered_map<std::string, std::size_t> doc_index;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i)
        doc_index.emplace(corpus.documents[i].doc_id, i);
    detail::parallel_for(corpus.documents.size(), jobs, [&](std::size_t i) {
        doc_embs[i] = encode(
            params, tokenize(params.vocab, corpus.documents[i].text, Role::kDocument, max_len));
    });

    RetrievalReport report;
    report.corpus_size = corpus.documents.size();
    report.model_id = std::move(model_id);
    report.gold_ranks.assign(corpus.queries.size(), 0);

    detail::parallel_for(corpus.queries.size(), jobs, [&](std::size_t qi) {
        const auto& query = corpus.queries[qi];
        const auto query_emb =
            encode(params, tokenize(params.vocab, query.text, Role::kQuery, max_len));
        const std::size_t gold = doc_index.at(query.gold_doc_id);
        const double gold_score = cosine_similarity(query_emb, doc_embs[gold]);
        // Rank = 1 + number of documents ordered strictly ahead of the gold
        // document under (score desc, doc_id asc).
        std::size_t ahead = 0;
        for (std::size_t di = 0; di < doc_embs.size(); ++di) {
            if (di == gold) continue;
            const double score = cosine_similarity(query_emb, doc_embs[di]);
            if (score > gold_score ||
                (score == gold_score &&
                 corpus.documents[di].doc_id < corpus.documents[gold].doc_id))
                ++ahead;
        }
        report.gold_ranks[qi] = ahead + 1;
    });

    const double n = static_cast<double>(corpus.queries.size());
    for (std::size_t k : k_values) {
        std::size_t hits = 0;
        for (std::size_t rank : report.gold_ranks)
            if (rank <= k) ++hits;
        report.accuracy_at[k] = static_cast<double>(hits) / n;
    }
    double reciprocal_sum = 0.0;
    for (std::size_t rank : report.gold_ranks) reciprocal_sum += 1.0 / static_cast<double>(rank);
    report.mrr = reciprocal_sum / n;
    return report;
}

// ---------------------------------------------------------------------------
// Reranking: mean average precision
// ---------------------------------------------------------------------------

inline double average_precision(const std::vector<bool>& ranked_labels) {
    std::size_t positives = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < ranked_labels.size(); ++i) {
        if (!ranked_labels[i]) continue;
        ++positives;
        sum += static_cast<double>(positives) / static_cast<double>(i + 1);
    }
    if (positives == 0) throw std::runtime_error("undefined AP");
    return sum / static_cast<double>(positives);
}

struct RerankReport {
    double map = 0.0;
    std::vector<double> per_query_ap;
    std::size_t instance_count = 0;
};

inline RerankReport evaluate_rerank(const ModelParams& params,
                                    std::span<const RerankInstance> instances,
                                    std::size_t max_len = 224, std::size_t jobs = 1) {
    if (instances.empty()) throw std::runtime_error("rerank task has no instances");
    RerankReport report;
    report.instance_count = instances.size();
    report.per_query_ap.assign(instances.size(), 0.0);

    detail::parallel_for(instances.size(), jobs, [&](std::size_t ii) {
        const auto& inst = instances[ii];
        if (inst.positives.empty())
            throw std::runtime_error("undefined AP: rerank instance has no positives");
        const auto query_emb =
            encode(params, tokenize(params.vocab, inst.query, Role::kQuery, max_len));
        std::vector<double> scores;
        scores.reserve(inst.positives.size() + inst.negatives.size());
        for (const auto& text : inst.positives)
            scores.push_back(cosine_similarity(
                query_emb, encode(params, tokenize(params.vocab, text, Role::kDocument, max_len))));
        for (const auto& text : inst.negatives)
            scores.push_back(cosine_similarity(
                query_emb, encode(params, tokenize(params.vocab, text, Role::kDocument, max_len))));

        std::vector<std::size_t> order(scores.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return a < b;
        });
        std::vector<bool> labels(order.size());
        for (std::size_t rank = 0; rank < order.size(); ++rank)
            labels[rank] = order[rank] < inst.positives.size();
        report.per_query_ap[ii] = average_precision(labels);
    });

    double sum = 0.0;
    for (double ap : report.per_query_ap) sum += ap;
    report.map = sum / static_cast<double>(report.per_query_ap.size());
    return report;
}

// ---------------------------------------------------------------------------
// Temperature sweep
// ---------------------------------------------------------------------------

struct SweepData {
    std::vector<PairExample> train_pairs;
    std::vector<TripletExample> train_triplets;
    RetrievalCorpus retrieval;
    std::vector<RerankInstance> rerank;
};

struct SweepPoint {
    double temperature = 0.0;
    Regime regime = Regime::kInBatch;
    LossVariant variant = LossVariant::kInfoNCE;
    RetrievalReport retrieval;
    RerankReport rerank;
    std::vector<double> epoch_mean_loss;
};

struct SweepReport {
    std::uint64_t seed = 0;
    std::size_t dim = 0;
    TrainConfig base;
    std::vector<std::size_t> k_values;
    std::vector<SweepPoint> points;
};

// Trains one model per (τ, regime, variant) grid point, always from the same
// vocabulary and the same seeded initialization, then scores retrieval and
// reranking. Grid points are independent; the report depends only on
// (seed, data, grid).
inline SweepReport sweep_temperature(
    const TrainConfig& base, std::size_t dim, std::span<const double> taus,
    std::span<const Regime> regimes, std::span<const LossVariant> variants,
    const SweepData& data, const std::vector<std::size_t>& k_values = {5, 10, 20},
    std::size_t jobs = 1, const std::function<void(const SweepPoint&)>& on_point = {}) {
    if (taus.empty() || regimes.empty() || variants.empty())
        throw std::runtime_error("empty sweep grid");

    std::vector<std::string> texts;
    for (const auto& pair : data.train_pairs) {
        texts.push_back(pair.anchor);
        texts.push_back(pair.positive);
    }
    for (const auto& triplet : data.train_triplets) {
        texts.push_back(triplet.anchor);
        texts.push_back(triplet.positive);
        for (const auto& neg : triplet.negatives) texts.push_back(neg);
    }
    const Vocabulary vocab = build_vocab(texts);
    const ModelParams init = init_params(vocab, dim, base.seed);

    SweepReport report;
    report.seed = base.seed;
    report.dim = dim;
    report.base = base;
    report.k_values = k_values;

    for (double tau : taus) {
        for (Regime regime : regimes) {
            for (LossVariant variant : variants) {
                SweepPoint point;
                point.temperature = tau;
                point.regime = regime;
                point.variant = variant;
                try {
                    ModelParams params = init;
                    TrainConfig cfg = base;
                    cfg.temperature = tau;
                    cfg.regime = regime;
                    cfg.variant = variant;
                    TrainResult trained =
                        regime == Regime::kInBatch
                            ? train(params, std::span<const PairExample>(data.train_pairs), cfg)
                            : train(params, std::span<const TripletExample>(data.train_triplets),
                                    cfg);
                    point.epoch_mean_loss = std::move(trained.epoch_mean_loss);
                    point.retrieval =
                        accuracy_at_k(params, data.retrieval, k_values, base.max_len, jobs);
                    point.rerank = evaluate_rerank(params, data.rerank, base.max_len, jobs);
                } catch (const std::exception& err) {
                    throw std::runtime_error("sweep grid point (tau=" +
                                             detail::format_number(tau) +
                                             ", regime=" + std::string(to_string(regime)) +
                                             ", variant=" + std::string(to_string(variant)) +
                                             "): " + err.what());
                }
                report.points.push_back(std::move(point));
                if (on_point) on_point(report.points.back());
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization: JSON, CSV, aligned text tables
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const RetrievalReport& report) {
    nlohmann::json accuracy = nlohmann::json::object();
    for (const auto& [k, value] : report.accuracy_at) accuracy[std::to_string(k)] = value;
    return {{"kind", "retrieval"},
            {"accuracy_at", accuracy},
            {"gold_ranks", report.gold_ranks},
            {"corpus_size", report.corpus_size},
            {"model_id", report.model_id},
            {"mrr", report.mrr}};
}

inline nlohmann::json to_json(const RerankReport& report) {
    return {{"kind", "rerank"},
            {"map", report.map},
            {"per_query_ap", report.per_query_ap},
            {"instance_count", report.instance_count}};
}

inline nlohmann::json to_json(const TrainConfig& cfg) {
    return {{"batch_size", cfg.batch_size},
            {"learning_rate", cfg.learning_rate},
            {"epochs", cfg.epochs},
            {"temperature", cfg.temperature},
            {"variant", std::string(to_string(cfg.variant))},
            {"regime", std::string(to_string(cfg.regime))},
            {"seed", cfg.seed},
            {"max_len", cfg.max_len},
            {"min_len", cfg.min_len}};
}

inline nlohmann::json to_json(const SweepPoint& point) {
    return {{"temperature", point.temperature},
            {"regime", std::string(to_string(point.regime))},
            {"variant", std::string(to_string(point.variant))},
            {"retrieval", to_json(point.retrieval)},
            {"rerank", to_json(point.rerank)},
            {"epoch_mean_loss", point.epoch_mean_loss}};
}

inline nlohmann::json to_json(const SweepReport& report) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& point : report.points) points.push_back(to_json(point));
    return {{"kind", "sweep"},
            {"seed", report.seed},
            {"dim", report.dim},
            {"config", to_json(report.base)},
            {"k_values", report.k_values},
            {"points", points}};
}

inline RetrievalReport retrieval_report_from_json(const nlohmann::json& j) {
    RetrievalReport report;
    for (const auto& [key, value] : j.at("accuracy_at").items())
        report.accuracy_at[static_cast<std::size_t>(std::stoull(key))] = value.get<double>();
    report.gold_ranks = j.at("gold_ranks").get<std::vector<std::size_t>>();
    report.corpus_size = j.at("corpus_size").get<std::size_t>();
    report.model_id = j.value("model_id", std::string{});
    report.mrr = j.at("mrr").get<double>();
    return report;
}

inline RerankReport rerank_report_from_json(const nlohmann::json& j) {
    RerankReport report;
    report.map = j.at("map").get<double>();
    report.per_query_ap = j.at("per_query_ap").get<std::vector<double>>();
    report.instance_count = j.at("instance_count").get<std::size_t>();
    return report;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.temperature = j.at("temperature").get<double>();
    cfg.variant = parse_loss_variant(j.at("variant").get<std::string>());
    cfg.regime = parse_regime(j.at("regime").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.max_len = j.at("max_len").get<std::size_t>();
    cfg.min_len = j.at("min_len").get<std::size_t>();
    return cfg;
}

inline SweepReport sweep_report_from_json(const nlohmann::json& j) {
    SweepReport report;
    report.seed = j.at("seed").get<std::uint64_t>();
    report.dim = j.at("dim").get<std::size_t>();
    report.base = train_config_from_json(j.at("config"));
    report.k_values = j.at("k_values").get<std::vector<std::size_t>>();
    for (const auto& pj : j.at("points")) {
        SweepPoint point;
        point.temperature = pj.at("temperature").get<double>();
        point.regime = parse_regime(pj.at("regime").get<std::string>());
        point.variant = parse_loss_variant(pj.at("variant").get<std::string>());
        point.retrieval = retrieval_report_from_json(pj.at("retrieval"));
        point.rerank = rerank_report_from_json(pj.at("rerank"));
        point.epoch_mean_loss = pj.at("epoch_mean_loss").get<std::vector<double>>();
        report.points.push_back(std::move(point));
    }
    return report;
}

// One row per (grid point, metric): tau,regime,variant,metric,value.
inline std::string sweep_to_csv(const SweepReport& report) {
    std::string out = "tau,regime,variant,metric,value\n";
    for (const auto& point : report.points) {
        const std::string prefix = detail::format_number(point.temperature) + "," +
                                   to_string(point.regime) + "," + to_string(point.variant) + ",";
        for (const auto& [k, value] : point.retrieval.accuracy_at)
            out += prefix + "accuracy@" + std::to_string(k) + "," +
                   detail::format_number(value) + "\n";
        out += prefix + "map," + detail::format_number(point.rerank.map) + "\n";
    }
    return out;
}

inline std::string render_table(const RetrievalReport& report) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"metric", "value"});
    for (const auto& [k, value] : report.accuracy_at)
        rows.push_back({"accuracy@" + std::to_string(k), detail::format_metric(value)});
    rows.push_back({"mrr (supplementary)", detail::format_metric(report.mrr)});
    rows.push_back({"corpus_size", std::to_string(report.corpus_size)});
    rows.push_back({"queries", std::to_string(report.gold_ranks.size())});
    return detail::render_aligned(rows);
}

inline std::string render_table(const RerankReport& report) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"metric", "value"});
    rows.push_back({"map", detail::format_metric(report.map)});
    rows.push_back({"instances", std::to_string(report.instance_count)});
    return detail::render_aligned(rows);
}

inline std::string render_table(const SweepReport& report) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header = {"tau", "regime", "variant"};
    for (std::size_t k : report.k_values) header.push_back("acc@" + std::to_string(k));
    header.push_back("map");
    rows.push_back(std::move(header));
    for (const auto& point : report.points) {
        std::vector<std::string> row = {detail::format_number(point.temperature),
                                        to_string(point.regime), to_string(point.variant)};
        for (std::size_t k : report.k_values) {
            auto it = point.retrieval.accuracy_at.find(k);
            row.push_back(it == point.retrieval.accuracy_at.end()
                              ? "-"
                              : detail::format_metric(it->second));
        }
        row.push_back(detail::format_metric(point.rerank.map));
        rows.push_back(std::move(row));
    }
    return detail::render_aligned(rows);
}

}  // namespace embedkit
