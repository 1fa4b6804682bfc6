#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "embedkit/data.hpp"
#include "embedkit/random.hpp"

namespace embedkit {

struct QADocumentPair {
    std::string question;
    std::string document;
};

enum class NLILabel { kEntailment, kContradiction, kNeutral, kOther };

inline const char* to_string(NLILabel label) {
    switch (label) {
        case NLILabel::kEntailment: return "entailment";
        case NLILabel::kContradiction: return "contradiction";
        case NLILabel::kNeutral: return "neutral";
        default: return "other";
    }
}

inline NLILabel parse_nli_label(const std::string& s) {
    if (s == "entailment") return NLILabel::kEntailment;
    if (s == "contradiction") return NLILabel::kContradiction;
    if (s == "neutral") return NLILabel::kNeutral;
    if (s == "other") return NLILabel::kOther;
    throw std::runtime_error("unknown label '" + s +
                             "'; allowed labels: entailment, contradiction, neutral, other");
}

struct NLIPair {
    std::string premise;
    std::string hypothesis;
    NLILabel label = NLILabel::kOther;
};

struct RetrievalCorpus {
    struct Document {
        std::string doc_id;
        std::string text;
    };
    struct Query {
        std::string query_id;
        std::string text;
        std::string gold_doc_id;
    };
    std::vector<Document> documents;
    std::vector<Query> queries;

    void validate() const {
        std::unordered_set<std::string> ids;
        for (const auto& doc : documents) {
            if (!ids.insert(doc.doc_id).second)
                throw std::runtime_error("duplicate doc_id: " + doc.doc_id);
        }
        for (const auto& q : queries) {
            if (q.text.empty()) throw std::runtime_error("empty query text: " + q.query_id);
            if (!ids.count(q.gold_doc_id))
                throw std::runtime_error("query " + q.query_id + " references unknown gold_doc_id " +
                                         q.gold_doc_id);
        }
    }
};

// A reranking unit: one query, its relevant references, its irrelevant ones.
struct RerankInstance {
    std::string query;
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
};

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

// QA pairs become a retrieval task: every question is a query, documents are
// deduplicated by exact text with stable first-occurrence ids.
inline RetrievalCorpus build_retrieval_task(std::span<const QADocumentPair> pairs) {
    if (pairs.empty()) throw std::runtime_error("empty corpus");
    RetrievalCorpus corpus;
    std::unordered_map<std::string, std::string> text_to_id;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto it = text_to_id.find(pairs[i].document);
        if (it == text_to_id.end()) {
            std::string doc_id = "d" + std::to_string(corpus.documents.size());
            corpus.documents.push_back({doc_id, pairs[i].document});
            it = text_to_id.emplace(pairs[i].document, std::move(doc_id)).first;
        }
        corpus.queries.push_back({"q" + std::to_string(i), pairs[i].question, it->second});
    }
    return corpus;
}

// NLI pairs become a reranking task: premises occurring at least min_refs
// times are queries; entailment hypotheses are positives, every other label a
// negative. Groups lacking a positive or a negative are dropped. A hypothesis
// repeated within a group keeps its first label only.
inline std::vector<RerankInstance> build_rerank_task(std::span<const NLIPair> pairs,
                                                     std::size_t min_refs = 2) {
    if (min_refs < 2) throw std::runtime_error("min_refs must be >= 2");
    std::vector<std::string> premise_order;
    std::unordered_map<std::string, std::vector<std::size_t>> by_premise;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto [it, fresh] = by_premise.try_emplace(pairs[i].premise);
        if (fresh) premise_order.push_back(pairs[i].premise);
        it->second.push_back(i);
    }

    std::vector<RerankInstance> instances;
    for (const auto& premise : premise_order) {
        const auto& members = by_premise[premise];
        if (members.size() < min_refs) continue;
        RerankInstance inst;
        inst.query = premise;
        std::unordered_set<std::string> seen;
        for (std::size_t idx : members) {
            const auto& pair = pairs[idx];
            if (!seen.insert(pair.hypothesis).second) continue;
            if (pair.label == NLILabel::kEntailment) {
                inst.positives.push_back(pair.hypothesis);
            } else {
                inst.negatives.push_back(pair.hypothesis);
            }
        }
        if (inst.positives.empty() || inst.negatives.empty()) continue;
        if (inst.positives.size() + inst.negatives.size() < min_refs) continue;
        instances.push_back(std::move(inst));
    }
    return instances;
}

// ---------------------------------------------------------------------------
// Synthetic clustered corpus
// ---------------------------------------------------------------------------

// Desk-scale stand-in for a real QA/NLI corpus. Texts inside a cluster share
// vocabulary tokens; texts across clusters do not. Query-side and
// document-side token pools are disjoint, so an untrained model scores near
// chance and the query/document association is learnable only through
// training. Evaluation queries are held out: fresh token draws from the same
// pools, never string-equal to a training anchor's bag by construction.
struct SyntheticCorpus {
    std::vector<PairExample> train_pairs;        // stripped view of the triplets
    std::vector<TripletExample> train_triplets;  // group = cluster key
    RetrievalCorpus retrieval;                   // all documents, held-out queries
    std::vector<RerankInstance> rerank;          // held-out queries vs doc references
};

namespace detail {

inline std::string padded_index(std::size_t value, std::size_t count) {
    std::size_t width = 1;
    for (std::size_t v = count > 0 ? count - 1 : 0; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(value);
    return std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

inline std::string join_tokens(std::vector<std::string> tokens, Rng& rng) {
    rng.shuffle(tokens);
    std::string text;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) text += ' ';
        text += tokens[i];
    }
    return text;
}

// k distinct picks from pool, order preserved from the pool.
inline std::vector<std::string> sample_tokens(const std::vector<std::string>& pool, std::size_t k,
                                              Rng& rng) {
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    idx.resize(std::min(k, idx.size()));
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    for (std::size_t i : idx) out.push_back(pool[i]);
    return out;
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic_corpus(std::size_t n_clusters,
                                                 std::size_t docs_per_cluster,
                                                 std::size_t queries_per_cluster,
                                                 std::uint64_t seed) {
    if (n_clusters < 2) throw std::runtime_error("need at least 2 clusters");
    if (docs_per_cluster < 1) throw std::runtime_error("docs_per_cluster must be >= 1");
    if (queries_per_cluster < 1) throw std::runtime_error("queries_per_cluster must be >= 1");

    // Token scheme. Every document and every anchor draws from its own
    // token pool; clusters are a labelling over documents (they drive
    // negative curation, group tags, and rerank instances), not a shared
    // vocabulary. Shared tokens are deliberately absent: this corpus is
    // sized for very short schedules, where shared rows are updated far
    // more often than per-document ones, accumulate coherent mass, and end
    // up dominating every direction -- documents that never occur as
    // positives then shadow the gold document for all of their cluster's
    // queries. With disjoint support, an untrained document scores near
    // zero and a held-out query (a strict token subset of its anchor)
    // stays close to the anchor vector the trainer actually optimised.
    constexpr std::size_t kDocBodyTokens = 8;
    constexpr std::size_t kDocQueryTokens = 4;
    constexpr std::size_t kHeldOutTokens = 3;
    constexpr std::size_t kTripletNegatives = 14;

    Rng rng(seed);
    SyntheticCorpus corpus;

    auto cluster_tag = [](std::size_t c) { return std::to_string(c); };
    auto pool = [](const std::string& stem, std::size_t count) {
        std::vector<std::string> tokens;
        for (std::size_t j = 0; j < count; ++j) tokens.push_back(stem + "w" + std::to_string(j));
        return tokens;
    };

    const std::size_t total_docs = n_clusters * docs_per_cluster;
    std::vector<std::vector<std::string>> doc_texts(n_clusters);

    for (std::size_t c = 0; c < n_clusters; ++c) {
        for (std::size_t d = 0; d < docs_per_cluster; ++d) {
            auto tokens = pool("dt" + cluster_tag(c) + "x" + std::to_string(d), kDocBodyTokens);
            doc_texts[c].push_back(detail::join_tokens(std::move(tokens), rng));
            corpus.retrieval.documents.push_back(
                {"d" + detail::padded_index(c * docs_per_cluster + d, total_docs),
                 doc_texts[c].back()});
        }
    }

    // Training triplets: one per (cluster, query slot); negatives come from
    // other clusters. Pairs are the stripped view.
    for (std::size_t c = 0; c < n_clusters; ++c) {
        for (std::size_t i = 0; i < queries_per_cluster; ++i) {
            const std::size_t d = i % docs_per_cluster;
            auto tokens = pool("qt" + cluster_tag(c) + "x" + std::to_string(d), kDocQueryTokens);

            TripletExample triplet;
            triplet.anchor = detail::join_tokens(std::move(tokens), rng);
            triplet.positive = doc_texts[c][d];
            triplet.group = "c" + cluster_tag(c);
            for (std::size_t n = 0; n < kTripletNegatives; ++n) {
                std::size_t other = rng.next_below(n_clusters - 1);
                if (other >= c) ++other;
                triplet.negatives.push_back(
                    doc_texts[other][rng.next_below(docs_per_cluster)]);
            }
            corpus.train_triplets.push_back(std::move(triplet));
        }
    }
    corpus.train_pairs = strip_negatives(corpus.train_triplets);

    // Held-out evaluation queries: strict subsets of the gold document's own
    // query pool, so each one probes the query-document alignment the trainer
    // actually learned while still being a text the trainer never saw.
    std::size_t query_counter = 0;
    for (std::size_t c = 0; c < n_clusters; ++c) {
        for (std::size_t i = 0; i < queries_per_cluster; ++i) {
            const std::size_t d = i % docs_per_cluster;
            const auto doc_query_pool =
                pool("qt" + cluster_tag(c) + "x" + std::to_string(d), kDocQueryTokens);
            auto tokens = detail::sample_tokens(doc_query_pool, kHeldOutTokens, rng);
            const std::string text = detail::join_tokens(std::move(tokens), rng);

            corpus.retrieval.queries.push_back(
                {"q" + detail::padded_index(query_counter++, n_clusters * queries_per_cluster),
                 text, "d" + detail::padded_index(c * docs_per_cluster + d, total_docs)});

            RerankInstance inst;
            inst.query = text;
            inst.positives = doc_texts[c];
            for (std::size_t n = 0; n < 12 && n < total_docs - docs_per_cluster; ++n) {
                std::size_t other = rng.next_below(n_clusters - 1);
                if (other >= c) ++other;
                const std::string& neg = doc_texts[other][rng.next_below(docs_per_cluster)];
                if (std::find(inst.negatives.begin(), inst.negatives.end(), neg) !=
                    inst.negatives.end())
                    continue;
                inst.negatives.push_back(neg);
            }
            corpus.rerank.push_back(std::move(inst));
        }
    }
    corpus.retrieval.validate();
    return corpus;
}

// ---------------------------------------------------------------------------
// Task files (JSONL, UTF-8)
// ---------------------------------------------------------------------------

inline std::vector<QADocumentPair> read_qa_pairs(const std::string& path) {
    std::vector<QADocumentPair> pairs;
    detail::for_each_jsonl_line(path, [&](const nlohmann::json& obj, std::size_t line_no) {
        pairs.push_back({detail::require_string(obj, "question", line_no),
                         detail::require_string(obj, "document", line_no)});
    });
    return pairs;
}

inline std::vector<NLIPair> read_nli_pairs(const std::string& path) {
    std::vector<NLIPair> pairs;
    detail::for_each_jsonl_line(path, [&](const nlohmann::json& obj, std::size_t line_no) {
        NLIPair pair;
        pair.premise = detail::require_string(obj, "premise", line_no);
        pair.hypothesis = detail::require_string(obj, "hypothesis", line_no);
        const std::string label = detail::require_string(obj, "label", line_no);
        try {
            pair.label = parse_nli_label(label);
        } catch (const std::runtime_error& err) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": " + err.what());
        }
        pairs.push_back(std::move(pair));
    });
    return pairs;
}

inline void write_retrieval_task(const RetrievalCorpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (const auto& doc : corpus.documents) {
        nlohmann::json obj = {{"kind", "document"}, {"doc_id", doc.doc_id}, {"text", doc.text}};
        out << obj.dump() << '\n';
    }
    for (const auto& q : corpus.queries) {
        nlohmann::json obj = {{"kind", "query"},
                              {"query_id", q.query_id},
                              {"text", q.text},
                              {"gold_doc_id", q.gold_doc_id}};
        out << obj.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed writing file: " + path);
}

inline RetrievalCorpus read_retrieval_task(const std::string& path) {
    RetrievalCorpus corpus;
    detail::for_each_jsonl_line(path, [&](const nlohmann::json& obj, std::size_t line_no) {
        const std::string kind = detail::require_string(obj, "kind", line_no);
        if (kind == "document") {
            corpus.documents.push_back({detail::require_string(obj, "doc_id", line_no),
                                        detail::require_string(obj, "text", line_no)});
        } else if (kind == "query") {
            corpus.queries.push_back({detail::require_string(obj, "query_id", line_no),
                                      detail::require_string(obj, "text", line_no),
                                      detail::require_string(obj, "gold_doc_id", line_no)});
        } else {
            throw std::runtime_error("line " + std::to_string(line_no) + ": unknown kind '" +
                                     kind + "'; expected document or query");
        }
    });
    corpus.validate();
    return corpus;
}

inline void write_rerank_task(std::span<const RerankInstance> instances, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (const auto& inst : instances) {
        nlohmann::json obj = {{"query", inst.query},
                              {"positives", inst.positives},
                              {"negatives", inst.negatives}};
        out << obj.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed writing file: " + path);
}

inline std::vector<RerankInstance> read_rerank_task(const std::string& path) {
    std::vector<RerankInstance> instances;
    detail::for_each_jsonl_line(path, [&](const nlohmann::json& obj, std::size_t line_no) {
        RerankInstance inst;
        inst.query = detail::require_string(obj, "query", line_no);
        for (const char* key : {"positives", "negatives"}) {
            if (!obj.contains(key))
                throw std::runtime_error("line " + std::to_string(line_no) + ": missing " + key);
            if (!obj[key].is_array())
                throw std::runtime_error("line " + std::to_string(line_no) + ": field " +
                                         std::string(key) + " must be an array of strings");
            auto& dst = std::string(key) == "positives" ? inst.positives : inst.negatives;
            for (const auto& item : obj[key]) {
                if (!item.is_string())
                    throw std::runtime_error("line " + std::to_string(line_no) + ": field " +
                                             std::string(key) + " must be an array of strings");
                dst.push_back(item.get<std::string>());
            }
        }
        if (inst.positives.empty() || inst.negatives.empty())
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": rerank instance needs at least one positive and one "
                                     "negative reference");
        std::unordered_set<std::string> positive_set(inst.positives.begin(),
                                                     inst.positives.end());
        for (const auto& neg : inst.negatives) {
            if (positive_set.count(neg))
                throw std::runtime_error("line " + std::to_string(line_no) +
                                         ": text appears in both positives and negatives");
        }
        instances.push_back(std::move(inst));
    });
    return instances;
}

}  // namespace embedkit
