#pragma once

#include <cstddef>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "embedkit/random.hpp"
#include "embedkit/vocab.hpp"

namespace embedkit {

struct PairExample {
    std::string anchor;
    std::string positive;
};

struct TripletExample {
    std::string anchor;
    std::string positive;
    std::vector<std::string> negatives;
    std::string group;  // optional; empty means the example is its own group
};

template <typename T>
struct FilterResult {
    std::vector<T> kept;
    std::size_t dropped = 0;
};

namespace detail {

inline std::size_t token_count(const std::string& text) { return split_tokens(text).size(); }

inline bool within_bounds(const std::string& text, std::size_t min_len, std::size_t max_len) {
    const std::size_t n = token_count(text);
    return n >= min_len && n <= max_len;
}

}  // namespace detail

// Length filter: keeps an example only if every member text has a token count
// inside [min_len, max_len]. Order is preserved.
inline FilterResult<PairExample> filter_by_length(std::span<const PairExample> examples,
                                                  std::size_t min_len, std::size_t max_len) {
    if (min_len > max_len) throw std::runtime_error("min_len must be <= max_len");
    FilterResult<PairExample> result;
    for (const auto& ex : examples) {
        if (detail::within_bounds(ex.anchor, min_len, max_len) &&
            detail::within_bounds(ex.positive, min_len, max_len)) {
            result.kept.push_back(ex);
        } else {
            ++result.dropped;
        }
    }
    return result;
}

inline FilterResult<TripletExample> filter_by_length(std::span<const TripletExample> examples,
                                                     std::size_t min_len, std::size_t max_len) {
    if (min_len > max_len) throw std::runtime_error("min_len must be <= max_len");
    FilterResult<TripletExample> result;
    for (const auto& ex : examples) {
        bool ok = detail::within_bounds(ex.anchor, min_len, max_len) &&
                  detail::within_bounds(ex.positive, min_len, max_len);
        for (const auto& neg : ex.negatives) {
            if (!ok) break;
            ok = detail::within_bounds(neg, min_len, max_len);
        }
        if (ok) {
            result.kept.push_back(ex);
        } else {
            ++result.dropped;
        }
    }
    return result;
}

// Drops all negatives, leaving anchor/positive pairs for in-batch training.
inline std::vector<PairExample> strip_negatives(std::span<const TripletExample> triplets) {
    std::vector<PairExample> pairs;
    pairs.reserve(triplets.size());
    for (const auto& t : triplets) pairs.push_back({t.anchor, t.positive});
    return pairs;
}

// Fills groups that lack negatives by sampling texts from the rest of the
// dataset, uniformly and seeded, never from the example's own group and never
// string-equal to its positive. Groups that already hold negatives pass
// through untouched.
inline std::vector<TripletExample> complete_negatives(std::vector<TripletExample> groups, Rng& rng,
                                                      std::size_t negatives_to_add = 1) {
    if (negatives_to_add < 1) throw std::runtime_error("negatives_to_add must be >= 1");

    // Candidate pool: every text in the dataset tagged with its group key.
    struct Candidate {
        const std::string* text;
        std::string key;
    };
    std::vector<Candidate> pool;
    std::vector<std::string> keys(groups.size());
    std::unordered_set<std::string> distinct_keys;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        keys[i] = groups[i].group.empty() ? "#" + std::to_string(i) : groups[i].group;
        distinct_keys.insert(keys[i]);
        pool.push_back({&groups[i].anchor, keys[i]});
        pool.push_back({&groups[i].positive, keys[i]});
        for (const auto& neg : groups[i].negatives) pool.push_back({&neg, keys[i]});
    }

    for (std::size_t i = 0; i < groups.size(); ++i) {
        auto& group = groups[i];
        if (!group.negatives.empty()) continue;
        std::size_t eligible = 0;
        for (const auto& cand : pool) {
            if (cand.key != keys[i] && *cand.text != group.positive) ++eligible;
        }
        if (distinct_keys.size() < 2 || eligible == 0)
            throw std::runtime_error("cannot sample out-of-group negative");
        while (group.negatives.size() < negatives_to_add) {
            const auto& cand = pool[rng.next_below(pool.size())];
            if (cand.key == keys[i] || *cand.text == group.positive) continue;
            group.negatives.push_back(*cand.text);
        }
    }
    return groups;
}

// ---------------------------------------------------------------------------
// JSONL training-data files.
//   pair line:    {"anchor": str, "positive": str}
//   triplet line: {"anchor": str, "positive": str, "negatives": [str,...],
//                  "group": str (optional)}
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json parse_jsonl_line(const std::string& line, std::size_t line_no) {
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
        throw std::runtime_error("line " + std::to_string(line_no) + ": malformed JSON object");
    return obj;
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  std::size_t line_no) {
    if (!obj.contains(key))
        throw std::runtime_error("line " + std::to_string(line_no) + ": missing " + key);
    if (!obj[key].is_string())
        throw std::runtime_error("line " + std::to_string(line_no) + ": field " + key +
                                 " must be a string");
    return obj[key].get<std::string>();
}

template <typename PerLine>
void for_each_jsonl_line(const std::string& path, PerLine&& per_line) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        per_line(parse_jsonl_line(line, line_no), line_no);
    }
}

}  // namespace detail

inline std::vector<PairExample> read_pairs(const std::string& path) {
    std::vector<PairExample> pairs;
    detail::for_each_jsonl_line(path, [&](const nlohmann::json& obj, std::size_t line_no) {
        if (obj.contains("negatives"))
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": found a triplet record; expected pair schema "
                                     "{\"anchor\", \"positive\"}");
        pairs.push_back({detail::require_string(obj, "anchor", line_no),
                         detail::require_string(obj, "positive", line_no)});
    });
    return pairs;
}

inline std::vector<TripletExample> read_triplets(const std::string& path) {
    std::vector<TripletExample> triplets;
    detail::for_each_jsonl_line(path, [&](const nlohmann::json& obj, std::size_t line_no) {
        TripletExample t;
        t.anchor = detail::require_string(obj, "anchor", line_no);
        t.positive = detail::require_string(obj, "positive", line_no);
        if (!obj.contains("negatives"))
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": missing negatives; expected triplet schema "
                                     "{\"anchor\", \"positive\", \"negatives\"}");
        if (!obj["negatives"].is_array())
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": field negatives must be an array of strings");
        for (const auto& neg : obj["negatives"]) {
            if (!neg.is_string())
                throw std::runtime_error("line " + std::to_string(line_no) +
                                         ": field negatives must be an array of strings");
            t.negatives.push_back(neg.get<std::string>());
        }
        if (obj.contains("group")) t.group = detail::require_string(obj, "group", line_no);
        triplets.push_back(std::move(t));
    });
    return triplets;
}

inline void write_pairs(std::span<const PairExample> pairs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (const auto& p : pairs) {
        nlohmann::json obj = {{"anchor", p.anchor}, {"positive", p.positive}};
        out << obj.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed writing file: " + path);
}

inline void write_triplets(std::span<const TripletExample> triplets, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (const auto& t : triplets) {
        nlohmann::json obj = {{"anchor", t.anchor}, {"positive", t.positive},
                              {"negatives", t.negatives}};
        if (!t.group.empty()) obj["group"] = t.group;
        out << obj.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed writing file: " + path);
}

}  // namespace embedkit
