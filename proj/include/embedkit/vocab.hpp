#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace embedkit {

inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kQueryPrefixToken = "<|query|>";

enum class Role { kQuery, kDocument };

// Lowercased whitespace tokens of a text. Only ASCII letters are folded, so
// multi-byte UTF-8 sequences pass through untouched.
inline std::vector<std::string> split_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

struct Vocabulary {
    std::unordered_map<std::string, std::uint32_t> token_to_id;
    std::vector<std::string> id_to_token;  // dense, id == index
    std::uint32_t unk_id = 0;
    std::uint32_t query_prefix_id = 0;

    std::uint32_t size() const { return static_cast<std::uint32_t>(id_to_token.size()); }

    std::uint32_t lookup(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? unk_id : it->second;
    }

    bool operator==(const Vocabulary& other) const {
        return id_to_token == other.id_to_token && unk_id == other.unk_id &&
               query_prefix_id == other.query_prefix_id;
    }
};

struct TokenSequence {
    std::vector<std::uint32_t> ids;
    Role role = Role::kDocument;

    std::size_t length() const { return ids.size(); }
};

// Builds a vocabulary from a corpus. Tokens with frequency >= min_freq are
// kept; ids are assigned by descending frequency then lexicographic order,
// after the two reserved tokens. The assignment is fully deterministic.
inline Vocabulary build_vocab(std::span<const std::string> texts, std::size_t min_freq = 1) {
    if (texts.empty()) throw std::runtime_error("empty corpus");
    if (min_freq < 1) throw std::runtime_error("min_freq must be >= 1");

    std::unordered_map<std::string, std::size_t> freq;
    for (const auto& text : texts) {
        for (auto& tok : split_tokens(text)) ++freq[std::move(tok)];
    }

    Vocabulary vocab;
    auto add = [&vocab](const std::string& tok) {
        auto [it, fresh] = vocab.token_to_id.emplace(tok, vocab.size());
        if (fresh) vocab.id_to_token.push_back(tok);
        return it->second;
    };
    vocab.unk_id = add(kUnkToken);
    vocab.query_prefix_id = add(kQueryPrefixToken);

    std::vector<std::pair<std::string, std::size_t>> kept;
    kept.reserve(freq.size());
    for (auto& [tok, count] : freq) {
        if (count >= min_freq) kept.emplace_back(tok, count);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (auto& [tok, count] : kept) add(tok);
    return vocab;
}

// Maps text to token ids. Queries get the reserved instruction prefix
// prepended before truncation; documents are left unmodified.
inline TokenSequence tokenize(const Vocabulary& vocab, std::string_view text, Role role,
                              std::size_t max_len = 224) {
    if (max_len < 1) throw std::runtime_error("max_len must be >= 1");
    TokenSequence seq;
    seq.role = role;
    if (role == Role::kQuery) seq.ids.push_back(vocab.query_prefix_id);
    for (const auto& tok : split_tokens(text)) seq.ids.push_back(vocab.lookup(tok));
    if (seq.ids.empty()) throw std::runtime_error("empty sequence");
    if (seq.ids.size() > max_len) seq.ids.resize(max_len);
    return seq;
}

// Plain-text export, one "token<TAB>id" line per vocabulary entry.
inline void export_vocab(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open vocabulary file for writing: " + path);
    for (std::uint32_t id = 0; id < vocab.size(); ++id) {
        out << vocab.id_to_token[id] << '\t' << id << '\n';
    }
    if (!out) throw std::runtime_error("failed writing vocabulary file: " + path);
}

}  // namespace embedkit
