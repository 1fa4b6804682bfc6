#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <embedkit/vocab.hpp>

using namespace embedkit;

namespace {
std::vector<std::string> texts(std::initializer_list<const char*> list) {
    return {list.begin(), list.end()};
}
}  // namespace

TEST_CASE("split_tokens lowercases ASCII and splits on whitespace") {
    CHECK(split_tokens("Hello  WORLD") == std::vector<std::string>{"hello", "world"});
    CHECK(split_tokens("  a\tb\nc ") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_tokens("").empty());
    CHECK(split_tokens("   \t ").empty());
    // Multi-byte UTF-8 passes through unmodified.
    CHECK(split_tokens("Đà Nẵng") == std::vector<std::string>{"Đà", "nẵng"});
}

TEST_CASE("build_vocab keeps tokens at or above min_freq") {
    auto vocab = build_vocab(texts({"a b", "a c"}), 2);
    CHECK(vocab.size() == 3);  // <unk>, <|query|>, a
    CHECK(vocab.token_to_id.count("a") == 1);
    CHECK(vocab.token_to_id.count("b") == 0);
    CHECK(vocab.token_to_id.count("c") == 0);
}

TEST_CASE("build_vocab single token corpus") {
    auto vocab = build_vocab(texts({"x"}), 1);
    CHECK(vocab.size() == 3);
    CHECK(vocab.lookup("x") == 2);
}

TEST_CASE("build_vocab rejects an empty corpus") {
    std::vector<std::string> empty;
    CHECK_THROWS_WITH(build_vocab(empty), "empty corpus");
    CHECK_THROWS_WITH(build_vocab(texts({"a"}), 0), "min_freq must be >= 1");
}

TEST_CASE("build_vocab reserves distinct unk and query prefix ids") {
    auto vocab = build_vocab(texts({"alpha beta"}));
    CHECK(vocab.unk_id != vocab.query_prefix_id);
    CHECK(vocab.id_to_token[vocab.unk_id] == kUnkToken);
    CHECK(vocab.id_to_token[vocab.query_prefix_id] == kQueryPrefixToken);
    // Dense ids: every id indexes its own token.
    for (std::uint32_t id = 0; id < vocab.size(); ++id)
        CHECK(vocab.token_to_id.at(vocab.id_to_token[id]) == id);
}

TEST_CASE("build_vocab assigns ids by frequency then lexicographic order") {
    auto vocab = build_vocab(texts({"b b c a a a", "c"}));
    // a: 3, b: 2, c: 2 -> a first, then b before c.
    CHECK(vocab.lookup("a") == 2);
    CHECK(vocab.lookup("b") == 3);
    CHECK(vocab.lookup("c") == 4);
}

TEST_CASE("build_vocab is independent of text order") {
    auto one = build_vocab(texts({"x y", "y z", "z z"}));
    auto two = build_vocab(texts({"z z", "x y", "y z"}));
    CHECK(one == two);
}

TEST_CASE("lookup maps out-of-vocabulary tokens to unk") {
    auto vocab = build_vocab(texts({"known"}));
    CHECK(vocab.lookup("unknown") == vocab.unk_id);
    CHECK(vocab.lookup("known") < vocab.size());
}

TEST_CASE("tokenize maps documents without a prefix") {
    auto vocab = build_vocab(texts({"hello world"}));
    auto seq = tokenize(vocab, "hello world", Role::kDocument);
    REQUIRE(seq.length() == 2);
    CHECK(seq.ids[0] == vocab.lookup("hello"));
    CHECK(seq.ids[1] == vocab.lookup("world"));
}

TEST_CASE("tokenize prepends the reserved prefix for queries") {
    auto vocab = build_vocab(texts({"hello"}));
    auto seq = tokenize(vocab, "hello", Role::kQuery);
    REQUIRE(seq.length() == 2);
    CHECK(seq.ids[0] == vocab.query_prefix_id);
    CHECK(seq.ids[1] == vocab.lookup("hello"));
}

TEST_CASE("tokenize rejects an empty document") {
    auto vocab = build_vocab(texts({"a"}));
    CHECK_THROWS_WITH(tokenize(vocab, "", Role::kDocument), "empty sequence");
    CHECK_THROWS_WITH(tokenize(vocab, "  \t ", Role::kDocument), "empty sequence");
    // A query is never empty: the prefix alone is a valid sequence.
    CHECK(tokenize(vocab, "", Role::kQuery).ids ==
          std::vector<std::uint32_t>{vocab.query_prefix_id});
}

TEST_CASE("query and document sequences differ by exactly the leading prefix") {
    auto vocab = build_vocab(texts({"the quick brown fox"}));
    auto doc = tokenize(vocab, "the quick brown fox", Role::kDocument);
    auto query = tokenize(vocab, "the quick brown fox", Role::kQuery);
    REQUIRE(query.length() == doc.length() + 1);
    CHECK(query.ids[0] == vocab.query_prefix_id);
    CHECK(std::vector<std::uint32_t>(query.ids.begin() + 1, query.ids.end()) == doc.ids);
}

TEST_CASE("tokenize truncates after prefixing") {
    auto vocab = build_vocab(texts({"a b c d e f g h"}));
    auto doc = tokenize(vocab, "a b c d e f g h", Role::kDocument, 5);
    CHECK(doc.ids == std::vector<std::uint32_t>{vocab.lookup("a"), vocab.lookup("b"),
                                                vocab.lookup("c"), vocab.lookup("d"),
                                                vocab.lookup("e")});
    auto query = tokenize(vocab, "a b c d e f g h", Role::kQuery, 5);
    CHECK(query.ids == std::vector<std::uint32_t>{vocab.query_prefix_id, vocab.lookup("a"),
                                                  vocab.lookup("b"), vocab.lookup("c"),
                                                  vocab.lookup("d")});
    CHECK_THROWS_WITH(tokenize(vocab, "a", Role::kDocument, 0), "max_len must be >= 1");
}

TEST_CASE("tokenize lowercases input like build_vocab") {
    auto vocab = build_vocab(texts({"mixed case"}));
    auto seq = tokenize(vocab, "MIXED Case", Role::kDocument);
    CHECK(seq.ids[0] == vocab.lookup("mixed"));
    CHECK(seq.ids[1] == vocab.lookup("case"));
}

TEST_CASE("export_vocab writes one token<TAB>id line per entry") {
    auto vocab = build_vocab(texts({"tok"}));
    const std::string path = "vocab_export_test.tsv";
    export_vocab(vocab, path);
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == "<unk>\t0\n<|query|>\t1\ntok\t2\n");
    std::remove(path.c_str());
}
