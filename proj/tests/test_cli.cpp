// End-to-end tests that drive the installed binary through a shell, checking
// exit codes, stdout/stderr, and the bytes of every artifact it writes.
// Pass the binary under test with --cli-path.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace {

std::string g_cli_path;

const std::string kFixtures = EMBEDKIT_FIXTURES_DIR;

struct ScratchDir {
    std::filesystem::path path;
    ScratchDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("embedkit_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args, const ScratchDir& scratch,
                  const std::string& env_prefix = {}) {
    const std::string out_file = scratch.file("run_stdout.txt");
    const std::string err_file = scratch.file("run_stderr.txt");
    const std::string cmd = (env_prefix.empty() ? "" : env_prefix + " ") + g_cli_path + " " +
                            args + " >" + out_file + " 2>" + err_file;
    const int raw = std::system(cmd.c_str());
    RunResult result;
    if (raw != -1 && WIFEXITED(raw)) result.code = WEXITSTATUS(raw);
    result.out = slurp(out_file);
    result.err = slurp(err_file);
    return result;
}

// synth with a small fixed shape used by most pipeline tests.
RunResult run_synth(const ScratchDir& scratch, const std::string& dir,
                    const std::string& seed = "9") {
    return run_cli("synth --out-dir " + scratch.file(dir) +
                       " --clusters 3 --docs 2 --queries 2 --seed " + seed,
                   scratch);
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    ScratchDir scratch;
    CHECK(run_cli("", scratch).code == 2);                               // no subcommand
    CHECK(run_cli("train --no-such-flag", scratch).code == 2);           // unknown option
    CHECK(run_cli("build-bench rerank --out x.jsonl", scratch).code == 2);  // missing --in
    const auto tau = run_cli("train --data x --out y --tau 0", scratch);
    CHECK(tau.code == 2);
    CHECK(tau.err.find("--tau") != std::string::npos);
}

TEST_CASE("synth writes a deterministic corpus with manifests") {
    ScratchDir scratch;
    const auto first = run_synth(scratch, "a");
    REQUIRE(first.code == 0);
    CHECK(first.out ==
          "pairs: 6\ntriplets: 6\ndocuments: 6\nqueries: 6\nrerank instances: 6\n");
    const auto second = run_synth(scratch, "b");
    REQUIRE(second.code == 0);

    for (const char* name : {"pairs.jsonl", "triplets.jsonl", "retrieval.jsonl", "rerank.jsonl"}) {
        const std::string a = scratch.file(std::string("a/") + name);
        const std::string b = scratch.file(std::string("b/") + name);
        INFO(name);
        CHECK(slurp(a) == slurp(b));
        CHECK(!slurp(a).empty());
        CHECK(std::filesystem::exists(a + ".manifest.json"));
    }

    const auto other_seed = run_synth(scratch, "c", "10");
    REQUIRE(other_seed.code == 0);
    CHECK(slurp(scratch.file("a/pairs.jsonl")) != slurp(scratch.file("c/pairs.jsonl")));

    const auto bad = run_cli("synth --out-dir " + scratch.file("d") + " --clusters 1", scratch);
    CHECK(bad.code == 2);
    CHECK(bad.err.find("need at least 2 clusters") != std::string::npos);
}

TEST_CASE("build-bench reproduces the committed fixtures byte for byte") {
    ScratchDir scratch;
    const std::string rerank_out = scratch.file("rerank_task.jsonl");
    const auto rerank = run_cli(
        "build-bench rerank --in " + kFixtures + "/nli_20.jsonl --out " + rerank_out, scratch);
    REQUIRE(rerank.code == 0);
    CHECK(rerank.out == "nli pairs read: 20\ninstances built: 4\n");
    CHECK(slurp(rerank_out) == slurp(kFixtures + "/expected_rerank_task.jsonl"));
    CHECK(std::filesystem::exists(rerank_out + ".manifest.json"));

    const std::string retrieval_out = scratch.file("retrieval_task.jsonl");
    const auto retrieval = run_cli(
        "build-bench retrieval --in " + kFixtures + "/qa_pairs.jsonl --out " + retrieval_out,
        scratch);
    REQUIRE(retrieval.code == 0);
    CHECK(retrieval.out == "qa pairs read: 6\ndocuments: 4 (deduplicated 2)\nqueries: 6\n");
    CHECK(slurp(retrieval_out) == slurp(kFixtures + "/expected_retrieval_task.jsonl"));
}

TEST_CASE("train is reproducible and records its run") {
    ScratchDir scratch;
    REQUIRE(run_synth(scratch, "data").code == 0);
    const std::string train_flags =
        " --dim 8 --epochs 2 --batch-size 4 --lr 0.05 --seed 5 --vocab-out " +
        scratch.file("vocab.tsv");
    const auto first = run_cli("train --data " + scratch.file("data/pairs.jsonl") + " --out " +
                                   scratch.file("ck1.bin") + train_flags,
                               scratch);
    REQUIRE(first.code == 0);
    CHECK(first.out.find("vocab size: ") != std::string::npos);
    CHECK(first.out.find("dim: 8") != std::string::npos);
    CHECK(first.out.find("checkpoint: " + scratch.file("ck1.bin")) != std::string::npos);

    const auto second = run_cli("train --data " + scratch.file("data/pairs.jsonl") + " --out " +
                                    scratch.file("ck2.bin") + train_flags,
                                scratch);
    REQUIRE(second.code == 0);
    const std::string ck1 = slurp(scratch.file("ck1.bin"));
    CHECK(!ck1.empty());
    CHECK(ck1 == slurp(scratch.file("ck2.bin")));
    CHECK(slurp(scratch.file("ck1.bin.loss.json")) == slurp(scratch.file("ck2.bin.loss.json")));

    const auto loss = nlohmann::json::parse(slurp(scratch.file("ck1.bin.loss.json")));
    CHECK(loss.at("epoch_mean_loss").size() == 2);
    CHECK(loss.at("dropped_singletons") == 0);

    const std::string vocab = slurp(scratch.file("vocab.tsv"));
    CHECK(vocab.rfind("<unk>\t0\n<|query|>\t1\n", 0) == 0);

    const auto manifest =
        nlohmann::json::parse(slurp(scratch.file("ck1.bin.manifest.json")));
    CHECK(manifest.at("command") == "train");
    CHECK(manifest.at("seed") == 5);
    CHECK(manifest.at("inputs") ==
          nlohmann::json::array({scratch.file("data/pairs.jsonl")}));
    CHECK(manifest.at("resolved_config").at("dim") == 8);
    CHECK(manifest.at("resolved_config").at("temperature") == 0.1);
    CHECK(manifest.at("volatile").contains("duration_seconds"));
    const std::string stamp = manifest.at("volatile").at("timestamp_utc");
    CHECK(stamp.size() == 20);
    CHECK(stamp.back() == 'Z');
}

TEST_CASE("train surfaces data and regime mismatches") {
    ScratchDir scratch;
    REQUIRE(run_synth(scratch, "data").code == 0);

    const auto wrong_pairs = run_cli("train --regime hard_negative --data " +
                                         scratch.file("data/pairs.jsonl") + " --out " +
                                         scratch.file("ck.bin"),
                                     scratch);
    CHECK(wrong_pairs.code == 1);
    CHECK(wrong_pairs.err.find("expected triplet schema") != std::string::npos);

    const auto wrong_triplets = run_cli("train --regime in_batch --data " +
                                            scratch.file("data/triplets.jsonl") + " --out " +
                                            scratch.file("ck.bin"),
                                        scratch);
    CHECK(wrong_triplets.code == 1);
    CHECK(wrong_triplets.err.find("expected pair schema") != std::string::npos);

    const auto missing = run_cli("train --data " + scratch.file("nowhere.jsonl") + " --out " +
                                     scratch.file("ck.bin"),
                                 scratch);
    CHECK(missing.code == 1);
    CHECK(missing.err.find(scratch.file("nowhere.jsonl")) != std::string::npos);
}

TEST_CASE("eval writes reports, tables, and manifests") {
    ScratchDir scratch;
    REQUIRE(run_synth(scratch, "data").code == 0);
    REQUIRE(run_cli("train --data " + scratch.file("data/pairs.jsonl") + " --out " +
                        scratch.file("ck.bin") + " --dim 8 --epochs 2 --batch-size 4 --lr 0.05",
                    scratch)
                .code == 0);

    const std::string report_path = scratch.file("retrieval_report.json");
    const std::string table_path = scratch.file("retrieval_table.txt");
    const auto retrieval = run_cli("eval retrieval --model " + scratch.file("ck.bin") +
                                       " --task " + scratch.file("data/retrieval.jsonl") +
                                       " --out " + report_path + " --table " + table_path +
                                       " --k 1,3 --jobs 2",
                                   scratch);
    REQUIRE(retrieval.code == 0);
    CHECK(retrieval.out.find("accuracy@1") != std::string::npos);
    CHECK(retrieval.out.find("mrr (supplementary)") != std::string::npos);
    CHECK(slurp(table_path) == retrieval.out);
    const auto report = nlohmann::json::parse(slurp(report_path));
    CHECK(report.at("kind") == "retrieval");
    CHECK(report.at("corpus_size") == 6);
    CHECK(report.at("gold_ranks").size() == 6);
    CHECK(std::filesystem::exists(report_path + ".manifest.json"));
    CHECK(std::filesystem::exists(table_path + ".manifest.json"));

    const std::string rerank_path = scratch.file("rerank_report.json");
    const auto rerank = run_cli("eval rerank --model " + scratch.file("ck.bin") + " --task " +
                                    scratch.file("data/rerank.jsonl") + " --out " + rerank_path,
                                scratch);
    REQUIRE(rerank.code == 0);
    CHECK(rerank.out.find("map") != std::string::npos);
    CHECK(nlohmann::json::parse(slurp(rerank_path)).at("kind") == "rerank");

    const auto bad_dim = run_cli("eval retrieval --model " + scratch.file("ck.bin") + " --task " +
                                     scratch.file("data/retrieval.jsonl") + " --out " +
                                     scratch.file("x.json") + " --dim 32",
                                 scratch);
    CHECK(bad_dim.code == 1);
    CHECK(bad_dim.err.find("dimension mismatch") != std::string::npos);

    const auto no_model = run_cli("eval retrieval --model " + scratch.file("ghost.bin") +
                                      " --task " + scratch.file("data/retrieval.jsonl") +
                                      " --out " + scratch.file("x.json"),
                                  scratch);
    CHECK(no_model.code == 1);
    CHECK(no_model.err.find("cannot open checkpoint file") != std::string::npos);
    CHECK(no_model.err.find(scratch.file("ghost.bin")) != std::string::npos);
}

TEST_CASE("sweep reports every grid point and reruns byte-identically") {
    ScratchDir scratch;
    REQUIRE(run_synth(scratch, "data").code == 0);
    const std::string sweep_flags = " --pairs " + scratch.file("data/pairs.jsonl") +
                                    " --triplets " + scratch.file("data/triplets.jsonl") +
                                    " --retrieval " + scratch.file("data/retrieval.jsonl") +
                                    " --rerank " + scratch.file("data/rerank.jsonl") +
                                    " --tau-grid 0.5 --regimes in_batch"
                                    " --variants infonce,weighted --k 1,3"
                                    " --dim 8 --epochs 1 --batch-size 4 --lr 0.05 --seed 3";
    const std::string out1 = scratch.file("sweep1.json");
    const auto first =
        run_cli("sweep --out " + out1 + " --csv " + scratch.file("sweep.csv") + sweep_flags,
                scratch);
    REQUIRE(first.code == 0);
    CHECK(first.out.rfind("tau", 0) == 0);

    const auto report = nlohmann::json::parse(slurp(out1));
    CHECK(report.at("kind") == "sweep");
    CHECK(report.at("complete") == true);
    REQUIRE(report.at("points").size() == 2);
    CHECK(report.at("points")[0].at("variant") == "infonce");
    CHECK(report.at("points")[1].at("variant") == "weighted");
    for (const auto& point : report.at("points")) {
        CHECK(point.at("temperature") == 0.5);
        CHECK(point.at("epoch_mean_loss").size() == 1);
        CHECK(point.at("retrieval").at("accuracy_at").contains("1"));
        CHECK(point.at("rerank").at("per_query_ap").size() == 6);
    }

    const std::string csv = slurp(scratch.file("sweep.csv"));
    CHECK(csv.rfind("tau,regime,variant,metric,value\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 3);

    const std::string out2 = scratch.file("sweep2.json");
    REQUIRE(run_cli("sweep --out " + out2 + sweep_flags, scratch).code == 0);
    CHECK(slurp(out1) == slurp(out2));
}

TEST_CASE("report pretty-prints every report kind") {
    ScratchDir scratch;
    REQUIRE(run_synth(scratch, "data").code == 0);
    REQUIRE(run_cli("train --data " + scratch.file("data/pairs.jsonl") + " --out " +
                        scratch.file("ck.bin") + " --dim 8 --epochs 2 --batch-size 4 --lr 0.05",
                    scratch)
                .code == 0);
    const std::string report_path = scratch.file("report.json");
    const auto eval = run_cli("eval retrieval --model " + scratch.file("ck.bin") + " --task " +
                                  scratch.file("data/retrieval.jsonl") + " --out " + report_path +
                                  " --k 1,3",
                              scratch);
    REQUIRE(eval.code == 0);

    const auto printed = run_cli("report --in " + report_path, scratch);
    REQUIRE(printed.code == 0);
    CHECK(printed.out == eval.out);

    const auto loss = run_cli("report --in " + scratch.file("ck.bin.loss.json"), scratch);
    REQUIRE(loss.code == 0);
    CHECK(loss.out.rfind("epoch", 0) == 0);
    CHECK(std::count(loss.out.begin(), loss.out.end(), '\n') == 3);  // header + 2 epochs

    spit(scratch.file("odd.json"), "{\"hello\": 1}\n");
    const auto odd = run_cli("report --in " + scratch.file("odd.json"), scratch);
    CHECK(odd.code == 1);
    CHECK(odd.err.find("unrecognized report") != std::string::npos);
}

TEST_CASE("config files and environment variables fill in defaults") {
    ScratchDir scratch;
    REQUIRE(run_synth(scratch, "data").code == 0);
    spit(scratch.file("defaults.toml"), "[train]\ndim = 12\nepochs = 1\n");

    const std::string base = "train --data " + scratch.file("data/pairs.jsonl") +
                             " --batch-size 4 --lr 0.05 --out " + scratch.file("ck.bin");
    const auto from_config =
        run_cli(base + " --config " + scratch.file("defaults.toml"), scratch);
    REQUIRE(from_config.code == 0);
    CHECK(from_config.out.find("dim: 12") != std::string::npos);

    const auto from_env = run_cli(base, scratch, "EMBEDKIT_DIM=16");
    REQUIRE(from_env.code == 0);
    CHECK(from_env.out.find("dim: 16") != std::string::npos);

    // Explicit flags outrank the environment.
    const auto flag_wins = run_cli(base + " --dim 4", scratch, "EMBEDKIT_DIM=16");
    REQUIRE(flag_wins.code == 0);
    CHECK(flag_wins.out.find("dim: 4") != std::string::npos);
}

int main(int argc, char* argv[]) {
    Catch::Session session;
    using namespace Catch::Clara;
    auto cli = session.cli() | Opt(g_cli_path, "path")["--cli-path"](
                                   "embedkit binary under test (required)");
    session.cli(cli);
    const int rc = session.applyCommandLine(argc, argv);
    if (rc != 0) return rc;
    if (g_cli_path.empty()) {
        std::fprintf(stderr, "test_cli: --cli-path <embedkit binary> is required\n");
        return 2;
    }
    return session.run();
}
