// embedkit command-line front end.
//
// Commands: build-bench, train, eval, sweep, synth, report.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
// Every output artifact gets an adjacent <artifact>.manifest.json; the
// manifest's "volatile" block (timestamp, duration) is the only part that
// varies between identical runs.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <embedkit/embedkit.hpp>

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << content;
    if (!out) throw std::runtime_error("failed writing file: " + path);
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("malformed JSON: " + path);
    return j;
}

void emit_manifest(const std::string& command, nlohmann::json config, std::uint64_t seed,
                   std::vector<std::string> inputs, std::vector<std::string> outputs,
                   Clock::time_point start) {
    embedkit::RunManifest manifest;
    manifest.command = command;
    manifest.resolved_config = std::move(config);
    manifest.seed = seed;
    manifest.inputs = std::move(inputs);
    manifest.outputs = outputs;
    manifest.duration_seconds = seconds_since(start);
    manifest.timestamp_utc = embedkit::utc_timestamp();
    for (const auto& artifact : outputs) embedkit::write_manifest(manifest, artifact);
}

// Option values shared across subcommands.
struct TrainFlags {
    std::string regime = "in_batch";
    std::string variant = "infonce";
    double tau = 0.1;
    double lr = 5e-5;
    std::size_t batch_size = 32;
    std::size_t epochs = 3;
    std::uint64_t seed = 42;
    std::size_t dim = 64;
    std::size_t max_len = 224;
    std::size_t min_len = 1;
};

embedkit::TrainConfig to_config(const TrainFlags& flags) {
    embedkit::TrainConfig cfg;
    cfg.batch_size = flags.batch_size;
    cfg.learning_rate = flags.lr;
    cfg.epochs = flags.epochs;
    cfg.temperature = flags.tau;
    cfg.variant = embedkit::parse_loss_variant(flags.variant);
    cfg.regime = embedkit::parse_regime(flags.regime);
    cfg.seed = flags.seed;
    cfg.max_len = flags.max_len;
    cfg.min_len = flags.min_len;
    return cfg;
}

std::string env_name(std::string flag) {
    for (char& c : flag) c = c == '-' ? '_' : static_cast<char>(std::toupper(c));
    return "EMBEDKIT_" + flag;
}

// Registers an option and hooks up its EMBEDKIT_* environment override.
template <typename T>
CLI::Option* opt(CLI::App* cmd, const std::string& name, T& value, const std::string& desc) {
    auto* option = cmd->add_option(name, value, desc);
    std::string longest;
    for (const auto& n : option->get_lnames())
        if (n.size() > longest.size()) longest = n;
    if (!longest.empty()) option->envname(env_name(longest));
    return option;
}

void add_train_flags(CLI::App* cmd, TrainFlags& flags) {
    opt(cmd, "--regime", flags.regime, "Training regime")
        ->check(CLI::IsMember({"in_batch", "in-batch", "hard_negative", "hard-negative"}));
    opt(cmd, "--variant", flags.variant, "Loss variant")
        ->check(CLI::IsMember({"infonce", "weighted"}));
    opt(cmd, "--tau", flags.tau, "Softmax temperature (> 0)")
        ->check(CLI::PositiveNumber);
    opt(cmd, "--lr", flags.lr, "Learning rate")->check(CLI::PositiveNumber);
    opt(cmd, "--batch-size", flags.batch_size, "Batch size")->check(CLI::PositiveNumber);
    opt(cmd, "--epochs", flags.epochs, "Training epochs")->check(CLI::PositiveNumber);
    opt(cmd, "--seed", flags.seed, "Seed for all randomness");
    opt(cmd, "--dim", flags.dim, "Embedding dimension")->check(CLI::PositiveNumber);
    opt(cmd, "--max-len", flags.max_len, "Token truncation length")->check(CLI::PositiveNumber);
    opt(cmd, "--min-len", flags.min_len, "Minimum token length filter");
}

std::vector<std::string> training_texts(const std::vector<embedkit::PairExample>& pairs,
                                        const std::vector<embedkit::TripletExample>& triplets) {
    std::vector<std::string> texts;
    for (const auto& p : pairs) {
        texts.push_back(p.anchor);
        texts.push_back(p.positive);
    }
    for (const auto& t : triplets) {
        texts.push_back(t.anchor);
        texts.push_back(t.positive);
        for (const auto& n : t.negatives) texts.push_back(n);
    }
    return texts;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"embedkit: train and evaluate contrastive text embedding models"};
    app.require_subcommand(1);
    app.fallthrough();  // let global flags like --config appear after the subcommand
    app.set_config("--config", "", "Read defaults from a TOML/INI config file");
    app.get_config_ptr()->envname("EMBEDKIT_CONFIG");

    std::function<int()> action;

    // ------------------------------------------------------------------ synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic clustered corpus");
    {
        struct {
            std::string out_dir;
            std::size_t clusters = 16, docs = 8, queries = 4;
            std::uint64_t seed = 42;
        } static flags;
        opt(synth, "--out-dir", flags.out_dir, "Directory for the four output files")
            ->required();
        opt(synth, "--clusters", flags.clusters, "Number of clusters (>= 2)");
        opt(synth, "--docs", flags.docs, "Documents per cluster")->check(CLI::PositiveNumber);
        opt(synth, "--queries", flags.queries, "Held-out queries per cluster")
            ->check(CLI::PositiveNumber);
        opt(synth, "--seed", flags.seed, "Generation seed");
        synth->callback([&] {
            action = [&]() -> int {
                const auto start = Clock::now();
                if (flags.clusters < 2)
                    throw CLI::ValidationError("--clusters", "need at least 2 clusters");
                auto corpus = embedkit::generate_synthetic_corpus(flags.clusters, flags.docs,
                                                                  flags.queries, flags.seed);
                std::filesystem::create_directories(flags.out_dir);
                const std::string base = flags.out_dir + "/";
                embedkit::write_pairs(corpus.train_pairs, base + "pairs.jsonl");
                embedkit::write_triplets(corpus.train_triplets, base + "triplets.jsonl");
                embedkit::write_retrieval_task(corpus.retrieval, base + "retrieval.jsonl");
                embedkit::write_rerank_task(corpus.rerank, base + "rerank.jsonl");
                emit_manifest("synth",
                              {{"clusters", flags.clusters},
                               {"docs_per_cluster", flags.docs},
                               {"queries_per_cluster", flags.queries},
                               {"seed", flags.seed}},
                              flags.seed, {},
                              {base + "pairs.jsonl", base + "triplets.jsonl",
                               base + "retrieval.jsonl", base + "rerank.jsonl"},
                              start);
                std::cout << "pairs: " << corpus.train_pairs.size()
                          << "\ntriplets: " << corpus.train_triplets.size()
                          << "\ndocuments: " << corpus.retrieval.documents.size()
                          << "\nqueries: " << corpus.retrieval.queries.size()
                          << "\nrerank instances: " << corpus.rerank.size() << "\n";
                return 0;
            };
        });
    }

    // ------------------------------------------------------------ build-bench
    auto* bench = app.add_subcommand("build-bench", "Build a benchmark task from raw JSONL");
    bench->require_subcommand(1);
    {
        static std::string in_path, out_path;
        static std::size_t min_refs = 2;

        auto* rerank = bench->add_subcommand("rerank", "NLI pairs -> reranking task");
        opt(rerank, "--in", in_path, "NLI JSONL (premise/hypothesis/label)")->required();
        opt(rerank, "--out", out_path, "Output task JSONL")->required();
        opt(rerank, "--min-refs", min_refs, "Minimum references per query")
            ->check(CLI::Range(std::size_t{2}, std::size_t{1'000'000}));
        rerank->callback([&] {
            action = [&]() -> int {
                const auto start = Clock::now();
                auto pairs = embedkit::read_nli_pairs(in_path);
                auto instances = embedkit::build_rerank_task(pairs, min_refs);
                embedkit::write_rerank_task(instances, out_path);
                emit_manifest("build-bench rerank",
                              {{"in", in_path}, {"out", out_path}, {"min_refs", min_refs}}, 0,
                              {in_path}, {out_path}, start);
                std::cout << "nli pairs read: " << pairs.size()
                          << "\ninstances built: " << instances.size() << "\n";
                return 0;
            };
        });

        auto* retrieval = bench->add_subcommand("retrieval", "QA pairs -> retrieval task");
        opt(retrieval, "--in", in_path, "QA JSONL (question/document)")->required();
        opt(retrieval, "--out", out_path, "Output corpus JSONL")->required();
        retrieval->callback([&] {
            action = [&]() -> int {
                const auto start = Clock::now();
                auto pairs = embedkit::read_qa_pairs(in_path);
                auto corpus = embedkit::build_retrieval_task(pairs);
                embedkit::write_retrieval_task(corpus, out_path);
                emit_manifest("build-bench retrieval", {{"in", in_path}, {"out", out_path}}, 0,
                              {in_path}, {out_path}, start);
                std::cout << "qa pairs read: " << pairs.size()
                          << "\ndocuments: " << corpus.documents.size()
                          << " (deduplicated " << pairs.size() - corpus.documents.size() << ")"
                          << "\nqueries: " << corpus.queries.size() << "\n";
                return 0;
            };
        });
    }

    // ------------------------------------------------------------------ train
    auto* train_cmd = app.add_subcommand("train", "Train an encoder on pairs or triplets");
    {
        static TrainFlags flags;
        static std::string data_path, out_path, loss_path, vocab_path;
        static bool complete = false;
        opt(train_cmd, "--data", data_path, "Training JSONL (pairs or triplets per regime)")
            ->required();
        opt(train_cmd, "--out", out_path, "Checkpoint output path")->required();
        add_train_flags(train_cmd, flags);
        opt(train_cmd, "--loss-history", loss_path,
            "Loss history JSON path (default: <out>.loss.json)");
        opt(train_cmd, "--vocab-out", vocab_path, "Also export the vocabulary as TSV");
        train_cmd->add_flag("--complete-negatives", complete,
                            "Sample an out-of-group negative for triplets that lack one");
        train_cmd->callback([&] {
            action = [&]() -> int {
                const auto start = Clock::now();
                auto cfg = to_config(flags);
                if (loss_path.empty()) loss_path = out_path + ".loss.json";

                std::vector<embedkit::PairExample> pairs;
                std::vector<embedkit::TripletExample> triplets;
                if (cfg.regime == embedkit::Regime::kInBatch) {
                    pairs = embedkit::read_pairs(data_path);
                } else {
                    triplets = embedkit::read_triplets(data_path);
                    if (complete) {
                        embedkit::Rng rng(cfg.seed);
                        triplets = embedkit::complete_negatives(std::move(triplets), rng);
                    }
                }
                auto params = embedkit::init_params(
                    embedkit::build_vocab(training_texts(pairs, triplets)),
                    static_cast<std::uint32_t>(flags.dim), cfg.seed);

                embedkit::TrainResult result =
                    cfg.regime == embedkit::Regime::kInBatch
                        ? embedkit::train(params, std::span<const embedkit::PairExample>(pairs),
                                          cfg)
                        : embedkit::train(
                              params, std::span<const embedkit::TripletExample>(triplets), cfg);

                embedkit::save_checkpoint(params, out_path);
                write_json_file(loss_path,
                                {{"epoch_mean_loss", result.epoch_mean_loss},
                                 {"dropped_singletons", result.dropped_singletons}});
                std::vector<std::string> outputs = {out_path, loss_path};
                if (!vocab_path.empty()) {
                    embedkit::export_vocab(params.vocab, vocab_path);
                    outputs.push_back(vocab_path);
                }
                nlohmann::json config = embedkit::to_json(cfg);
                config["dim"] = flags.dim;
                config["data"] = data_path;
                config["complete_negatives"] = complete;
                emit_manifest("train", config, cfg.seed, {data_path}, outputs, start);

                std::cout << "examples: " << (pairs.empty() ? triplets.size() : pairs.size())
                          << "\nvocab size: " << params.vocab_size() << "\ndim: " << params.dim
                          << "\nepoch mean loss:";
                for (double loss : result.epoch_mean_loss) std::cout << ' ' << loss;
                std::cout << "\ncheckpoint: " << out_path << "\n";
                return 0;
            };
        });
    }

    // ------------------------------------------------------------------- eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a task");
    eval_cmd->require_subcommand(1);
    {
        static std::string model_path, task_path, out_path, table_path;
        static std::vector<std::size_t> k_values = {5, 10, 20};
        static std::size_t jobs = 1, max_len = 224;
        static std::size_t dim = 0;

        auto add_common = [&](CLI::App* cmd) {
            opt(cmd, "--model", model_path, "Checkpoint path")->required();
            opt(cmd, "--task", task_path, "Task JSONL path")->required();
            opt(cmd, "--out", out_path, "Report JSON path")->required();
            opt(cmd, "--table", table_path, "Also write the text table to this path");
            opt(cmd, "--jobs", jobs, "Worker cap (does not affect results)")
                ->check(CLI::PositiveNumber);
            opt(cmd, "--max-len", max_len, "Token truncation length")->check(CLI::PositiveNumber);
            opt(cmd, "--dim", dim, "Expected embedding dimension (checked against checkpoint)");
        };

        auto* retrieval = eval_cmd->add_subcommand("retrieval", "accuracy@k over a corpus");
        add_common(retrieval);
        opt(retrieval, "--k", k_values, "Cutoffs, e.g. --k 5,10,20")->delimiter(',');
        retrieval->callback([&] {
            action = [&]() -> int {
                const auto start = Clock::now();
                auto params = embedkit::load_checkpoint(
                    model_path, dim ? std::optional<std::uint32_t>(
                                          static_cast<std::uint32_t>(dim))
                                    : std::nullopt);
                auto corpus = embedkit::read_retrieval_task(task_path);
                auto report = embedkit::accuracy_at_k(params, corpus, k_values, max_len, jobs,
                                                      model_path);
                write_json_file(out_path, embedkit::to_json(report));
                const std::string table = embedkit::render_table(report);
                std::vector<std::string> outputs = {out_path};
                if (!table_path.empty()) {
                    write_text_file(table_path, table);
                    outputs.push_back(table_path);
                }
                emit_manifest("eval retrieval",
                              {{"model", model_path},
                               {"task", task_path},
                               {"k", k_values},
                               {"max_len", max_len}},
                              0, {model_path, task_path}, outputs, start);
                std::cout << table;
                return 0;
            };
        });

        auto* rerank = eval_cmd->add_subcommand("rerank", "mAP over rerank instances");
        add_common(rerank);
        rerank->callback([&] {
            action = [&]() -> int {
                const auto start = Clock::now();
                auto params = embedkit::load_checkpoint(
                    model_path, dim ? std::optional<std::uint32_t>(
                                          static_cast<std::uint32_t>(dim))
                                    : std::nullopt);
                auto instances = embedkit::read_rerank_task(task_path);
                auto report = embedkit::evaluate_rerank(params, instances, max_len, jobs);
                write_json_file(out_path, embedkit::to_json(report));
                const std::string table = embedkit::render_table(report);
                std::vector<std::string> outputs = {out_path};
                if (!table_path.empty()) {
                    write_text_file(table_path, table);
                    outputs.push_back(table_path);
                }
                emit_manifest("eval rerank",
                              {{"model", model_path}, {"task", task_path}, {"max_len", max_len}},
                              0, {model_path, task_path}, outputs, start);
                std::cout << table;
                return 0;
            };
        });
    }

    // ------------------------------------------------------------------ sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Temperature ablation over a full grid");
    {
        static TrainFlags flags;
        static std::string pairs_path, triplets_path, retrieval_path, rerank_path;
        static std::string out_path, csv_path, table_path;
        static std::vector<double> taus = {0.1, 0.4, 0.7};
        static std::vector<std::string> regimes = {"in_batch", "hard_negative"};
        static std::vector<std::string> variants = {"infonce", "weighted"};
        static std::vector<std::size_t> k_values = {5, 10, 20};
        static std::size_t jobs = 1;
        opt(sweep_cmd, "--pairs", pairs_path, "Training pairs JSONL")->required();
        opt(sweep_cmd, "--triplets", triplets_path, "Training triplets JSONL")->required();
        opt(sweep_cmd, "--retrieval", retrieval_path, "Retrieval task JSONL")->required();
        opt(sweep_cmd, "--rerank", rerank_path, "Rerank task JSONL")->required();
        opt(sweep_cmd, "--out", out_path, "Sweep report JSON path")->required();
        opt(sweep_cmd, "--csv", csv_path, "Also write CSV (tau,regime,variant,metric,value)");
        opt(sweep_cmd, "--table", table_path, "Also write the text table to this path");
        opt(sweep_cmd, "--tau-grid", taus, "Temperatures, e.g. --tau-grid 0.1,0.4,0.7")
            ->delimiter(',');
        opt(sweep_cmd, "--regimes", regimes, "Regimes to sweep")->delimiter(',');
        opt(sweep_cmd, "--variants", variants, "Loss variants to sweep")->delimiter(',');
        opt(sweep_cmd, "--k", k_values, "Retrieval cutoffs")->delimiter(',');
        opt(sweep_cmd, "--jobs", jobs, "Worker cap (does not affect results)")
            ->check(CLI::PositiveNumber);
        add_train_flags(sweep_cmd, flags);
        sweep_cmd->callback([&] {
            action = [&]() -> int {
                const auto start = Clock::now();
                auto base = to_config(flags);
                embedkit::SweepData data;
                data.train_pairs = embedkit::read_pairs(pairs_path);
                data.train_triplets = embedkit::read_triplets(triplets_path);
                data.retrieval = embedkit::read_retrieval_task(retrieval_path);
                data.rerank = embedkit::read_rerank_task(rerank_path);

                std::vector<embedkit::Regime> regime_grid;
                for (const auto& r : regimes) regime_grid.push_back(embedkit::parse_regime(r));
                std::vector<embedkit::LossVariant> variant_grid;
                for (const auto& v : variants)
                    variant_grid.push_back(embedkit::parse_loss_variant(v));

                const std::vector<std::string> inputs = {pairs_path, triplets_path,
                                                          retrieval_path, rerank_path};
                nlohmann::json config = embedkit::to_json(base);
                config["dim"] = flags.dim;
                config["tau_grid"] = taus;
                config["regimes"] = regimes;
                config["variants"] = variants;
                config["k"] = k_values;

                // Persist after every grid point so an interrupted run still
                // leaves the completed prefix on disk.
                embedkit::SweepReport partial;
                partial.seed = base.seed;
                partial.dim = flags.dim;
                partial.base = base;
                partial.k_values = k_values;
                auto persist = [&](bool complete) {
                    nlohmann::json j = embedkit::to_json(partial);
                    j["complete"] = complete;
                    write_json_file(out_path, j);
                };

                embedkit::SweepReport report;
                try {
                    report = embedkit::sweep_temperature(
                        base, flags.dim, taus, regime_grid, variant_grid, data, k_values, jobs,
                        [&](const embedkit::SweepPoint& point) {
                            partial.points.push_back(point);
                            persist(false);
                        });
                } catch (const std::exception& err) {
                    persist(false);
                    emit_manifest("sweep", config, base.seed, inputs, {out_path}, start);
                    std::cerr << "error: " << err.what() << "\n"
                              << "partial results: " << out_path << " ("
                              << partial.points.size() << " grid points)\n";
                    return 1;
                }
                partial = report;
                persist(true);
                std::vector<std::string> outputs = {out_path};
                if (!csv_path.empty()) {
                    write_text_file(csv_path, embedkit::sweep_to_csv(report));
                    outputs.push_back(csv_path);
                }
                const std::string table = embedkit::render_table(report);
                if (!table_path.empty()) {
                    write_text_file(table_path, table);
                    outputs.push_back(table_path);
                }
                emit_manifest("sweep", config, base.seed, inputs, outputs, start);
                std::cout << table;
                return 0;
            };
        });
    }

    // ----------------------------------------------------------------- report
    auto* report_cmd = app.add_subcommand("report", "Pretty-print a JSON report as a table");
    {
        static std::string in_path;
        opt(report_cmd, "--in", in_path, "Report JSON path")->required();
        report_cmd->callback([&] {
            action = [&]() -> int {
                nlohmann::json j = read_json_file(in_path);
                const std::string kind = j.value("kind", "");
                if (kind == "retrieval") {
                    std::cout << embedkit::render_table(embedkit::retrieval_report_from_json(j));
                } else if (kind == "rerank") {
                    std::cout << embedkit::render_table(embedkit::rerank_report_from_json(j));
                } else if (kind == "sweep") {
                    std::cout << embedkit::render_table(embedkit::sweep_report_from_json(j));
                } else if (j.contains("epoch_mean_loss")) {
                    std::vector<std::vector<std::string>> rows = {{"epoch", "mean_loss"}};
                    std::size_t epoch = 0;
                    for (const auto& loss : j["epoch_mean_loss"])
                        rows.push_back({std::to_string(++epoch),
                                        embedkit::detail::format_metric(loss.get<double>())});
                    std::cout << embedkit::detail::render_aligned(rows);
                } else {
                    throw std::runtime_error("unrecognized report: " + in_path);
                }
                return 0;
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return action();
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
