#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "kprnn/analysis.hpp"
#include "kprnn/bench.hpp"
#include "kprnn/io.hpp"
#include "kprnn/kpcore.hpp"
#include "kprnn/presets.hpp"
#include "kprnn/train.hpp"
#include "kprnn/verify.hpp"

using namespace kprnn;

namespace {

// KPK_SEED wins over any seed option.
std::uint64_t effective_seed(std::uint64_t cli_seed) {
    if (const char* env = std::getenv("KPK_SEED")) return std::strtoull(env, nullptr, 10);
    return cli_seed;
}

struct ShapesArgs {
    std::size_t rows = 0, cols = 0;
    bool enumerate = false;
    double hkp_target = 0.0;
    bool csv = false;
};

int run_shapes(const ShapesArgs& args) {
    const ShapePlan plan = select_factor_shapes(args.rows, args.cols);
    if (args.csv) {
        std::cout << "rows,cols,first_rows,first_cols,second_rows,second_cols,params,ratio\n";
        std::cout << args.rows << ',' << args.cols << ',' << plan.first.rows << ','
                  << plan.first.cols << ',' << plan.second.rows << ',' << plan.second.cols << ','
                  << plan.params_compressed << ',' << plan.ratio() << '\n';
    } else {
        std::printf("plan for %zux%zu: %zux%zu (x) %zux%zu, %zu params, ratio %.2fx\n", args.rows,
                    args.cols, plan.first.rows, plan.first.cols, plan.second.rows,
                    plan.second.cols, plan.params_compressed, plan.ratio());
    }
    if (args.enumerate) {
        const auto entries = enumerate_kp_ratios(args.rows, args.cols);
        if (args.csv) {
            std::cout << "first_rows,first_cols,second_rows,second_cols,params,ratio\n";
            for (const auto& e : entries)
                std::cout << e.first.rows << ',' << e.first.cols << ',' << e.second.rows << ','
                          << e.second.cols << ',' << e.params << ',' << e.ratio << '\n';
        } else {
            for (const auto& e : entries)
                std::printf("  %zux%zu (x) %zux%zu  params %zu  ratio %.2fx\n", e.first.rows,
                            e.first.cols, e.second.rows, e.second.cols, e.params, e.ratio);
        }
    }
    if (args.hkp_target > 0.0) {
        const HkpPlan h = hkp_rank_rows_for_target(args.rows, args.cols, args.hkp_target);
        std::printf("hkp target %.2fx: r = %zu, params %zu, achieved %.2fx\n", args.hkp_target,
                    h.r, h.params, h.achieved_ratio);
        if (h.r < args.rows)
            std::printf("  lower block %zux%zu as %zux%zu (x) %zux%zu\n", args.rows - h.r,
                        args.cols, h.lower_plan.first.rows, h.lower_plan.first.cols,
                        h.lower_plan.second.rows, h.lower_plan.second.cols);
    }
    return 0;
}

int run_verify(std::size_t trials, std::uint64_t seed, bool inject_fault) {
    VerifyOptions opts;
    opts.trials = trials;
    opts.seed = effective_seed(seed);
    opts.inject_fault = inject_fault;
    const auto results = run_verification(opts);
    std::cout << verification_report(results);
    return all_passed(results) ? 0 : 1;
}

struct BenchArgs {
    std::string preset;
    std::string config;
    std::size_t rows = 0, cols = 0;
    std::size_t trials = 200;
    std::uint64_t seed = 0;
    std::string csv_path;
    std::vector<std::string> reps;
};

int run_bench(BenchArgs args) {
    if (!args.config.empty()) {
        std::ifstream is(args.config);
        if (!is) throw std::invalid_argument("cannot open config " + args.config);
        nlohmann::json cfg;
        is >> cfg;
        if (cfg.contains("preset")) args.preset = cfg["preset"].get<std::string>();
        if (cfg.contains("rows")) args.rows = cfg["rows"].get<std::size_t>();
        if (cfg.contains("cols")) args.cols = cfg["cols"].get<std::size_t>();
        if (cfg.contains("trials")) args.trials = cfg["trials"].get<std::size_t>();
        if (cfg.contains("seed")) args.seed = cfg["seed"].get<std::uint64_t>();
        if (cfg.contains("reps")) args.reps = cfg["reps"].get<std::vector<std::string>>();
    }
    BenchOptions opts;
    opts.samples = std::max<std::size_t>(10, args.trials);
    opts.seed = effective_seed(args.seed);

    std::vector<BenchRow> rows;
    if (!args.preset.empty()) {
        const BenchmarkPreset& preset = preset_by_name(args.preset);
        rows = bench_gate_shape(preset.gate_rows(), preset.gate_cols(), opts);
        const auto seq = bench_sequence(preset, opts);
        rows.insert(rows.end(), seq.begin(), seq.end());
    } else if (args.rows && args.cols) {
        rows = bench_gate_shape(args.rows, args.cols, opts);
        const bool square_pow2 =
            args.rows == args.cols && (args.rows & (args.rows - 1)) == 0 && args.rows >= 4;
        if (square_pow2) {
            const auto chain = bench_square_chain(args.rows, opts);
            rows.insert(rows.end(), chain.begin(), chain.end());
        }
    } else {
        throw CLI::ValidationError("bench", "need --preset, --config, or --rows/--cols");
    }

    if (!args.reps.empty()) {
        std::vector<BenchRow> kept;
        for (const auto& r : rows)
            for (const auto& want : args.reps)
                if (r.kernel.find(want) != std::string::npos) {
                    kept.push_back(r);
                    break;
                }
        rows = std::move(kept);
    }

    std::cout << bench_to_markdown(rows);
    if (!args.csv_path.empty()) {
        std::ofstream os(args.csv_path);
        os << bench_to_csv(rows);
        std::cout << "csv written to " << args.csv_path << "\n";
    }
    return 0;
}

struct TrainArgs {
    std::string task = "synth";
    std::string rep = "kp";
    std::string cell = "fastrnn";
    std::size_t epochs = 50;
    std::size_t batch = 32;
    double lr = 0.01;
    std::uint64_t seed = 0;
    std::size_t count = 256;
    std::size_t time_steps = 16;
    std::size_t input_dim = 16;
    std::size_t hidden = 32;
    std::string optimizer = "adam";
    std::string metrics_path;
    std::string checkpoint_dir;
};

RepChoice parse_rep(const std::string& s) {
    if (s == "dense") return RepChoice::dense();
    if (s == "kp") return RepChoice::kp();
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
        const std::string kind = s.substr(0, colon);
        const double target = std::stod(s.substr(colon + 1));
        if (kind == "hkp") return RepChoice::hkp(target);
        if (kind == "lmf") return RepChoice::lmf(target);
        if (kind == "sparse") return RepChoice::sparse(target);
    }
    throw CLI::ValidationError("--rep", "expected dense|kp|hkp:R|lmf:R|sparse:R, got " + s);
}

int run_train(const TrainArgs& args) {
    if (args.task != "synth")
        throw CLI::ValidationError("--task", "only the synth task is built in");
    const std::uint64_t seed = effective_seed(args.seed);
    // One generator call so train and validation share the teacher vector.
    const std::size_t val_count = std::max<std::size_t>(1, args.count / 4);
    auto data = synth_task_generate(seed, args.count + val_count, args.time_steps, args.input_dim);
    const std::vector<LabeledSequence> val(data.begin() + static_cast<long>(args.count),
                                           data.end());
    data.resize(args.count);

    auto net = build_compressed_network(cell_kind_from_name(args.cell), args.input_dim,
                                        args.hidden, 2, parse_rep(args.rep), seed);
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch;
    cfg.learning_rate = args.lr;
    cfg.optimizer = args.optimizer == "sgd" ? OptimizerKind::SGD : OptimizerKind::Adam;

    const TrainResult result = train_loop(std::move(net), data, cfg);
    const EpochMetrics& last = result.metrics.back();
    std::printf("final: loss %.6f train_acc %.4f val_acc %.4f after %zu epochs\n", last.loss,
                last.train_accuracy, dataset_accuracy(result.net, val), args.epochs);
    if (!args.metrics_path.empty()) {
        save_metrics_csv(args.metrics_path, result.metrics);
        std::cout << "metrics written to " << args.metrics_path << "\n";
    }
    if (!args.checkpoint_dir.empty()) {
        OptimizerState state;  // final state is internal to train_loop; store a fresh one
        save_checkpoint(args.checkpoint_dir, result.net, state,
                        args.epochs * ((args.count + args.batch - 1) / args.batch));
        std::cout << "checkpoint written to " << args.checkpoint_dir << "\n";
    }
    return 0;
}

int run_sizes(const std::string& preset_name, bool all, bool csv) {
    std::vector<const BenchmarkPreset*> selected;
    if (all)
        for (const auto& p : all_presets()) selected.push_back(&p);
    else
        selected.push_back(&preset_by_name(preset_name));
    for (const auto* p : selected) {
        const auto rows = compute_sizes(*p);
        std::cout << (csv ? sizes_to_csv(*p, rows) : sizes_to_text(*p, rows));
    }
    return 0;
}

int run_analyze(const std::string& input, double tol, std::size_t amp_trials, bool csv) {
    const std::filesystem::path path(input);
    const DenseMatrix m =
        path.extension() == ".kpm" ? load_matrix_kpm1(path) : load_matrix_csv(path);
    const SpectralReport rep = spectral_report(m, tol);
    if (csv) {
        std::cout << "index,sigma\n";
        for (std::size_t i = 0; i < rep.singular_values.size(); ++i)
            std::cout << i << ',' << rep.singular_values[i] << '\n';
    } else {
        std::printf("matrix        %zux%zu\n", m.rows, m.cols);
        std::printf("sigma_max     %.8g\n", rep.sigma_max);
        std::printf("rank          %zu (tol %.1e)\n", rep.rank, tol);
        std::printf("condition     %s\n", std::isinf(rep.condition_number)
                                              ? "inf (rank deficient)"
                                              : std::to_string(rep.condition_number).c_str());
        std::printf("singular values:");
        const std::size_t show = std::min<std::size_t>(rep.singular_values.size(), 12);
        for (std::size_t i = 0; i < show; ++i) std::printf(" %.6g", rep.singular_values[i]);
        if (show < rep.singular_values.size()) std::printf(" ...");
        std::printf("\n");
    }
    if (amp_trials > 0) {
        const auto amp = amplification_bound_check(m, amp_trials, effective_seed(0));
        std::printf("amplification: sampled max |Ax| = %.8g, sigma_max = %.8g, bound %s\n",
                    amp.sampled_max, amp.sigma_max, amp.bound_holds ? "holds" : "VIOLATED");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kronecker-product compressed RNN toolkit"};
    app.require_subcommand(1);

    ShapesArgs shapes;
    auto* shapes_cmd = app.add_subcommand("shapes", "factor shape planning and enumeration");
    shapes_cmd->add_option("--rows", shapes.rows, "target rows")->required();
    shapes_cmd->add_option("--cols", shapes.cols, "target cols")->required();
    shapes_cmd->add_flag("--enumerate", shapes.enumerate, "list all two-factor splits");
    shapes_cmd->add_option("--hkp-target", shapes.hkp_target, "hybrid rows for a target ratio");
    shapes_cmd->add_flag("--csv", shapes.csv, "csv output");

    std::size_t verify_trials = 1000;
    std::uint64_t verify_seed = 0;
    bool verify_fault = false;
    auto* verify_cmd = app.add_subcommand("verify", "run the oracle verification suites");
    verify_cmd->add_option("--trials", verify_trials, "kronecker oracle trials");
    verify_cmd->add_option("--seed", verify_seed, "random seed");
    verify_cmd->add_flag("--inject-fault", verify_fault)->group("");  // negative-control hook

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "kernel and sequence benchmarks");
    bench_cmd->add_option("--preset", bench.preset,
                          "mnist-lstm|kws-lstm|kws-gru|har1-bilstm|usps-fastrnn");
    bench_cmd->add_option("--config", bench.config, "json config file");
    bench_cmd->add_option("--rows", bench.rows, "custom gate rows");
    bench_cmd->add_option("--cols", bench.cols, "custom gate cols");
    bench_cmd->add_option("--trials", bench.trials, "timing samples per kernel");
    bench_cmd->add_option("--seed", bench.seed, "random seed");
    bench_cmd->add_option("--csv", bench.csv_path, "write csv to this path");
    bench_cmd->add_option("--reps", bench.reps, "kernel name filter");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "desk-scale training on the synthetic task");
    train_cmd->add_option("--task", train.task, "task name (synth)");
    train_cmd->add_option("--rep", train.rep, "dense|kp|hkp:R|lmf:R|sparse:R");
    train_cmd->add_option("--cell", train.cell, "rnn|lstm|gru|fastrnn|bilstm");
    train_cmd->add_option("--epochs", train.epochs, "training epochs");
    train_cmd->add_option("--batch", train.batch, "batch size");
    train_cmd->add_option("--lr", train.lr, "learning rate");
    train_cmd->add_option("--seed", train.seed, "random seed");
    train_cmd->add_option("--count", train.count, "dataset size");
    train_cmd->add_option("--time-steps", train.time_steps, "sequence length");
    train_cmd->add_option("--input-dim", train.input_dim, "input dimension");
    train_cmd->add_option("--hidden", train.hidden, "hidden dimension");
    train_cmd->add_option("--optimizer", train.optimizer, "sgd|adam");
    train_cmd->add_option("--metrics", train.metrics_path, "write metrics csv here");
    train_cmd->add_option("--checkpoint", train.checkpoint_dir, "write checkpoint here");

    std::string sizes_preset;
    bool sizes_all = false, sizes_csv = false;
    auto* sizes_cmd = app.add_subcommand("sizes", "model size and compression accounting");
    sizes_cmd->add_option("--preset", sizes_preset, "preset name");
    sizes_cmd->add_flag("--all", sizes_all, "all presets");
    sizes_cmd->add_flag("--csv", sizes_csv, "csv output");

    std::string analyze_input;
    double analyze_tol = 1e-10;
    std::size_t analyze_amp = 100;
    bool analyze_csv = false;
    auto* analyze_cmd = app.add_subcommand("analyze", "spectral report of a matrix file");
    analyze_cmd->add_option("--input", analyze_input, "matrix file (.kpm or .csv)")->required();
    analyze_cmd->add_option("--tol", analyze_tol, "numerical rank tolerance");
    analyze_cmd->add_option("--amp-trials", analyze_amp, "amplification samples (0 = skip)");
    analyze_cmd->add_flag("--csv", analyze_csv, "csv output");

    try {
        app.parse(argc, argv);
        if (shapes_cmd->parsed()) return run_shapes(shapes);
        if (verify_cmd->parsed()) return run_verify(verify_trials, verify_seed, verify_fault);
        if (bench_cmd->parsed()) return run_bench(bench);
        if (train_cmd->parsed()) return run_train(train);
        if (sizes_cmd->parsed()) {
            if (!sizes_all && sizes_preset.empty())
                throw CLI::ValidationError("sizes", "need --preset or --all");
            return run_sizes(sizes_preset, sizes_all, sizes_csv);
        }
        if (analyze_cmd->parsed())
            return run_analyze(analyze_input, analyze_tol, analyze_amp, analyze_csv);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
