// Command-line front end: localize, evaluate, synth, bench-solvers.
//
// Exit codes: 0 success, 1 configuration error, 2 dataset error.

#include "sloc/dataset.h"
#include "sloc/error.h"
#include "sloc/evaluation.h"
#include "sloc/pipeline.h"
#include "sloc/solvers.h"
#include "sloc/synth.h"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

namespace {

using namespace sloc;

constexpr int kConfigError = 1;
constexpr int kDatasetError = 2;

int exit_code_for(const Error &e) {
    switch (e.code()) {
    case ErrorCode::kParse:
    case ErrorCode::kMissingReference:
    case ErrorCode::kInvariantViolation:
    case ErrorCode::kMissingGroundTruth:
        return kDatasetError;
    default:
        return kConfigError;
    }
}

struct LocalizeArgs {
    std::string dataset;
    std::string method;
    std::size_t top_k = 10;
    std::string config;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string out;
    std::string timings;
};

int run_localize(const LocalizeArgs &a) {
    RunOptions opt;
    const auto method = parse_method(a.method);
    if (!method) {
        std::cerr << "unknown method " << a.method << '\n';
        return kConfigError;
    }
    opt.method = *method;
    opt.top_k = a.top_k;
    opt.seed = a.seed;
    opt.threads = a.threads;
    if (!a.config.empty())
        opt.config = load_config(a.config);

    const Dataset ds = load_dataset(a.dataset);
    const auto estimates = run_pipeline(ds, opt);
    std::ofstream out(a.out);
    if (!out) {
        std::cerr << a.out << ": cannot write\n";
        return kConfigError;
    }
    write_estimates(out, estimates);

    const std::vector<TimingTable> tables = {report_timings(method_name(opt.method), estimates)};
    if (!a.timings.empty()) {
        std::ofstream t(a.timings);
        write_timings_csv(t, tables);
    }
    std::size_t ok = 0;
    for (const auto &e : estimates)
        ok += e.success;
    std::cerr << method_name(opt.method) << ": " << ok << " / " << estimates.size() << " queries localized\n";
    write_timings_text(std::cerr, tables);
    return 0;
}

struct EvaluateArgs {
    std::string dataset;
    std::string ground_truth;
    std::string estimates;
    std::string thresholds = "outdoor";
    std::string config;
    std::string out;
};

int run_evaluate(const EvaluateArgs &a) {
    std::map<std::string, Pose> gt;
    if (!a.ground_truth.empty()) {
        gt = read_poses(a.ground_truth);
    } else if (!a.dataset.empty()) {
        gt = load_dataset(a.dataset).query_poses;
    } else {
        std::cerr << "evaluate needs --gt or --dataset\n";
        return kConfigError;
    }
    std::string preset = a.thresholds;
    if (!a.config.empty())
        preset = load_config(a.config).thresholds;
    const ThresholdSet thresholds = threshold_preset(preset);
    std::ifstream in(a.estimates);
    if (!in) {
        std::cerr << a.estimates << ": cannot open\n";
        return kDatasetError;
    }
    const auto estimates = read_estimates(in);
    const RecallReport report = evaluate(estimates, gt, thresholds);

    std::ostringstream text;
    text << "thresholds";
    for (const Threshold &t : thresholds)
        text << " (" << t.meters << "m, " << t.degrees << "deg)";
    text << "\nrecall " << format_recall(report) << "\nqueries " << report.queries << " failed " << report.failures
         << '\n';
    if (a.out.empty()) {
        std::cout << text.str();
    } else {
        std::ofstream out(a.out);
        out << text.str();
    }
    return 0;
}

struct SynthArgs {
    SynthConfig cfg;
    std::string out;
};

int run_synth(const SynthArgs &a) {
    write_synth_dataset(synth_scene(a.cfg), a.out);
    std::cerr << "wrote " << a.out << "/manifest.txt\n";
    return 0;
}

int run_bench_solvers(std::size_t trials, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto random_rotation = [&] {
        Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng));
        return Rotation(q.normalized().toRotationMatrix());
    };
    using clock = std::chrono::steady_clock;
    double t5 = 0.0, t3 = 0.0, tp = 0.0;
    std::size_t max5 = 0, max3 = 0, maxp = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const Rotation R = random_rotation();
        const Vec3 t = Vec3(u(rng), u(rng), u(rng)).normalized();
        std::vector<NormalizedMatch> m5;
        std::vector<DepthMatch> m3;
        std::vector<WorldMatch> mp;
        while (m5.size() < 5) {
            const Vec3 X(2 * u(rng), 2 * u(rng), 5.5 + 2.5 * u(rng));
            const Vec3 Y = R * X + t;
            if (Y.z() < 0.5)
                continue;
            m5.push_back({X.hnormalized(), Y.hnormalized()});
            if (m3.size() < 3) {
                m3.push_back({X.hnormalized(), Y.hnormalized(), X.z(), Y.z()});
                mp.push_back({Y.hnormalized(), X});
            }
        }
        auto time = [&](auto &&fn, double &acc, std::size_t &max_count) {
            const auto start = clock::now();
            try {
                max_count = std::max(max_count, fn().size());
            } catch (const Error &) {
            }
            acc += std::chrono::duration<double, std::micro>(clock::now() - start).count();
        };
        time([&] { return essential_5pt(m5); }, t5, max5);
        time([&] { return essential_3pt_depth(m3); }, t3, max3);
        time([&] { return p3p(mp); }, tp, maxp);
    }
    const double n = static_cast<double>(std::max<std::size_t>(trials, 1));
    std::printf("solver            mean_us  max_candidates\n");
    std::printf("essential_5pt   %9.2f  %zu\n", t5 / n, max5);
    std::printf("essential_3pt   %9.2f  %zu\n", t3 / n, max3);
    std::printf("p3p             %9.2f  %zu\n", tp / n, maxp);
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Structureless visual localization toolkit"};
    app.require_subcommand(1);

    LocalizeArgs loc;
    auto *localize = app.add_subcommand("localize", "Estimate query poses with one pipeline");
    localize->add_option("--dataset", loc.dataset, "Dataset manifest")->required();
    localize->add_option("--method", loc.method,
                         "essmat-5pt | essmat-3pt-depth | e5p1 | e3p1 | local-all | local-pairs | fuse-external | "
                         "align-external")
        ->required();
    localize->add_option("--top-k", loc.top_k, "Retrieved images used per query")->capture_default_str();
    localize->add_option("--config", loc.config, "key = value configuration file");
    localize->add_option("--seed", loc.seed, "Random seed")->capture_default_str();
    localize->add_option("--threads", loc.threads, "Worker threads")->capture_default_str();
    localize->add_option("--out", loc.out, "Estimates file")->required();
    localize->add_option("--timings", loc.timings, "Stage timing CSV");

    EvaluateArgs ev;
    auto *evaluate_cmd = app.add_subcommand("evaluate", "Recall of an estimates file");
    evaluate_cmd->add_option("--estimates", ev.estimates, "Estimates file")->required();
    evaluate_cmd->add_option("--dataset", ev.dataset, "Manifest with query_poses");
    evaluate_cmd->add_option("--gt", ev.ground_truth, "Ground-truth poses file");
    evaluate_cmd->add_option("--thresholds", ev.thresholds, "outdoor | indoor")->capture_default_str();
    evaluate_cmd->add_option("--config", ev.config, "key = value configuration file");
    evaluate_cmd->add_option("--out", ev.out, "Report file (default stdout)");

    SynthArgs sy;
    auto *synth = app.add_subcommand("synth", "Write a synthetic dataset");
    synth->add_option("--out", sy.out, "Output directory")->required();
    synth->add_option("--points", sy.cfg.n_points)->capture_default_str();
    synth->add_option("--cameras", sy.cfg.n_database, "Database cameras")->capture_default_str();
    synth->add_option("--queries", sy.cfg.n_queries)->capture_default_str();
    synth->add_option("--noise", sy.cfg.noise_px, "Pixel noise sigma")->capture_default_str();
    synth->add_option("--outliers", sy.cfg.outlier_fraction, "Outlier fraction")->capture_default_str();
    synth->add_option("--depth-noise", sy.cfg.depth_noise, "Relative depth noise sigma")->capture_default_str();
    synth->add_option("--scale", sy.cfg.scene_scale, "Scene size in meters")->capture_default_str();
    synth->add_option("--seed", sy.cfg.seed)->capture_default_str();

    std::size_t trials = 10000;
    std::uint64_t bench_seed = 0;
    auto *bench = app.add_subcommand("bench-solvers", "Time the minimal solvers on random problems");
    bench->add_option("--trials", trials)->capture_default_str();
    bench->add_option("--seed", bench_seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (*localize)
            return run_localize(loc);
        if (*evaluate_cmd)
            return run_evaluate(ev);
        if (*synth)
            return run_synth(sy);
        return run_bench_solvers(trials, bench_seed);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
}
