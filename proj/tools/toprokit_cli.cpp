// toprokit command-line driver: file-based attention/entropy runs, tau
// calibration, toy-model generation with pruning, kernel benchmarks and the
// bound simulator. Exit codes: 0 success, 1 computation failure, 2 bad
// usage/config.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "toprokit/attention.hpp"
#include "toprokit/bounds_sim.hpp"
#include "toprokit/entropy_stats.hpp"
#include "toprokit/layer_classifier.hpp"
#include "toprokit/matrix.hpp"
#include "toprokit/policy.hpp"
#include "toprokit/threading.hpp"
#include "toprokit/toy_var.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace toprokit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitComputeError = 1;
constexpr int kExitUsageError = 2;

[[noreturn]] void usage_error(const std::string& msg) {
    json err;
    err["error"] = msg;
    std::cerr << err.dump() << "\n";
    std::exit(kExitUsageError);
}

Precision parse_precision(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    usage_error("unknown precision: " + s);
}

ScaleSchedule parse_schedule(const std::string& text) {
    std::vector<ScaleSchedule::Entry> entries;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto x = item.find('x');
        if (x == std::string::npos) usage_error("bad schedule entry: " + item);
        entries.push_back({std::stoul(item.substr(0, x)), std::stoul(item.substr(x + 1))});
    }
    if (entries.empty()) usage_error("empty schedule");
    return ScaleSchedule(std::move(entries));
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << text;
    if (!out) throw std::runtime_error("failed to write " + path.string());
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------- entropy

struct EntropyArgs {
    std::string q_path, k_path, v_path, out_dir;
    std::string engine = "fae";
    std::string precision = "f32";
    std::size_t b_r = 64, b_c = 64;
    double scale = 0.0;
    std::size_t naive_guard = 8192;
};

int run_entropy(const EntropyArgs& a) {
    for (const std::string& p : {a.q_path, a.k_path, a.v_path}) {
        if (!fs::exists(p)) usage_error("input not found: " + p);
    }
    AttentionInput in;
    in.Q = matrix_from_file(a.q_path);
    in.K = matrix_from_file(a.k_path);
    in.V = matrix_from_file(a.v_path);
    in.scale = a.scale;
    if (a.engine == "naive" && in.Q.rows() > a.naive_guard) {
        usage_error("naive engine refuses N=" + std::to_string(in.Q.rows()) +
                    " above the guard " + std::to_string(a.naive_guard) +
                    " (O(N^2) materialization); raise --naive-guard to override");
    }

    AttentionResult res;
    const BlockConfig cfg{a.b_r, a.b_c};
    if (a.engine == "naive") {
        res = naive_attention_entropy(in);
    } else if (a.engine == "flash") {
        res = flash_attention(in, cfg, parse_precision(a.precision));
    } else if (a.engine == "fae") {
        res = flash_attention_entropy(in, cfg, parse_precision(a.precision));
    } else {
        usage_error("unknown engine: " + a.engine);
    }

    fs::create_directories(a.out_dir);
    matrix_to_file(res.O, (fs::path(a.out_dir) / "O.tprv").string());

    json summary;
    summary["engine"] = a.engine;
    summary["N"] = in.Q.rows();
    summary["N_k"] = in.K.rows();
    summary["d"] = in.Q.cols();
    summary["config"] = {{"engine", a.engine}, {"B_r", a.b_r},   {"B_c", a.b_c},
                         {"precision", a.precision}, {"scale", a.scale},
                         {"naive_guard", a.naive_guard}};
    if (!res.entropy.empty()) {
        Matrix2D ent(1, res.entropy.size(), res.entropy);
        matrix_to_file(ent, (fs::path(a.out_dir) / "entropy.tprv").string());
        const double ln_nk = std::log(static_cast<double>(in.K.rows()));
        double lo = res.entropy[0], hi = res.entropy[0];
        for (double h : res.entropy) {
            lo = std::min(lo, h);
            hi = std::max(hi, h);
        }
        summary["entropy"] = {{"min", lo},
                              {"max", hi},
                              {"mean", mean_of(res.entropy)},
                              {"ln_N_k", ln_nk},
                              {"within_bound", lo >= 0.0 && hi <= ln_nk + 1e-6}};
    } else {
        summary["entropy"] = nullptr;
    }
    write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

// -------------------------------------------------------------------- calibrate

struct CalibrateArgs {
    std::vector<std::string> map_dirs;
    std::optional<std::size_t> reference_layer;
    double band = 0.05;
    std::vector<double> tau_grid{0.3, 0.4, 0.5};
    std::string out_file;
};

int run_calibrate(const CalibrateArgs& a) {
    if (a.map_dirs.empty()) usage_error("calibrate needs at least one entropy-map directory");
    std::vector<EntropyMap> maps;
    for (const auto& dir : a.map_dirs) {
        if (!fs::exists(fs::path(dir) / "manifest.json")) {
            usage_error("input not found: " + dir);
        }
        maps.push_back(EntropyMap::load(dir));
    }
    const std::size_t s_max = maps.front().schedule().size();
    for (const auto& m : maps) {
        if (m.schedule().size() != s_max) usage_error("maps use different schedules");
    }

    // Per-run rho and mean-entropy curves on the reference layer.
    std::vector<std::vector<double>> rho_runs, mean_runs;
    for (const auto& m : maps) {
        const std::size_t layer = a.reference_layer.value_or(m.layer_count() - 1);
        std::vector<double> rho(s_max), mean(s_max);
        for (std::size_t s = 1; s <= s_max; ++s) {
            const ScaleStats st = scale_stats(m, s, layer);
            rho[s - 1] = st.low_entropy_ratio;
            mean[s - 1] = st.mean_entropy;
        }
        rho_runs.push_back(std::move(rho));
        mean_runs.push_back(std::move(mean));
    }

    std::vector<double> rho_median(s_max), rho_spread(s_max), mean_mean(s_max);
    for (std::size_t s = 0; s < s_max; ++s) {
        std::vector<double> col, mcol;
        for (std::size_t r = 0; r < rho_runs.size(); ++r) {
            col.push_back(rho_runs[r][s]);
            mcol.push_back(mean_runs[r][s]);
        }
        rho_median[s] = median_of(col);
        rho_spread[s] = *std::max_element(col.begin(), col.end()) -
                        *std::min_element(col.begin(), col.end());
        mean_mean[s] = mean_of(mcol);
    }

    // Recommended tau: median rho at the first scale whose run-to-run spread
    // falls inside the band.
    std::optional<std::size_t> stable_scale;
    for (std::size_t s = 0; s < s_max; ++s) {
        if (rho_spread[s] <= a.band) {
            stable_scale = s + 1;
            break;
        }
    }
    json report;
    report["runs"] = maps.size();
    report["rho_per_run"] = rho_runs;
    report["mean_entropy_per_run"] = mean_runs;
    report["rho_median"] = rho_median;
    report["rho_spread"] = rho_spread;
    report["mean_entropy_mean"] = mean_mean;
    report["config"] = {{"band", a.band},
                        {"tau_grid", a.tau_grid},
                        {"reference_layer",
                         a.reference_layer ? json(*a.reference_layer) : json(nullptr)}};
    if (stable_scale) {
        report["stable_scale"] = *stable_scale;
        report["recommended_tau"] = rho_median[*stable_scale - 1];
    } else {
        report["stable_scale"] = nullptr;
        report["recommended_tau"] = nullptr;
    }
    json depth_table = json::array();
    PolicyConfig pc;
    for (double tau : a.tau_grid) {
        pc.tau = tau;
        const ScaleDecision dec = scale_depth(rho_median, pc);
        depth_table.push_back(
            {{"tau", tau}, {"depth", dec.depth ? json(*dec.depth) : json(nullptr)}});
    }
    report["depth_per_tau"] = depth_table;

    const std::string text = report.dump(2) + "\n";
    if (!a.out_file.empty()) write_text(a.out_file, text);
    std::cout << text;
    return kExitOk;
}

// --------------------------------------------------------------------- generate

struct GenerateArgs {
    std::string schedule = "1x1,2x2,4x4,8x8,16x16";
    std::size_t layers = 4, heads = 2, d_model = 32;
    std::uint64_t weight_seed = 1234;
    std::size_t b_r = 64, b_c = 64;
    std::string precision = "f64";
    bool baseline_only = false;
    PolicyConfig policy;
    std::string depth_comparison = "at_least";
    std::string prune_mode = "deterministic";
    std::optional<std::size_t> reference_layer;
    std::optional<std::size_t> rep_scale;
    std::string out_dir = "toprokit_run";
};

json policy_to_json(const PolicyConfig& p, const GenerateArgs& a) {
    return {{"tau", p.tau},
            {"beta", p.beta},
            {"alpha_min", p.alpha_min},
            {"alpha_max", p.alpha_max},
            {"detail_threshold", p.detail_threshold},
            {"depth_comparison", a.depth_comparison},
            {"prune_mode", a.prune_mode},
            {"rng_seed", p.rng_seed},
            {"reference_layer",
             a.reference_layer ? json(*a.reference_layer) : json(nullptr)},
            {"representative_scale", a.rep_scale ? json(*a.rep_scale) : json(nullptr)}};
}

int run_generate(GenerateArgs& a) {
    ToyModelConfig cfg;
    cfg.schedule = parse_schedule(a.schedule);
    cfg.layers = a.layers;
    cfg.heads = a.heads;
    cfg.d_model = a.d_model;
    cfg.weight_seed = a.weight_seed;
    cfg.blocks = {a.b_r, a.b_c};
    cfg.precision = parse_precision(a.precision);
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        usage_error(e.what());
    }

    a.policy.depth_comparison = a.depth_comparison == "at_most" ? DepthComparison::at_most
                                                                : DepthComparison::at_least;
    a.policy.prune_mode =
        a.prune_mode == "sampled" ? PruneMode::sampled : PruneMode::deterministic;
    a.policy.reference_layer = a.reference_layer;
    try {
        a.policy.validate();
    } catch (const std::invalid_argument& e) {
        usage_error(e.what());
    }

    fs::create_directories(a.out_dir);
    const GenerationTrace baseline = generate(cfg);
    baseline.save((fs::path(a.out_dir) / "baseline").string());

    json meta;
    meta["model"] = {{"schedule", a.schedule},       {"layers", a.layers},
                     {"heads", a.heads},             {"d_model", a.d_model},
                     {"weight_seed", a.weight_seed}, {"B_r", a.b_r},
                     {"B_c", a.b_c},                 {"precision", a.precision}};
    meta["policy"] = policy_to_json(a.policy, a);
    meta["baseline_only"] = a.baseline_only;

    if (!a.baseline_only) {
        const std::size_t rep =
            a.rep_scale.value_or(default_representative_scale(cfg.schedule));
        const auto classifications = classify_layers(baseline.entropy_map, rep, a.policy.beta,
                                                     a.policy.detail_threshold);
        const PruningPlan plan = build_plan(baseline.entropy_map, classifications, a.policy);
        save_plan(plan, (fs::path(a.out_dir) / "plan").string());

        const GenerationTrace pruned = generate(cfg, &plan);
        pruned.save((fs::path(a.out_dir) / "pruned").string());

        const CompareReport rep_out = compare_runs(baseline, pruned);
        json compare = json::parse(rep_out.to_json());
        compare["config"] = meta;
        write_text(fs::path(a.out_dir) / "compare.json", compare.dump(2) + "\n");
        write_text(fs::path(a.out_dir) / "compare.csv", rep_out.to_csv());
        std::cout << compare.dump(2) << "\n";
    } else {
        write_text(fs::path(a.out_dir) / "run.json", meta.dump(2) + "\n");
        std::cout << meta.dump(2) << "\n";
    }
    return kExitOk;
}

// ------------------------------------------------------------------------ bench

struct BenchArgs {
    std::vector<std::size_t> n_grid{256, 1024, 4096};
    std::size_t d = 64;
    std::vector<std::string> block_grid{"64x64"};
    std::size_t reps = 5;
    std::vector<std::string> engines{"naive", "flash", "fae"};
    std::string precision = "f32";
    std::string out_file;
};

int run_bench(const BenchArgs& a) {
    if (a.reps < 1) usage_error("reps must be >= 1");
    std::ostringstream csv;
    csv << "engine,N,d,B_r,B_c,median_ms,reps\n";
    for (const std::string& engine : a.engines) {
        for (std::size_t n : a.n_grid) {
            for (const std::string& block : a.block_grid) {
                const auto x = block.find('x');
                if (x == std::string::npos) usage_error("bad block entry: " + block);
                const BlockConfig cfg{std::stoul(block.substr(0, x)),
                                      std::stoul(block.substr(x + 1))};
                SeededRng rng(0xb000 + n);
                AttentionInput in;
                in.Q = random_matrix(rng, n, a.d, 1.0);
                in.K = random_matrix(rng, n, a.d, 1.0);
                in.V = random_matrix(rng, n, a.d, 1.0);

                auto run_once = [&]() {
                    const auto t0 = std::chrono::steady_clock::now();
                    if (engine == "naive") {
                        (void)naive_attention_entropy(in);
                    } else if (engine == "flash") {
                        (void)flash_attention(in, cfg, parse_precision(a.precision));
                    } else if (engine == "fae") {
                        (void)flash_attention_entropy(in, cfg, parse_precision(a.precision));
                    } else {
                        usage_error("unknown engine: " + engine);
                    }
                    return std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                        .count();
                };
                run_once();  // warm-up
                std::vector<double> times;
                for (std::size_t r = 0; r < a.reps; ++r) times.push_back(run_once());
                csv << engine << "," << n << "," << a.d << "," << cfg.B_r << "," << cfg.B_c
                    << "," << median_of(times) << "," << a.reps << "\n";
            }
        }
    }
    if (!a.out_file.empty()) write_text(a.out_file, csv.str());
    std::cout << csv.str();
    return kExitOk;
}

// ----------------------------------------------------------------------- bounds

int run_bounds(const std::string& scenario_file, const std::string& out_file) {
    if (!fs::exists(scenario_file)) usage_error("input not found: " + scenario_file);
    std::ifstream in(scenario_file);
    std::stringstream buf;
    buf << in.rdbuf();
    BoundScenario sc;
    try {
        sc = BoundScenario::from_json(buf.str());
    } catch (const json::exception& e) {
        usage_error(std::string("scenario schema violation: ") + e.what());
    }
    const TotalBoundReport rep = simulate_total_bound(sc);
    json doc = json::parse(rep.to_json());
    doc["config"] = json::parse(sc.to_json());
    const std::string text = doc.dump(2) + "\n";
    if (!out_file.empty()) write_text(out_file, text);
    std::cout << text;
    // A violated bound in an adversarial scenario is a documented outcome,
    // not a failure; the flags live in the report.
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toprokit: streaming attention entropy, tri-dimensional pruning policy, "
                 "toy multi-scale generation and bound simulation"};
    app.set_config("--config", "", "Read options from a TOML/INI file");

    std::size_t threads = 0;
    bool threads_given = false;
    app.add_option("--threads", threads, "Worker cap (default: TOPROKIT_THREADS or 1)")
        ->each([&](const std::string&) { threads_given = true; });

    EntropyArgs ea;
    CLI::App* entropy = app.add_subcommand("entropy", "Attention + entropy over TPRV tensors");
    entropy->add_option("--q", ea.q_path, "Query tensor (TPRV)")->required();
    entropy->add_option("--k", ea.k_path, "Key tensor (TPRV)")->required();
    entropy->add_option("--v", ea.v_path, "Value tensor (TPRV)")->required();
    entropy->add_option("--engine", ea.engine, "naive | flash | fae");
    entropy->add_option("--br", ea.b_r, "Query tile rows");
    entropy->add_option("--bc", ea.b_c, "Key tile columns");
    entropy->add_option("--precision", ea.precision, "f32 | f64");
    entropy->add_option("--scale", ea.scale, "Score scale (0 = 1/sqrt(d))");
    entropy->add_option("--naive-guard", ea.naive_guard,
                        "Refuse naive engine above this N");
    entropy->add_option("--out", ea.out_dir, "Output directory")->required();

    CalibrateArgs ca;
    CLI::App* calibrate =
        app.add_subcommand("calibrate", "Rho curves and tau recommendation from entropy maps");
    calibrate->add_option("--maps", ca.map_dirs, "Entropy-map directories")->required();
    std::int64_t cal_layer = -1;
    calibrate->add_option("--layer", cal_layer, "Reference layer (default: last)");
    calibrate->add_option("--band", ca.band, "Max run-to-run rho spread for stability");
    calibrate->add_option("--tau-grid", ca.tau_grid, "Tau candidates for the depth table");
    calibrate->add_option("--out", ca.out_file, "Report file (JSON)");

    GenerateArgs ga;
    CLI::App* gen = app.add_subcommand("generate", "Toy multi-scale generation with pruning");
    gen->add_option("--schedule", ga.schedule, "Comma-separated HxW scales");
    gen->add_option("--layers", ga.layers, "Transformer blocks");
    gen->add_option("--heads", ga.heads, "Attention heads");
    gen->add_option("--d-model", ga.d_model, "Model width");
    gen->add_option("--weight-seed", ga.weight_seed, "Weight/init seed");
    gen->add_option("--br", ga.b_r, "Query tile rows");
    gen->add_option("--bc", ga.b_c, "Key tile columns");
    gen->add_option("--precision", ga.precision, "Kernel precision: f32 | f64");
    gen->add_flag("--baseline-only", ga.baseline_only, "Skip the pruned run and report");
    gen->add_option("--tau", ga.policy.tau, "Low-entropy-ratio threshold");
    gen->add_option("--beta", ga.policy.beta, "Layer-score exponent");
    gen->add_option("--alpha-min", ga.policy.alpha_min, "Pruning range lower bound");
    gen->add_option("--alpha-max", ga.policy.alpha_max, "Pruning range upper bound");
    gen->add_option("--detail-threshold", ga.policy.detail_threshold,
                    "Detail label threshold on the layer score");
    gen->add_option("--depth-comparison", ga.depth_comparison, "at_least | at_most");
    gen->add_option("--prune-mode", ga.prune_mode, "deterministic | sampled");
    gen->add_option("--policy-seed", ga.policy.rng_seed, "Seed for sampled masks");
    std::int64_t gen_ref_layer = -1, gen_rep_scale = -1;
    gen->add_option("--reference-layer", gen_ref_layer, "Layer for rho (default: last)");
    gen->add_option("--rep-scale", gen_rep_scale,
                    "Classifier scale (default: middle of the schedule)");
    gen->add_option("--out", ga.out_dir, "Output directory");

    BenchArgs ba;
    CLI::App* bench = app.add_subcommand("bench", "Kernel timing table (CSV)");
    bench->add_option("--n-grid", ba.n_grid, "Sequence lengths");
    bench->add_option("--d", ba.d, "Head dimension");
    bench->add_option("--block-grid", ba.block_grid, "Tile configs, HxW");
    bench->add_option("--reps", ba.reps, "Repetitions (median reported)");
    bench->add_option("--engines", ba.engines, "Engines to time");
    bench->add_option("--precision", ba.precision, "f32 | f64");
    bench->add_option("--out", ba.out_file, "CSV output file");

    std::string bounds_scenario, bounds_out;
    CLI::App* bounds = app.add_subcommand("bounds", "Monte-Carlo bound validation");
    bounds->add_option("--scenario", bounds_scenario, "Scenario file (JSON)")->required();
    bounds->add_option("--out", bounds_out, "Report file (JSON)");

    app.require_subcommand(1);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        json err;
        err["error"] = e.what();
        std::cerr << err.dump() << "\n";
        return kExitUsageError;
    }

    if (!threads_given) {
        if (const char* env = std::getenv("TOPROKIT_THREADS")) {
            threads = std::strtoull(env, nullptr, 10);
        } else {
            threads = 1;
        }
    }
    set_thread_count(threads == 0 ? 1 : threads);

    if (cal_layer >= 0) ca.reference_layer = static_cast<std::size_t>(cal_layer);
    if (gen_ref_layer >= 0) ga.reference_layer = static_cast<std::size_t>(gen_ref_layer);
    if (gen_rep_scale >= 0) ga.rep_scale = static_cast<std::size_t>(gen_rep_scale);

    try {
        if (*entropy) return run_entropy(ea);
        if (*calibrate) return run_calibrate(ca);
        if (*gen) return run_generate(ga);
        if (*bench) return run_bench(ba);
        if (*bounds) return run_bounds(bounds_scenario, bounds_out);
    } catch (const std::exception& e) {
        json err;
        err["error"] = e.what();
        std::cerr << err.dump() << "\n";
        return kExitComputeError;
    }
    return kExitUsageError;
}
