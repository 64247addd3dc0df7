#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toprokit/attention.hpp"
#include "toprokit/entropy_stats.hpp"
#include "toprokit/matrix.hpp"
#include "toprokit/policy.hpp"

namespace toprokit {

// Desk-scale next-scale-prediction transformer. Continuous token maps, fixed
// seeded Gaussian weights, no training: the harness exercises the pruning
// machinery, not learned quality.
struct ToyModelConfig {
    ScaleSchedule schedule{
        {{1, 1}, {2, 2}, {4, 4}, {8, 8}, {16, 16}}};
    std::size_t layers = 4;
    std::size_t heads = 2;
    std::size_t d_model = 32;
    std::uint64_t weight_seed = 1234;
    BlockConfig blocks{64, 64};
    Precision precision = Precision::f64;
    bool record_qk = false;  // stash per-(s,l,h) Q/K for hook-consistency tests

    void validate() const;
};

struct GenerationTrace {
    ScaleSchedule schedule;
    std::vector<Matrix2D> token_maps;          // final map per scale, N_s x d_model
    EntropyMap entropy_map;                     // per (s, l, h); pruned tokens hold 0
    std::vector<std::size_t> tokens_processed;  // (s-1)*layers + l -> kept query count
    std::vector<double> wall_time_per_scale;    // seconds
    std::size_t layer_count = 0;

    struct QKRecord {
        Matrix2D Q;  // kept query rows for the head
        Matrix2D K;  // full context keys for the head
    };
    std::map<EntropyKey, QKRecord> qk;  // populated only with record_qk

    std::size_t processed(std::size_t scale, std::size_t layer) const {
        return tokens_processed[(scale - 1) * layer_count + layer];
    }
    std::size_t total_processed() const;

    // Directory persistence: TPRV tensors + manifest.json. Wall times go to a
    // separate timings.json so everything else is byte-comparable across runs.
    void save(const std::string& dir) const;
    static GenerationTrace load(const std::string& dir);
};

// Coarse-to-fine generation. Scale-s tokens attend over the concatenation of
// all completed scale maps and the current map; each of the L blocks is
// pre-norm attention + two-layer feedforward with residuals. With a plan,
// tokens masked out at (s, l) bypass the whole block (residual passthrough);
// no plan behaves exactly like an all-keep plan.
GenerationTrace generate(const ToyModelConfig& cfg, const PruningPlan* plan = nullptr);

// Global single-window SSIM over all elements, population statistics.
double ssim(const Matrix2D& x, const Matrix2D& y, double c1 = 1e-4, double c2 = 1e-4);

struct CompareReport {
    std::vector<double> ssim_per_scale;  // final token maps, baseline vs pruned
    double token_reduction = 0.0;        // 1 - processed_pruned / processed_baseline
    double wall_time_ratio = 0.0;        // pruned / baseline
    std::size_t processed_baseline = 0;
    std::size_t processed_pruned = 0;

    std::string to_json() const;
    std::string to_csv() const;
};

CompareReport compare_runs(const GenerationTrace& baseline, const GenerationTrace& pruned);

}  // namespace toprokit
