#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "toprokit/entropy_stats.hpp"
#include "toprokit/layer_classifier.hpp"

namespace toprokit {

enum class DepthComparison { at_least, at_most };
enum class PruneMode { deterministic, sampled };

struct PolicyConfig {
    double tau = 0.4;
    double beta = 1.0;
    // q_i carries a normalized entropy (sum 1 over the layer), so per-token
    // prune probabilities beyond alpha_min are O(1/N): alpha_min sets the
    // baseline pruned fraction at prunable (s, l) and the entropy term decides
    // which tokens go. alpha_min = 0 would make every plan a no-op.
    double alpha_min = 0.2;
    double alpha_max = 0.9;
    double detail_threshold = 0.5;
    DepthComparison depth_comparison = DepthComparison::at_least;
    PruneMode prune_mode = PruneMode::deterministic;
    std::uint64_t rng_seed = 0;
    // Layer whose head-averaged entropies feed the per-scale low-entropy
    // ratio; none selects the last layer.
    std::optional<std::size_t> reference_layer;
    // Scale the classifier runs at; none selects ceil(S_max/2).
    std::optional<std::size_t> representative_scale;

    void validate() const;  // throws std::invalid_argument on out-of-range fields
};

// Scale-depth decision: the per-scale low-entropy ratios and the first scale
// at which the configured comparison against tau holds. No depth means the
// threshold is never crossed and nothing is pruned anywhere.
struct ScaleDecision {
    std::vector<double> rho_per_scale;
    std::optional<std::size_t> depth;  // 1-based
};

// Per-(scale, layer) token retention decision.
struct TokenDecision {
    std::size_t scale = 0;
    std::size_t layer = 0;
    std::vector<double> tendency;          // q_i
    std::vector<double> keep_probability;  // P_keep in [0, 1]
    std::vector<bool> mask;                // true = keep
    double pruned_importance_mass = 0.0;   // gamma: normalized-entropy mass of pruned tokens

    std::size_t kept_count() const;
};

struct PruningPlan {
    ScaleDecision scale_decision;
    std::vector<LayerClassification> classifications;
    // One decision per (scale, layer), scale-major order; all-keep wherever a
    // gate is closed.
    std::vector<TokenDecision> decisions;

    const TokenDecision& decision(std::size_t scale, std::size_t layer,
                                  std::size_t layer_count) const {
        return decisions[(scale - 1) * layer_count + layer];
    }
};

// D = min{ s | rho_s >= tau } (at_least, the default) or the at_most variant
// min{ s | rho_s <= tau }. 1-based; nullopt when never satisfied.
ScaleDecision scale_depth(const std::vector<double>& rho, const PolicyConfig& cfg);

// Unified pruning tendency q_i = (s/S_max) * layer_score * normalized_entropy_i.
std::vector<double> token_tendency(std::size_t scale, std::size_t s_max, double layer_score,
                                   const std::vector<double>& normalized_entropy);

// Piecewise retention probability and mask materialization:
//   P_keep = 1                                           if s < D (or no D)
//   P_keep = 1 - clip(a_min + (a_max - a_min) q_i, 0, 1) otherwise.
// Deterministic mode keeps the ceil(sum P_keep) highest-P_keep tokens (ties to
// the lower index); sampled mode draws Bernoulli(P_keep) with the seeded
// generator. Both modes keep at least ceil((1 - a_max) * N) tokens.
TokenDecision retention(const std::vector<double>& tendency, std::size_t scale,
                        const ScaleDecision& decision, const PolicyConfig& cfg);

// Full tri-dimensional plan: rho per scale from the reference layer, depth D,
// then token decisions for Detail layers at scales >= D; Global layers and
// scales below D get all-keep masks.
PruningPlan build_plan(const EntropyMap& map,
                       const std::vector<LayerClassification>& classifications,
                       const PolicyConfig& cfg);

// Plan serialization: JSON for the scalar decisions plus one TPRV 0/1 mask
// per (scale, layer), stored as 32-bit floats.
void save_plan(const PruningPlan& plan, const std::string& dir);

}  // namespace toprokit
