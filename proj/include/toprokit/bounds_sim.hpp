#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace toprokit {

// Monte-Carlo validation of the average-case pruning error bounds. Increments
// and residuals are isotropic Gaussians; "approximately uncorrelated" is
// realized as exact independence, with a correlation knob for probing how the
// scale bound degrades when that premise fails. Proportionality constants are
// fixed to 1: the per-scale energy is F_s = 1 - rho_s.

struct ScaleBoundResult {
    std::vector<double> energies;        // F_s = 1 - rho_s
    double total_energy = 0.0;           // F
    std::optional<std::size_t> depth;    // truncation scale D (1-based)
    double mean_e_scale = 0.0;           // mean ||sum_{s>D} dZ_s||^2
    double bound = 0.0;                  // (1 - rho_D) * F; 0 when no depth
    double correlation = 0.0;
};

struct LayerBoundResult {
    double gamma_s = 0.0;       // pruned score fraction
    double mean_e_layer = 0.0;  // mean ||sum_pruned Delta_l||^2
    double prediction = 0.0;    // gamma_s * G_s (equality in expectation)
    double ratio = 0.0;         // measured / prediction; 0 when prediction is 0
};

struct TokenBoundResult {
    double gamma = 0.0;         // pruned importance mass
    double mean_e_token = 0.0;
    double bound = 0.0;         // gamma * H
};

// Samples i.i.d. Gaussian increments with per-scale energy 1 - rho_s,
// truncates at D = min{s | rho_s >= tau} and measures the energy of the
// discarded tail against the (1 - rho_D) * F bound. correlation in [0, 1]
// mixes a component shared across scales into every increment (energies
// unchanged, cross-correlation injected).
ScaleBoundResult simulate_scale_bound(const std::vector<double>& rho, double tau,
                                      std::size_t dim, std::size_t trials, std::uint64_t seed,
                                      double correlation = 0.0);

// Residuals with energies (R_l / sum R) * G_s, orthogonal in expectation;
// measures the pruned-set energy against gamma_s * G_s.
LayerBoundResult simulate_layer_bound(const std::vector<double>& scores, double g_s,
                                      const std::vector<std::size_t>& pruned, std::size_t dim,
                                      std::size_t trials, std::uint64_t seed);

// Token energies sampled with mean w_i * H; pruned-mass energy vs gamma * H.
TokenBoundResult simulate_token_bound(const std::vector<double>& weights, double h_total,
                                      const std::vector<std::size_t>& pruned,
                                      std::size_t trials, std::uint64_t seed);

// Composite scenario: one scale process, one layer model per scale, one token
// model, all driven by independent derived seeds.
struct BoundScenario {
    std::vector<double> rho;
    double tau = 0.4;
    std::size_t dim = 256;
    std::size_t trials = 2000;
    std::uint64_t seed = 11;
    double correlation = 0.0;

    struct LayerModel {
        std::vector<double> scores;
        double g_s = 1.0;
        std::vector<std::size_t> pruned;
    };
    std::vector<LayerModel> layer_models;

    std::vector<double> token_weights;
    double token_energy = 0.0;
    std::vector<std::size_t> token_pruned;

    std::string to_json() const;
    static BoundScenario from_json(const std::string& text);
};

struct TotalBoundReport {
    ScaleBoundResult scale;
    std::vector<LayerBoundResult> layers;
    TokenBoundResult token;
    double total_measured = 0.0;
    double total_bound = 0.0;  // (1-rho_D)F + sum_s gamma_s G_s + gamma H
    bool bound_satisfied = true;       // total_measured <= 1.1 * total_bound
    bool assumptions_satisfied = true; // false when correlation is injected

    std::string to_json() const;
};

TotalBoundReport simulate_total_bound(const BoundScenario& scenario);

}  // namespace toprokit
