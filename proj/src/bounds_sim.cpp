#include "toprokit/bounds_sim.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "toprokit/matrix.hpp"
#include "toprokit/policy.hpp"
#include "toprokit/threading.hpp"

namespace toprokit {

using nlohmann::json;

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t trial) {
    SeededRng rng(seed ^ (stream * 0xd1b54a32d192ed03ULL));
    rng.next_u64();
    return rng.next_u64() ^ (trial * 0x9e3779b97f4a7c15ULL);
}

// Neumaier-compensated sum in trial order: the aggregate is identical no
// matter how many workers filled the slots.
double compensated_mean(const std::vector<double>& values) {
    double sum = 0.0, comp = 0.0;
    for (double v : values) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    return values.empty() ? 0.0 : (sum + comp) / static_cast<double>(values.size());
}

void validate_rho(const std::vector<double>& rho) {
    if (rho.empty()) {
        throw std::invalid_argument("bounds: rho must be nonempty");
    }
    for (double r : rho) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw std::invalid_argument("bounds: rho entries must be in [0,1]");
        }
    }
}

}  // namespace

ScaleBoundResult simulate_scale_bound(const std::vector<double>& rho, double tau,
                                      std::size_t dim, std::size_t trials, std::uint64_t seed,
                                      double correlation) {
    validate_rho(rho);
    if (dim < 1) {
        throw std::invalid_argument("bounds: dim must be >= 1");
    }
    if (!(correlation >= 0.0 && correlation <= 1.0)) {
        throw std::invalid_argument("bounds: correlation must be in [0,1]");
    }

    ScaleBoundResult res;
    res.correlation = correlation;
    const std::size_t s_max = rho.size();
    res.energies.resize(s_max);
    for (std::size_t s = 0; s < s_max; ++s) {
        res.energies[s] = 1.0 - rho[s];
        res.total_energy += res.energies[s];
    }
    PolicyConfig cfg;
    cfg.tau = tau;
    res.depth = scale_depth(rho, cfg).depth;

    std::vector<std::size_t> pruned;
    if (res.depth) {
        for (std::size_t s = *res.depth + 1; s <= s_max; ++s) pruned.push_back(s);
        res.bound = (1.0 - rho[*res.depth - 1]) * res.total_energy;
    }
    if (pruned.empty()) {
        res.mean_e_scale = 0.0;
        return res;
    }

    const double per_coord = 1.0 / static_cast<double>(dim);
    const double w_shared = std::sqrt(correlation);
    const double w_own = std::sqrt(1.0 - correlation);

    std::vector<double> per_trial(trials, 0.0);
    parallel_for(trials, [&](std::size_t t) {
        SeededRng rng(derive_seed(seed, 1, t));
        std::vector<double> shared(dim);
        for (double& v : shared) v = rng.next_gaussian();
        std::vector<double> acc(dim, 0.0);
        for (std::size_t s : pruned) {
            const double amp = std::sqrt(res.energies[s - 1] * per_coord);
            for (std::size_t c = 0; c < dim; ++c) {
                acc[c] += amp * (w_own * rng.next_gaussian() + w_shared * shared[c]);
            }
        }
        double e = 0.0;
        for (double v : acc) e += v * v;
        per_trial[t] = e;
    });
    res.mean_e_scale = compensated_mean(per_trial);
    return res;
}

LayerBoundResult simulate_layer_bound(const std::vector<double>& scores, double g_s,
                                      const std::vector<std::size_t>& pruned, std::size_t dim,
                                      std::size_t trials, std::uint64_t seed) {
    double score_sum = 0.0;
    for (double r : scores) {
        if (!(r >= 0.0)) {
            throw std::invalid_argument("bounds: layer scores must be nonnegative");
        }
        score_sum += r;
    }
    if (score_sum <= 0.0) {
        throw std::invalid_argument("bounds: layer scores must not be all zero");
    }
    if (dim < 1) {
        throw std::invalid_argument("bounds: dim must be >= 1");
    }
    LayerBoundResult res;
    double pruned_score = 0.0;
    for (std::size_t l : pruned) {
        if (l >= scores.size()) {
            throw std::invalid_argument("bounds: pruned layer index out of range");
        }
        pruned_score += scores[l];
    }
    res.gamma_s = pruned_score / score_sum;
    res.prediction = res.gamma_s * g_s;
    if (pruned.empty()) {
        return res;
    }

    const double per_coord = 1.0 / static_cast<double>(dim);
    std::vector<double> per_trial(trials, 0.0);
    parallel_for(trials, [&](std::size_t t) {
        SeededRng rng(derive_seed(seed, 2, t));
        std::vector<double> acc(dim, 0.0);
        for (std::size_t l : pruned) {
            const double amp = std::sqrt(scores[l] / score_sum * g_s * per_coord);
            for (std::size_t c = 0; c < dim; ++c) acc[c] += amp * rng.next_gaussian();
        }
        double e = 0.0;
        for (double v : acc) e += v * v;
        per_trial[t] = e;
    });
    res.mean_e_layer = compensated_mean(per_trial);
    res.ratio = res.prediction > 0.0 ? res.mean_e_layer / res.prediction : 0.0;
    return res;
}

TokenBoundResult simulate_token_bound(const std::vector<double>& weights, double h_total,
                                      const std::vector<std::size_t>& pruned,
                                      std::size_t trials, std::uint64_t seed) {
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) {
            throw std::invalid_argument("bounds: token weights must be nonnegative");
        }
        wsum += w;
    }
    if (weights.empty() || std::abs(wsum - 1.0) > 1e-9) {
        throw std::invalid_argument("bounds: token weights must form a probability vector");
    }
    TokenBoundResult res;
    for (std::size_t i : pruned) {
        if (i >= weights.size()) {
            throw std::invalid_argument("bounds: pruned token index out of range");
        }
        res.gamma += weights[i];
    }
    res.bound = res.gamma * h_total;
    if (pruned.empty()) {
        return res;
    }

    std::vector<double> per_trial(trials, 0.0);
    parallel_for(trials, [&](std::size_t t) {
        SeededRng rng(derive_seed(seed, 3, t));
        double e = 0.0;
        // chi^2_1-distributed energies with mean w_i * H.
        for (std::size_t i : pruned) {
            const double g = rng.next_gaussian();
            e += weights[i] * h_total * g * g;
        }
        per_trial[t] = e;
    });
    res.mean_e_token = compensated_mean(per_trial);
    return res;
}

TotalBoundReport simulate_total_bound(const BoundScenario& sc) {
    TotalBoundReport rep;
    rep.assumptions_satisfied = sc.correlation == 0.0;

    if (!sc.rho.empty()) {
        rep.scale = simulate_scale_bound(sc.rho, sc.tau, sc.dim, sc.trials, sc.seed,
                                         sc.correlation);
    }
    std::uint64_t stream = 100;
    for (const auto& lm : sc.layer_models) {
        rep.layers.push_back(
            simulate_layer_bound(lm.scores, lm.g_s, lm.pruned, sc.dim, sc.trials,
                                 sc.seed ^ (stream++ * 0x9e3779b97f4a7c15ULL)));
    }
    if (!sc.token_weights.empty()) {
        rep.token = simulate_token_bound(sc.token_weights, sc.token_energy, sc.token_pruned,
                                         sc.trials, sc.seed ^ 0xabcdef12345ULL);
    }

    rep.total_measured = rep.scale.mean_e_scale + rep.token.mean_e_token;
    rep.total_bound = rep.scale.bound + rep.token.bound;
    for (const auto& l : rep.layers) {
        rep.total_measured += l.mean_e_layer;
        rep.total_bound += l.prediction;
    }
    rep.bound_satisfied = rep.total_measured <= 1.1 * rep.total_bound ||
                          (rep.total_measured == 0.0 && rep.total_bound == 0.0);
    return rep;
}

std::string BoundScenario::to_json() const {
    json doc;
    doc["rho"] = rho;
    doc["tau"] = tau;
    doc["dim"] = dim;
    doc["trials"] = trials;
    doc["seed"] = seed;
    doc["correlation"] = correlation;
    json layers = json::array();
    for (const auto& lm : layer_models) {
        layers.push_back({{"scores", lm.scores}, {"g_s", lm.g_s}, {"pruned", lm.pruned}});
    }
    doc["layer_models"] = layers;
    doc["token_weights"] = token_weights;
    doc["token_energy"] = token_energy;
    doc["token_pruned"] = token_pruned;
    return doc.dump(2) + "\n";
}

BoundScenario BoundScenario::from_json(const std::string& text) {
    json doc = json::parse(text);
    BoundScenario sc;
    sc.rho = doc.value("rho", std::vector<double>{});
    sc.tau = doc.value("tau", 0.4);
    sc.dim = doc.value("dim", std::size_t{256});
    sc.trials = doc.value("trials", std::size_t{2000});
    sc.seed = doc.value("seed", std::uint64_t{11});
    sc.correlation = doc.value("correlation", 0.0);
    if (doc.contains("layer_models")) {
        for (const auto& lm : doc["layer_models"]) {
            BoundScenario::LayerModel m;
            m.scores = lm.at("scores").get<std::vector<double>>();
            m.g_s = lm.value("g_s", 1.0);
            m.pruned = lm.value("pruned", std::vector<std::size_t>{});
            sc.layer_models.push_back(std::move(m));
        }
    }
    sc.token_weights = doc.value("token_weights", std::vector<double>{});
    sc.token_energy = doc.value("token_energy", 0.0);
    sc.token_pruned = doc.value("token_pruned", std::vector<std::size_t>{});
    return sc;
}

std::string TotalBoundReport::to_json() const {
    json doc;
    doc["scale"] = {{"mean_e_scale", scale.mean_e_scale},
                    {"bound", scale.bound},
                    {"depth", scale.depth ? json(*scale.depth) : json(nullptr)},
                    {"total_energy", scale.total_energy},
                    {"correlation", scale.correlation}};
    json layer_arr = json::array();
    for (const auto& l : layers) {
        layer_arr.push_back({{"mean_e_layer", l.mean_e_layer},
                             {"prediction", l.prediction},
                             {"gamma_s", l.gamma_s},
                             {"ratio", l.ratio}});
    }
    doc["layers"] = layer_arr;
    doc["token"] = {{"mean_e_token", token.mean_e_token},
                    {"bound", token.bound},
                    {"gamma", token.gamma}};
    doc["total_measured"] = total_measured;
    doc["total_bound"] = total_bound;
    doc["bound_satisfied"] = bound_satisfied;
    doc["assumptions_satisfied"] = assumptions_satisfied;
    return doc.dump(2) + "\n";
}

}  // namespace toprokit
