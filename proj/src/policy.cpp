#include "toprokit/policy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace toprokit {

namespace fs = std::filesystem;
using nlohmann::json;

void PolicyConfig::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(tau)) throw std::invalid_argument("policy: tau must be in [0,1]");
    if (beta <= 0.0) throw std::invalid_argument("policy: beta must be positive");
    if (!in_unit(alpha_min) || !in_unit(alpha_max) || alpha_max < alpha_min) {
        throw std::invalid_argument("policy: need 0 <= alpha_min <= alpha_max <= 1");
    }
    if (!in_unit(detail_threshold)) {
        throw std::invalid_argument("policy: detail_threshold must be in [0,1]");
    }
}

std::size_t TokenDecision::kept_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

ScaleDecision scale_depth(const std::vector<double>& rho, const PolicyConfig& cfg) {
    if (rho.empty()) {
        throw std::invalid_argument("scale_depth: empty rho sequence");
    }
    for (double r : rho) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw std::invalid_argument("scale_depth: rho entries must be in [0,1]");
        }
    }
    ScaleDecision dec;
    dec.rho_per_scale = rho;
    for (std::size_t s = 1; s <= rho.size(); ++s) {
        const double r = rho[s - 1];
        const bool hit = cfg.depth_comparison == DepthComparison::at_least ? r >= cfg.tau
                                                                           : r <= cfg.tau;
        if (hit) {
            dec.depth = s;
            break;
        }
    }
    return dec;
}

std::vector<double> token_tendency(std::size_t scale, std::size_t s_max, double layer_score,
                                   const std::vector<double>& normalized_entropy) {
    if (scale > s_max || scale < 1) {
        throw std::invalid_argument("token_tendency: scale must be in [1, S_max]");
    }
    const double phi = static_cast<double>(scale) / static_cast<double>(s_max);
    std::vector<double> q(normalized_entropy.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = phi * layer_score * normalized_entropy[i];
    return q;
}

namespace {

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Indices ordered by descending P_keep, ties broken by the lower token index.
std::vector<std::size_t> keep_order(const std::vector<double>& p_keep) {
    std::vector<std::size_t> order(p_keep.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p_keep[a] > p_keep[b]; });
    return order;
}

}  // namespace

TokenDecision retention(const std::vector<double>& tendency, std::size_t scale,
                        const ScaleDecision& decision, const PolicyConfig& cfg) {
    cfg.validate();
    if (scale < 1 || scale > decision.rho_per_scale.size()) {
        throw std::invalid_argument("retention: scale index outside the decision's range");
    }
    for (double q : tendency) {
        if (!(q >= 0.0)) {
            throw std::invalid_argument("retention: tendencies must be nonnegative");
        }
    }
    const std::size_t n = tendency.size();
    TokenDecision out;
    out.scale = scale;
    out.layer = 0;
    out.tendency = tendency;
    out.keep_probability.resize(n);

    const bool prunable = decision.depth.has_value() && scale >= *decision.depth;
    if (!prunable) {
        std::fill(out.keep_probability.begin(), out.keep_probability.end(), 1.0);
        out.mask.assign(n, true);
        return out;
    }

    double expected_keep = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double prune_p = clip01(cfg.alpha_min + (cfg.alpha_max - cfg.alpha_min) * tendency[i]);
        out.keep_probability[i] = 1.0 - prune_p;
        expected_keep += out.keep_probability[i];
    }

    const std::size_t floor_keep =
        static_cast<std::size_t>(std::ceil((1.0 - cfg.alpha_max) * static_cast<double>(n)));
    out.mask.assign(n, false);
    if (cfg.prune_mode == PruneMode::deterministic) {
        std::size_t target = static_cast<std::size_t>(std::ceil(expected_keep));
        target = std::min(n, std::max(target, floor_keep));
        const std::vector<std::size_t> order = keep_order(out.keep_probability);
        for (std::size_t r = 0; r < target; ++r) out.mask[order[r]] = true;
    } else {
        SeededRng rng(cfg.rng_seed ^ (static_cast<std::uint64_t>(scale) << 32));
        std::size_t kept = 0;
        for (std::size_t i = 0; i < n; ++i) {
            // next_unit is in (0,1], so P_keep = 1 always keeps and 0 never does.
            if (rng.next_unit() <= out.keep_probability[i]) {
                out.mask[i] = true;
                ++kept;
            }
        }
        if (kept < floor_keep) {
            // Keep-ratio safeguard: top up with the highest-P_keep pruned tokens.
            const std::vector<std::size_t> order = keep_order(out.keep_probability);
            for (std::size_t r = 0; r < n && kept < floor_keep; ++r) {
                if (!out.mask[order[r]]) {
                    out.mask[order[r]] = true;
                    ++kept;
                }
            }
        }
    }
    return out;
}

PruningPlan build_plan(const EntropyMap& map,
                       const std::vector<LayerClassification>& classifications,
                       const PolicyConfig& cfg) {
    cfg.validate();
    const std::size_t layers = map.layer_count();
    const std::size_t s_max = map.schedule().size();
    if (classifications.size() != layers) {
        throw std::invalid_argument("build_plan: classifications must cover every layer");
    }
    for (std::size_t l = 0; l < layers; ++l) {
        if (classifications[l].layer != l) {
            throw std::invalid_argument("build_plan: classifications must be ordered by layer");
        }
    }
    const std::size_t ref_layer = cfg.reference_layer.value_or(layers - 1);
    if (ref_layer >= layers) {
        throw std::invalid_argument("build_plan: reference layer out of range");
    }

    PruningPlan plan;
    plan.classifications = classifications;
    std::vector<double> rho(s_max);
    for (std::size_t s = 1; s <= s_max; ++s) {
        rho[s - 1] = scale_stats(map, s, ref_layer).low_entropy_ratio;
    }
    plan.scale_decision = scale_depth(rho, cfg);

    plan.decisions.reserve(s_max * layers);
    for (std::size_t s = 1; s <= s_max; ++s) {
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t n = map.schedule().tokens_at(s);
            const bool gate_open = plan.scale_decision.depth.has_value() &&
                                   s >= *plan.scale_decision.depth &&
                                   classifications[l].label == LayerLabel::Detail;
            TokenDecision dec;
            if (gate_open) {
                const std::vector<double> h_hat =
                    normalize_entropy_or_uniform(head_average(map, s, l));
                const std::vector<double> q =
                    token_tendency(s, s_max, classifications[l].score, h_hat);
                dec = retention(q, s, plan.scale_decision, cfg);
                for (std::size_t i = 0; i < n; ++i) {
                    if (!dec.mask[i]) dec.pruned_importance_mass += h_hat[i];
                }
            } else {
                dec.scale = s;
                dec.tendency.assign(n, 0.0);
                dec.keep_probability.assign(n, 1.0);
                dec.mask.assign(n, true);
            }
            dec.layer = l;
            plan.decisions.push_back(std::move(dec));
        }
    }
    return plan;
}

void save_plan(const PruningPlan& plan, const std::string& dir) {
    fs::create_directories(dir);
    json doc;
    doc["format_version"] = 1;
    doc["rho_per_scale"] = plan.scale_decision.rho_per_scale;
    if (plan.scale_decision.depth) {
        doc["depth"] = *plan.scale_decision.depth;
    } else {
        doc["depth"] = nullptr;
    }
    json layers = json::array();
    for (const auto& c : plan.classifications) {
        layers.push_back({{"layer", c.layer},
                          {"scale", c.scale},
                          {"sigma1", c.sigma1},
                          {"sigma2", c.sigma2},
                          {"pc_ratio", c.pc_ratio},
                          {"score", c.score},
                          {"label", c.label == LayerLabel::Detail ? "Detail" : "Global"}});
    }
    doc["layers"] = layers;
    json decisions = json::array();
    for (const auto& d : plan.decisions) {
        const std::string mask_file =
            "mask_s" + std::to_string(d.scale) + "_l" + std::to_string(d.layer) + ".tprv";
        Matrix2D mask(1, d.mask.size());
        for (std::size_t i = 0; i < d.mask.size(); ++i) mask.data()[i] = d.mask[i] ? 1.0 : 0.0;
        matrix_to_file(mask, (fs::path(dir) / mask_file).string(), TprvDtype::f32);
        decisions.push_back({{"scale", d.scale},
                             {"layer", d.layer},
                             {"kept", d.kept_count()},
                             {"tokens", d.mask.size()},
                             {"pruned_importance_mass", d.pruned_importance_mass},
                             {"mask_file", mask_file}});
    }
    doc["decisions"] = decisions;
    std::ofstream out(fs::path(dir) / "plan.json");
    out << doc.dump(2) << "\n";
    if (!out) {
        throw std::runtime_error("save_plan: failed to write plan.json in " + dir);
    }
}

}  // namespace toprokit
