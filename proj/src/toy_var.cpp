#include "toprokit/toy_var.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace toprokit {

namespace fs = std::filesystem;
using nlohmann::json;

void ToyModelConfig::validate() const {
    if (layers < 1 || heads < 1 || d_model < 1) {
        throw std::invalid_argument("toy model: layers, heads and d_model must be >= 1");
    }
    if (d_model % heads != 0) {
        throw std::invalid_argument("toy model: d_model must be divisible by heads");
    }
    if (schedule.size() < 1) {
        throw std::invalid_argument("toy model: schedule must have at least one scale");
    }
}

namespace {

struct LayerWeights {
    Matrix2D wq, wk, wv, wo;  // d x d
    Matrix2D w1;              // d x 2d
    Matrix2D w2;              // 2d x d
    double gate_exponent = 0.0;
};

// All weights come from one SplitMix64 stream in a fixed order (per layer:
// wq, wk, wv, wo, w1, w2), then the gate direction, the scale-1 token map and
// one positional map per scale above 1.
//
// Each query row is scaled by exp(gate_exponent * <x_hat, gate_dir>/sqrt(d)),
// a per-token attention temperature. The positional maps plant the gate
// direction with alternating spatial sign, so in deep layers (large exponent)
// sharply focused tokens (entropy near 0) and diffuse ones (entropy near
// log N) interleave across the grid. The resulting entropy grids carry
// comparable DC and alternating components — the near-equal top singular
// values of a prunable layer — while shallow layers stay smooth and
// DC-dominated. Without this spread every grid is rank-1-like and the
// scale/layer/token statistics have nothing to discriminate.
struct ToyWeights {
    std::vector<LayerWeights> layers;
    Matrix2D gate_dir;  // 1 x d
    Matrix2D initial_tokens;
    std::vector<Matrix2D> positional;  // index s-2 for scales 2..S
};

ToyWeights make_weights(const ToyModelConfig& cfg) {
    SeededRng rng(cfg.weight_seed);
    const std::size_t d = cfg.d_model;
    const double dd = static_cast<double>(d);
    const double sigma = 0.5 / std::sqrt(dd);
    const double sigma_qk = std::sqrt(2.0 / dd);  // base score contrast ~2 nats
    ToyWeights w;
    w.layers.reserve(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const double depth_frac =
            cfg.layers > 1 ? static_cast<double>(l) / static_cast<double>(cfg.layers - 1) : 1.0;
        LayerWeights lw;
        lw.wq = random_matrix(rng, d, d, sigma_qk);
        lw.wk = random_matrix(rng, d, d, sigma_qk);
        lw.wv = random_matrix(rng, d, d, sigma);
        lw.wo = random_matrix(rng, d, d, sigma);
        lw.w1 = random_matrix(rng, d, 2 * d, sigma);
        lw.w2 = random_matrix(rng, 2 * d, d, sigma);
        lw.gate_exponent = 0.1 * std::pow(20.0, depth_frac);
        w.layers.push_back(std::move(lw));
    }
    w.gate_dir = random_matrix(rng, 1, d, 1.0);
    w.initial_tokens = random_matrix(rng, cfg.schedule.tokens_at(1), d, 1.0);
    // Upsampling replicates rows; the positional maps keep sibling tokens
    // distinct and carry the alternating gate component.
    for (std::size_t s = 2; s <= cfg.schedule.size(); ++s) {
        const auto& entry = cfg.schedule.at_scale(s);
        Matrix2D pos = random_matrix(rng, entry.tokens(), d, 0.5);
        for (std::size_t r = 0; r < entry.h; ++r) {
            for (std::size_t c = 0; c < entry.w; ++c) {
                const double parity = (r + c) % 2 == 0 ? 1.0 : -1.0;
                double* row = pos.row_ptr(r * entry.w + c);
                for (std::size_t k = 0; k < d; ++k) {
                    row[k] += 1.5 * parity * w.gate_dir.at(0, k);
                }
            }
        }
        w.positional.push_back(std::move(pos));
    }
    return w;
}

Matrix2D matmul(const Matrix2D& a, const Matrix2D& b) {
    Matrix2D out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double v = arow[k];
            if (v == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += v * brow[j];
        }
    }
    return out;
}

// Parameter-free per-row RMS normalization; keeps block inputs O(1) so the
// softmax scores stay in a meaningful range across scales.
Matrix2D rms_norm(const Matrix2D& x) {
    Matrix2D out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* in = x.row_ptr(i);
        double ss = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) ss += in[c] * in[c];
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.cols()) + 1e-12);
        double* o = out.row_ptr(i);
        for (std::size_t c = 0; c < x.cols(); ++c) o[c] = in[c] * inv;
    }
    return out;
}

Matrix2D gather_rows(const Matrix2D& x, const std::vector<std::size_t>& rows) {
    Matrix2D out(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* in = x.row_ptr(rows[i]);
        double* o = out.row_ptr(i);
        for (std::size_t c = 0; c < x.cols(); ++c) o[c] = in[c];
    }
    return out;
}

Matrix2D slice_cols(const Matrix2D& x, std::size_t c0, std::size_t width) {
    Matrix2D out(x.rows(), width);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* in = x.row_ptr(i) + c0;
        double* o = out.row_ptr(i);
        for (std::size_t c = 0; c < width; ++c) o[c] = in[c];
    }
    return out;
}

// Nearest-neighbor replication from the previous grid to the next one.
Matrix2D upsample_nn(const Matrix2D& src, const ScaleSchedule::Entry& from,
                     const ScaleSchedule::Entry& to) {
    Matrix2D out(to.tokens(), src.cols());
    for (std::size_t r = 0; r < to.h; ++r) {
        const std::size_t sr = r * from.h / to.h;
        for (std::size_t c = 0; c < to.w; ++c) {
            const std::size_t sc = c * from.w / to.w;
            const double* in = src.row_ptr(sr * from.w + sc);
            double* o = out.row_ptr(r * to.w + c);
            for (std::size_t x = 0; x < src.cols(); ++x) o[x] = in[x];
        }
    }
    return out;
}

}  // namespace

std::size_t GenerationTrace::total_processed() const {
    std::size_t total = 0;
    for (std::size_t n : tokens_processed) total += n;
    return total;
}

GenerationTrace generate(const ToyModelConfig& cfg, const PruningPlan* plan) {
    cfg.validate();
    const std::size_t s_max = cfg.schedule.size();
    const std::size_t d = cfg.d_model;
    const std::size_t d_head = d / cfg.heads;
    if (plan && plan->decisions.size() != s_max * cfg.layers) {
        throw std::invalid_argument("generate: plan does not cover the schedule and layer count");
    }

    const ToyWeights weights = make_weights(cfg);

    GenerationTrace trace;
    trace.schedule = cfg.schedule;
    trace.layer_count = cfg.layers;
    trace.entropy_map = EntropyMap(cfg.schedule, cfg.layers, cfg.heads);
    trace.tokens_processed.assign(s_max * cfg.layers, 0);
    trace.wall_time_per_scale.assign(s_max, 0.0);
    trace.token_maps.reserve(s_max);

    Matrix2D x = weights.initial_tokens;
    for (std::size_t s = 1; s <= s_max; ++s) {
        const auto t0 = std::chrono::steady_clock::now();
        if (s > 1) {
            x = upsample_nn(trace.token_maps[s - 2], cfg.schedule.at_scale(s - 1),
                            cfg.schedule.at_scale(s));
            // Each scale re-plants its own sharpness pattern: strip the
            // inherited gate-direction component (its sign pattern belongs to
            // the parent grid) before adding this scale's positional map.
            const Matrix2D& g = weights.gate_dir;
            double g_norm2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) g_norm2 += g.at(0, c) * g.at(0, c);
            for (std::size_t i = 0; i < x.rows(); ++i) {
                double* row = x.row_ptr(i);
                double dot = 0.0;
                for (std::size_t c = 0; c < d; ++c) dot += row[c] * g.at(0, c);
                const double coef = dot / g_norm2;
                for (std::size_t c = 0; c < d; ++c) row[c] -= coef * g.at(0, c);
            }
            const Matrix2D& pos = weights.positional[s - 2];
            for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += pos.data()[i];
        }
        const std::size_t n_s = cfg.schedule.tokens_at(s);

        for (std::size_t l = 0; l < cfg.layers; ++l) {
            std::vector<std::size_t> kept;
            kept.reserve(n_s);
            if (plan) {
                const TokenDecision& dec = plan->decision(s, l, cfg.layers);
                if (dec.mask.size() != n_s) {
                    throw std::invalid_argument("generate: plan mask length mismatch");
                }
                for (std::size_t i = 0; i < n_s; ++i) {
                    if (dec.mask[i]) kept.push_back(i);
                }
            } else {
                for (std::size_t i = 0; i < n_s; ++i) kept.push_back(i);
            }
            trace.tokens_processed[(s - 1) * cfg.layers + l] = kept.size();

            std::vector<std::vector<double>> head_entropy(
                cfg.heads, std::vector<double>(n_s, 0.0));

            if (!kept.empty()) {
                const LayerWeights& lw = weights.layers[l];

                // Context: completed scale maps followed by the surviving
                // current-scale tokens.
                std::size_t prior_rows = 0;
                for (std::size_t ps = 1; ps < s; ++ps) prior_rows += cfg.schedule.tokens_at(ps);
                Matrix2D context(prior_rows + kept.size(), d);
                {
                    std::size_t r = 0;
                    for (std::size_t ps = 1; ps < s; ++ps) {
                        const Matrix2D& prev = trace.token_maps[ps - 1];
                        for (std::size_t i = 0; i < prev.rows(); ++i, ++r) {
                            for (std::size_t c = 0; c < d; ++c) context.at(r, c) = prev.at(i, c);
                        }
                    }
                    for (std::size_t i : kept) {
                        for (std::size_t c = 0; c < d; ++c) context.at(r, c) = x.at(i, c);
                        ++r;
                    }
                }

                const Matrix2D xq_norm = rms_norm(gather_rows(x, kept));
                Matrix2D q_all = matmul(xq_norm, lw.wq);
                for (std::size_t i = 0; i < q_all.rows(); ++i) {
                    double z = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        z += xq_norm.at(i, c) * weights.gate_dir.at(0, c);
                    }
                    const double gain = std::exp(lw.gate_exponent * z / std::sqrt(double(d)));
                    for (std::size_t c = 0; c < d; ++c) q_all.at(i, c) *= gain;
                }
                const Matrix2D ctx_norm = rms_norm(context);
                const Matrix2D k_all = matmul(ctx_norm, lw.wk);
                const Matrix2D v_all = matmul(ctx_norm, lw.wv);

                Matrix2D attn_concat(kept.size(), d);
                for (std::size_t h = 0; h < cfg.heads; ++h) {
                    AttentionInput in;
                    in.Q = slice_cols(q_all, h * d_head, d_head);
                    in.K = slice_cols(k_all, h * d_head, d_head);
                    in.V = slice_cols(v_all, h * d_head, d_head);
                    AttentionResult res = flash_attention_entropy(in, cfg.blocks, cfg.precision);
                    for (std::size_t i = 0; i < kept.size(); ++i) {
                        head_entropy[h][kept[i]] = res.entropy[i];
                        for (std::size_t c = 0; c < d_head; ++c) {
                            attn_concat.at(i, h * d_head + c) = res.O.at(i, c);
                        }
                    }
                    if (cfg.record_qk) {
                        trace.qk[{s, l, h}] = {in.Q, in.K};
                    }
                }
                const Matrix2D attn_out = matmul(attn_concat, lw.wo);
                for (std::size_t i = 0; i < kept.size(); ++i) {
                    for (std::size_t c = 0; c < d; ++c) x.at(kept[i], c) += attn_out.at(i, c);
                }

                // Feedforward on the surviving rows only.
                const Matrix2D ff_in = rms_norm(gather_rows(x, kept));
                Matrix2D hidden = matmul(ff_in, lw.w1);
                for (double& v : hidden.data()) v = std::max(v, 0.0);
                const Matrix2D ff_out = matmul(hidden, lw.w2);
                for (std::size_t i = 0; i < kept.size(); ++i) {
                    for (std::size_t c = 0; c < d; ++c) x.at(kept[i], c) += ff_out.at(i, c);
                }
            }

            for (std::size_t h = 0; h < cfg.heads; ++h) {
                trace.entropy_map.set({s, l, h}, std::move(head_entropy[h]));
            }
        }

        trace.token_maps.push_back(x);
        trace.wall_time_per_scale[s - 1] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return trace;
}

double ssim(const Matrix2D& x, const Matrix2D& y, double c1, double c2) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw std::invalid_argument("ssim: shape mismatch");
    }
    if (x.empty()) {
        throw std::invalid_argument("ssim: empty input");
    }
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x.data()[i];
        my += y.data()[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x.data()[i] - mx;
        const double dy = y.data()[i] - my;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
    }
    vx /= static_cast<double>(n);
    vy /= static_cast<double>(n);
    cov /= static_cast<double>(n);
    return ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
           ((mx * mx + my * my + c1) * (vx + vy + c2));
}

CompareReport compare_runs(const GenerationTrace& baseline, const GenerationTrace& pruned) {
    if (!(baseline.schedule == pruned.schedule) ||
        baseline.layer_count != pruned.layer_count) {
        throw std::invalid_argument("compare_runs: traces use different schedules");
    }
    CompareReport rep;
    for (std::size_t s = 0; s < baseline.token_maps.size(); ++s) {
        rep.ssim_per_scale.push_back(ssim(baseline.token_maps[s], pruned.token_maps[s]));
    }
    rep.processed_baseline = baseline.total_processed();
    rep.processed_pruned = pruned.total_processed();
    rep.token_reduction = 1.0 - static_cast<double>(rep.processed_pruned) /
                                    static_cast<double>(rep.processed_baseline);
    double tb = 0.0, tp = 0.0;
    for (double t : baseline.wall_time_per_scale) tb += t;
    for (double t : pruned.wall_time_per_scale) tp += t;
    rep.wall_time_ratio = tb > 0.0 ? tp / tb : 0.0;
    return rep;
}

std::string CompareReport::to_json() const {
    json doc;
    doc["ssim_per_scale"] = ssim_per_scale;
    doc["token_reduction"] = token_reduction;
    doc["wall_time_ratio"] = wall_time_ratio;
    doc["processed_baseline"] = processed_baseline;
    doc["processed_pruned"] = processed_pruned;
    return doc.dump(2) + "\n";
}

std::string CompareReport::to_csv() const {
    std::ostringstream out;
    out << "scale,ssim\n";
    out.precision(17);
    for (std::size_t s = 0; s < ssim_per_scale.size(); ++s) {
        out << (s + 1) << "," << ssim_per_scale[s] << "\n";
    }
    out << "token_reduction," << token_reduction << "\n";
    out << "wall_time_ratio," << wall_time_ratio << "\n";
    return out.str();
}

void GenerationTrace::save(const std::string& dir) const {
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = 1;
    json sched = json::array();
    for (const auto& e : schedule.entries) sched.push_back({e.h, e.w});
    manifest["schedule"] = sched;
    manifest["layers"] = layer_count;
    manifest["tokens_processed"] = tokens_processed;
    json maps = json::array();
    for (std::size_t s = 1; s <= token_maps.size(); ++s) {
        const std::string name = "token_map_s" + std::to_string(s) + ".tprv";
        matrix_to_file(token_maps[s - 1], (fs::path(dir) / name).string());
        maps.push_back(name);
    }
    manifest["token_maps"] = maps;
    entropy_map.save((fs::path(dir) / "entropy").string());
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) {
        throw std::runtime_error("GenerationTrace: failed to write manifest in " + dir);
    }
    // Timing lives apart from the deterministic payload.
    json timings;
    timings["wall_time_per_scale"] = wall_time_per_scale;
    std::ofstream tout(fs::path(dir) / "timings.json");
    tout << timings.dump(2) << "\n";
}

GenerationTrace GenerationTrace::load(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) {
        throw std::runtime_error("GenerationTrace: missing manifest.json in " + dir);
    }
    json manifest = json::parse(in);
    GenerationTrace trace;
    std::vector<ScaleSchedule::Entry> entries;
    for (const auto& e : manifest.at("schedule")) {
        entries.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
    }
    trace.schedule = ScaleSchedule(std::move(entries));
    trace.layer_count = manifest.at("layers").get<std::size_t>();
    trace.tokens_processed = manifest.at("tokens_processed").get<std::vector<std::size_t>>();
    for (const auto& name : manifest.at("token_maps")) {
        trace.token_maps.push_back(
            matrix_from_file((fs::path(dir) / name.get<std::string>()).string()));
    }
    trace.entropy_map = EntropyMap::load((fs::path(dir) / "entropy").string());
    std::ifstream tin(fs::path(dir) / "timings.json");
    if (tin) {
        json timings = json::parse(tin);
        trace.wall_time_per_scale =
            timings.at("wall_time_per_scale").get<std::vector<double>>();
    }
    return trace;
}

}  // namespace toprokit
