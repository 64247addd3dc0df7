#include "toprokit/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "toprokit/threading.hpp"

namespace toprokit {

double AttentionInput::effective_scale() const {
    if (scale != 0.0) return scale;
    return 1.0 / std::sqrt(static_cast<double>(Q.cols()));
}

void AttentionInput::validate() const {
    if (Q.rows() < 1 || K.rows() < 1 || Q.cols() < 1) {
        throw std::invalid_argument("attention: N, N_k and d must all be >= 1");
    }
    if (Q.cols() != K.cols()) {
        throw std::invalid_argument("attention: Q.cols must equal K.cols");
    }
    if (V.rows() != K.rows()) {
        throw std::invalid_argument("attention: V.rows must equal K.rows");
    }
    if (V.cols() < 1) {
        throw std::invalid_argument("attention: V must have at least one column");
    }
}

AttentionResult naive_attention_entropy(const AttentionInput& input) {
    input.validate();
    const std::size_t n = input.Q.rows();
    const std::size_t nk = input.K.rows();
    const std::size_t d = input.Q.cols();
    const std::size_t dv = input.V.cols();
    const double scale = input.effective_scale();

    // Full N x N_k score matrix, reused in place for the probabilities.
    Matrix2D scores(n, nk);
    for (std::size_t i = 0; i < n; ++i) {
        const double* q = input.Q.row_ptr(i);
        double* s = scores.row_ptr(i);
        for (std::size_t j = 0; j < nk; ++j) {
            const double* k = input.K.row_ptr(j);
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += q[c] * k[c];
            s[j] = acc * scale;
        }
    }

    AttentionResult res;
    res.O = Matrix2D(n, dv);
    res.entropy.resize(n);
    res.plogp.resize(n);
    res.logsumexp.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        double* s = scores.row_ptr(i);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < nk; ++j) m = std::max(m, s[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
            s[j] = std::exp(s[j] - m);
            z += s[j];
        }
        double plogp = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
            const double a = s[j] / z;
            s[j] = a;
            if (a > 0.0) plogp += a * std::log(a);
        }
        res.plogp[i] = plogp;
        res.entropy[i] = -plogp;
        res.logsumexp[i] = m + std::log(z);

        double* o = res.O.row_ptr(i);
        for (std::size_t j = 0; j < nk; ++j) {
            const double a = s[j];
            const double* v = input.V.row_ptr(j);
            for (std::size_t c = 0; c < dv; ++c) o[c] += a * v[c];
        }
    }
    return res;
}

std::size_t streaming_workspace_elements(const BlockConfig& cfg, std::size_t d, std::size_t d_v) {
    // q/k/v tiles + score tile + output accumulator + 4 per-row statistics;
    // mirrors KernelWorkspace exactly.
    return cfg.B_r * d + cfg.B_c * d + cfg.B_c * d_v + cfg.B_r * cfg.B_c + cfg.B_r * d_v +
           4 * cfg.B_r;
}

namespace {

template <typename T>
struct KernelWorkspace {
    std::vector<T> q_tile;   // B_r x d
    std::vector<T> k_tile;   // B_c x d
    std::vector<T> v_tile;   // B_c x d_v
    std::vector<T> s_tile;   // B_r x B_c
    std::vector<T> o_acc;    // B_r x d_v
    std::vector<T> row_max;  // B_r
    std::vector<T> row_sum;  // B_r
    std::vector<T> row_ent;  // B_r
    std::vector<T> tile_max; // B_r

    KernelWorkspace(const BlockConfig& cfg, std::size_t d, std::size_t d_v)
        : q_tile(cfg.B_r * d),
          k_tile(cfg.B_c * d),
          v_tile(cfg.B_c * d_v),
          s_tile(cfg.B_r * cfg.B_c),
          o_acc(cfg.B_r * d_v),
          row_max(cfg.B_r),
          row_sum(cfg.B_r),
          row_ent(cfg.B_r),
          tile_max(cfg.B_r) {}
};

template <typename T>
void load_tile(const Matrix2D& src, std::size_t row0, std::size_t rows, std::vector<T>& dst) {
    const std::size_t cols = src.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = src.row_ptr(row0 + r);
        T* out = dst.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] = static_cast<T>(in[c]);
    }
}

// One query tile of the streaming loop; shared by flash_attention and
// flash_attention_entropy (with_entropy toggles the E accumulator).
template <typename T, bool with_entropy>
void run_query_tile(const AttentionInput& input, const BlockConfig& cfg, T scale,
                    std::size_t q0, std::size_t q_rows, KernelWorkspace<T>& ws,
                    AttentionResult& res) {
    const std::size_t nk = input.K.rows();
    const std::size_t d = input.Q.cols();
    const std::size_t dv = input.V.cols();
    const std::size_t t_c = (nk + cfg.B_c - 1) / cfg.B_c;

    load_tile(input.Q, q0, q_rows, ws.q_tile);
    std::fill(ws.o_acc.begin(), ws.o_acc.end(), T(0));
    std::fill(ws.row_max.begin(), ws.row_max.end(), -std::numeric_limits<T>::infinity());
    std::fill(ws.row_sum.begin(), ws.row_sum.end(), T(0));
    std::fill(ws.row_ent.begin(), ws.row_ent.end(), T(0));

    for (std::size_t j = 0; j < t_c; ++j) {
        const std::size_t k0 = j * cfg.B_c;
        const std::size_t k_rows = std::min(cfg.B_c, nk - k0);
        load_tile(input.K, k0, k_rows, ws.k_tile);
        load_tile(input.V, k0, k_rows, ws.v_tile);

        // S = scale * Q_i K_j^T over the valid k_rows columns only, so no
        // padding values ever enter a reduction. Four independent partial
        // sums break the dependency chain of the dot product; the summation
        // order is fixed, so results stay bit-reproducible.
        for (std::size_t r = 0; r < q_rows; ++r) {
            const T* q = ws.q_tile.data() + r * d;
            T* s = ws.s_tile.data() + r * cfg.B_c;
            T tile_max = -std::numeric_limits<T>::infinity();
            for (std::size_t c = 0; c < k_rows; ++c) {
                const T* k = ws.k_tile.data() + c * d;
                T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
                std::size_t x = 0;
                for (; x + 4 <= d; x += 4) {
                    acc0 += q[x] * k[x];
                    acc1 += q[x + 1] * k[x + 1];
                    acc2 += q[x + 2] * k[x + 2];
                    acc3 += q[x + 3] * k[x + 3];
                }
                T acc = (acc0 + acc1) + (acc2 + acc3);
                for (; x < d; ++x) acc += q[x] * k[x];
                s[c] = acc * scale;
                tile_max = std::max(tile_max, s[c]);
            }
            ws.tile_max[r] = tile_max;
        }

        for (std::size_t r = 0; r < q_rows; ++r) {
            const T m_old = ws.row_max[r];
            const T m_new = std::max(m_old, ws.tile_max[r]);
            T* s = ws.s_tile.data() + r * cfg.B_c;

            // log(p~) equals the shifted score, so the x*log(x) tile
            // reduction is a multiply, not a log. Underflowed p give an exact
            // 0 term, matching the 0*log(0) = 0 convention. Paired
            // accumulators keep the reduction off the exp() critical path.
            T sum0 = 0, sum1 = 0, ent0 = 0, ent1 = 0;
            std::size_t e = 0;
            for (; e + 2 <= k_rows; e += 2) {
                const T sh0 = s[e] - m_new;
                const T sh1 = s[e + 1] - m_new;
                const T p0 = std::exp(sh0);
                const T p1 = std::exp(sh1);
                s[e] = p0;
                s[e + 1] = p1;
                sum0 += p0;
                sum1 += p1;
                if constexpr (with_entropy) {
                    ent0 += p0 * sh0;
                    ent1 += p1 * sh1;
                }
            }
            if (e < k_rows) {
                const T sh = s[e] - m_new;
                const T p = std::exp(sh);
                s[e] = p;
                sum0 += p;
                if constexpr (with_entropy) ent0 += p * sh;
            }
            const T tile_sum = sum0 + sum1;
            [[maybe_unused]] const T tile_ent = ent0 + ent1;

            T* o = ws.o_acc.data() + r * dv;
            if (ws.row_sum[r] == T(0)) {
                // First tile with mass for this row; nothing to rescale.
                ws.row_sum[r] = tile_sum;
                if constexpr (with_entropy) ws.row_ent[r] = tile_ent;
            } else {
                const T delta = m_old - m_new;             // log k, <= 0
                const T k_factor = std::exp(delta);
                if constexpr (with_entropy) {
                    // E_new = k*E_old + (log k)*k*l_old + tile_ent, folded as
                    // k*(E_old + delta*l_old) + tile_ent.
                    ws.row_ent[r] = k_factor * (ws.row_ent[r] + delta * ws.row_sum[r]) + tile_ent;
                }
                ws.row_sum[r] = k_factor * ws.row_sum[r] + tile_sum;
                if (k_factor != T(1)) {
                    for (std::size_t x = 0; x < dv; ++x) o[x] *= k_factor;
                }
            }
            ws.row_max[r] = m_new;

            for (std::size_t c = 0; c < k_rows; ++c) {
                const T p = s[c];
                const T* v = ws.v_tile.data() + c * dv;
                for (std::size_t x = 0; x < dv; ++x) o[x] += p * v[x];
            }
        }
    }

    for (std::size_t r = 0; r < q_rows; ++r) {
        const T l = ws.row_sum[r];
        const T inv_l = T(1) / l;
        const T* o = ws.o_acc.data() + r * dv;
        double* out = res.O.row_ptr(q0 + r);
        for (std::size_t x = 0; x < dv; ++x) out[x] = static_cast<double>(o[x] * inv_l);
        res.logsumexp[q0 + r] = static_cast<double>(ws.row_max[r] + std::log(l));
        if constexpr (with_entropy) {
            const T plogp = ws.row_ent[r] * inv_l - std::log(l);
            res.plogp[q0 + r] = static_cast<double>(plogp);
            res.entropy[q0 + r] = -static_cast<double>(plogp);
        }
    }
}

template <typename T, bool with_entropy>
AttentionResult run_streaming(const AttentionInput& input, const BlockConfig& cfg) {
    input.validate();
    if (cfg.B_r < 1 || cfg.B_c < 1) {
        throw std::invalid_argument("attention: block sizes must be >= 1");
    }
    const std::size_t n = input.Q.rows();
    const std::size_t d = input.Q.cols();
    const std::size_t dv = input.V.cols();
    const T scale = static_cast<T>(input.effective_scale());

    AttentionResult res;
    res.O = Matrix2D(n, dv);
    res.logsumexp.resize(n);
    if constexpr (with_entropy) {
        res.entropy.resize(n);
        res.plogp.resize(n);
    }

    const std::size_t t_r = (n + cfg.B_r - 1) / cfg.B_r;
    // Query tiles are independent; the key-tile loop inside each is strictly
    // sequential, so results are bit-identical for any worker count. Each tile
    // works out of its own fixed-size workspace — nothing N x N_k is ever
    // allocated.
    parallel_for(t_r, [&](std::size_t i) {
        KernelWorkspace<T> ws(cfg, d, dv);
        const std::size_t q0 = i * cfg.B_r;
        const std::size_t q_rows = std::min(cfg.B_r, n - q0);
        run_query_tile<T, with_entropy>(input, cfg, scale, q0, q_rows, ws, res);
    });
    return res;
}

}  // namespace

AttentionResult flash_attention(const AttentionInput& input, const BlockConfig& cfg,
                                Precision prec) {
    return prec == Precision::f32 ? run_streaming<float, false>(input, cfg)
                                  : run_streaming<double, false>(input, cfg);
}

AttentionResult flash_attention_entropy(const AttentionInput& input, const BlockConfig& cfg,
                                        Precision prec) {
    return prec == Precision::f32 ? run_streaming<float, true>(input, cfg)
                                  : run_streaming<double, true>(input, cfg);
}

std::vector<double> row_reduce_xlogx(const Matrix2D& block) {
    std::vector<double> out(block.rows(), 0.0);
    for (std::size_t r = 0; r < block.rows(); ++r) {
        const double* row = block.row_ptr(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < block.cols(); ++c) {
            const double x = row[c];
            if (x < 0.0) {
                throw std::invalid_argument("row_reduce_xlogx: negative entry");
            }
            if (x > 0.0) acc += x * std::log(x);
        }
        out[r] = acc;
    }
    return out;
}

std::pair<double, double> entropy_rescale_identity_check(const std::vector<double>& x, double k) {
    if (k <= 0.0) {
        throw std::invalid_argument("entropy_rescale_identity_check: k must be positive");
    }
    double lhs = 0.0;
    double sum_xlogx = 0.0;
    double sum_x = 0.0;
    for (double v : x) {
        if (v <= 0.0) {
            throw std::invalid_argument("entropy_rescale_identity_check: entries must be positive");
        }
        lhs += k * v * std::log(k * v);
        sum_xlogx += v * std::log(v);
        sum_x += v;
    }
    const double rhs = k * sum_xlogx + std::log(k) * k * sum_x;
    return {lhs, rhs};
}

}  // namespace toprokit
