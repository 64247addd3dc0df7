#pragma once

// Independent reference implementations used only by tests. These deliberately
// share no code with the library paths they adjudicate: a separate dense
// softmax/entropy, a separate log-sum-exp, a Jacobi eigensolver for singular
// values, and the uncorrected streaming-entropy recurrence kept around to show
// the rescale correction matters.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "toprokit/attention.hpp"
#include "toprokit/matrix.hpp"

namespace refimpl {

struct DenseResult {
    toprokit::Matrix2D O;
    std::vector<double> entropy;
    std::vector<double> logsumexp;
};

// Dense softmax attention with explicit probability rows, written as plainly
// as possible.
inline DenseResult dense_attention_entropy(const toprokit::Matrix2D& Q,
                                           const toprokit::Matrix2D& K,
                                           const toprokit::Matrix2D& V, double scale) {
    const std::size_t n = Q.rows(), nk = K.rows(), d = Q.cols(), dv = V.cols();
    DenseResult out;
    out.O = toprokit::Matrix2D(n, dv);
    out.entropy.resize(n);
    out.logsumexp.resize(n);
    std::vector<double> row(nk);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < nk; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += Q.at(i, c) * K.at(j, c);
            row[j] = s * scale;
        }
        const double m = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t j = 0; j < nk; ++j) z += std::exp(row[j] - m);
        out.logsumexp[i] = m + std::log(z);
        double h = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
            const double p = std::exp(row[j] - m) / z;
            if (p > 0.0) h -= p * std::log(p);
            for (std::size_t c = 0; c < dv; ++c) out.O.at(i, c) += p * V.at(j, c);
        }
        out.entropy[i] = h;
    }
    return out;
}

// Streaming entropy with the bare accumulator recurrence
// E <- e^{m_old - m_new} E + rowreduce_xlogx(P~), i.e. without the
// (log k) * k * l correction term. Everything else matches the sound kernel.
inline std::vector<double> uncorrected_streaming_entropy(const toprokit::Matrix2D& Q,
                                                         const toprokit::Matrix2D& K,
                                                         double scale, std::size_t b_c) {
    const std::size_t n = Q.rows(), nk = K.rows(), d = Q.cols();
    std::vector<double> entropy(n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        double l = 0.0, e = 0.0;
        for (std::size_t k0 = 0; k0 < nk; k0 += b_c) {
            const std::size_t kend = std::min(nk, k0 + b_c);
            double tile_max = -std::numeric_limits<double>::infinity();
            std::vector<double> s(kend - k0);
            for (std::size_t j = k0; j < kend; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c) acc += Q.at(i, c) * K.at(j, c);
                s[j - k0] = acc * scale;
                tile_max = std::max(tile_max, s[j - k0]);
            }
            const double m_new = std::max(m, tile_max);
            double tile_sum = 0.0, tile_ent = 0.0;
            for (double& v : s) {
                const double p = std::exp(v - m_new);
                tile_sum += p;
                if (p > 0.0) tile_ent += p * std::log(p);
            }
            if (l == 0.0) {
                l = tile_sum;
                e = tile_ent;
            } else {
                const double k_factor = std::exp(m - m_new);
                e = k_factor * e + tile_ent;  // missing (log k) * k * l term
                l = k_factor * l + tile_sum;
            }
            m = m_new;
        }
        entropy[i] = -(e / l - std::log(l));
    }
    return entropy;
}

// All singular values of m via the cyclic Jacobi eigensolver on the Gram
// matrix of the smaller side, sorted descending.
inline std::vector<double> jacobi_singular_values(const toprokit::Matrix2D& m) {
    const std::size_t r = m.rows(), c = m.cols();
    const bool use_cols = c <= r;
    const std::size_t n = use_cols ? c : r;
    std::vector<double> g(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            if (use_cols) {
                for (std::size_t k = 0; k < r; ++k) acc += m.at(k, i) * m.at(k, j);
            } else {
                for (std::size_t k = 0; k < c; ++k) acc += m.at(i, k) * m.at(j, k);
            }
            g[i * n + j] = acc;
        }
    }
    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j) s += g[i * n + j] * g[i * n + j];
            }
        }
        return std::sqrt(s);
    };
    double frob = 0.0;
    for (double v : g) frob += v * v;
    frob = std::sqrt(frob);
    for (int sweep = 0; sweep < 100 && off_norm() > 1e-15 * std::max(frob, 1e-300); ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = g[p * n + q];
                if (apq == 0.0) continue;
                const double app = g[p * n + p], aqq = g[q * n + q];
                const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
                const double co = std::cos(theta), si = std::sin(theta);
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = g[k * n + p], akq = g[k * n + q];
                    g[k * n + p] = co * akp - si * akq;
                    g[k * n + q] = si * akp + co * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = g[p * n + k], aqk = g[q * n + k];
                    g[p * n + k] = co * apk - si * aqk;
                    g[q * n + k] = si * apk + co * aqk;
                }
            }
        }
    }
    std::vector<double> sv(n);
    for (std::size_t i = 0; i < n; ++i) sv[i] = std::sqrt(std::max(g[i * n + i], 0.0));
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

}  // namespace refimpl
