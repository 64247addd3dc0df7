#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "toprokit/matrix.hpp"

namespace toprokit {

// Scaled dot-product attention input. Q is N x d, K is N_k x d, V is N_k x d_v.
// scale defaults to 1/sqrt(d).
struct AttentionInput {
    Matrix2D Q;
    Matrix2D K;
    Matrix2D V;
    double scale = 0.0;  // 0 means "use 1/sqrt(d)"

    double effective_scale() const;
    void validate() const;  // throws std::invalid_argument on shape mismatch
};

// Query/key tile sizes for the streaming kernels. Neither needs to divide the
// sequence lengths; trailing partial tiles are processed at their actual size.
struct BlockConfig {
    std::size_t B_r = 64;
    std::size_t B_c = 64;
};

// Working precision of the streaming kernels. The dense path always runs in
// f64.
enum class Precision { f32, f64 };

struct AttentionResult {
    Matrix2D O;                    // N x d_v
    std::vector<double> entropy;   // -sum_j p log p, one per query row; empty for flash_attention
    std::vector<double> plogp;     // sum_j p log p (<= 0); empty for flash_attention
    std::vector<double> logsumexp; // m + log(l); kept for testing only
};

// Dense ground-truth path: materializes the full attention matrix in f64 with
// max-subtraction stabilization. Oracle for every streaming kernel test.
AttentionResult naive_attention_entropy(const AttentionInput& input);

// Blocked streaming attention: per query tile, iterates key tiles maintaining
// running rowmax m, expsum l and the unnormalized output, then finalizes
// O = diag(l)^-1 O and L = m + log(l). Never allocates an N x N_k buffer.
AttentionResult flash_attention(const AttentionInput& input, const BlockConfig& cfg,
                                Precision prec = Precision::f32);

// Streaming attention plus exact per-row entropy. Alongside (m, l) the kernel
// carries E = sum of p~ log p~ over the shifted unnormalized probabilities
// p~ = exp(s - m). When the running max moves m_old -> m_new with
// k = exp(m_old - m_new), the sound rescale is
//
//   E_new = k*E_old + (m_old - m_new)*k*l_old + sum_block p~ log p~
//
// i.e. the algebraic identity kx log(kx) = kx log x + (log k) kx applied to
// every accumulated term. Note the (log k)*k*l_old middle term: dropping it
// (as the bare E <- e^dm * E + rowreduce_xlogx(P~) recurrence would) breaks
// the accumulator whenever a later tile raises the max while earlier tiles
// still hold probability mass; tests pin this down against the dense oracle.
// Finalization: plogp = E/l - log(l), entropy = -plogp.
AttentionResult flash_attention_entropy(const AttentionInput& input, const BlockConfig& cfg,
                                        Precision prec = Precision::f32);

// Per-row sum of x*log(x) with the 0*log(0) = 0 convention. Entries must be
// nonnegative.
std::vector<double> row_reduce_xlogx(const Matrix2D& block);

// Evaluates both sides of sum_i k*x_i*log(k*x_i)
//   = k*sum_i x_i*log(x_i) + log(k)*k*sum_i x_i
// for strictly positive x and k; property-test hook for the rescale update.
std::pair<double, double> entropy_rescale_identity_check(const std::vector<double>& x, double k);

// Peak auxiliary elements one worker of the streaming kernels allocates:
// q/k/v tiles, score tile, output accumulator and the per-row statistics.
// Independent of N and N_k, which is the memory contract the tests assert.
std::size_t streaming_workspace_elements(const BlockConfig& cfg, std::size_t d, std::size_t d_v);

}  // namespace toprokit
