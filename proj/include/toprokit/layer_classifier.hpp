#pragma once

#include <cstddef>
#include <vector>

#include "toprokit/entropy_stats.hpp"
#include "toprokit/matrix.hpp"

namespace toprokit {

enum class LayerLabel { Global, Detail };

struct LayerClassification {
    std::size_t layer = 0;
    std::size_t scale = 0;
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    double pc_ratio = 1.0;   // sigma1 / max(sigma2, epsilon), clamped to >= 1
    double score = 1.0;      // exp(-beta * (pc_ratio - 1))
    LayerLabel label = LayerLabel::Detail;
};

struct Top2Result {
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    bool converged = true;
};

// Two largest singular values via power iteration on the Gram matrix of the
// smaller side, with one deflation step for sigma2. For a single-row or
// single-column matrix sigma2 is 0 by definition. On non-convergence the best
// estimates are returned with converged = false.
Top2Result top2_singular_values(const Matrix2D& m, double tol = 1e-13,
                                std::size_t max_iters = 50000);

// Principal component ratio and layer representation score:
//   pc_ratio = sigma1 / max(sigma2, epsilon), clamped to >= 1 (an all-zero
//   grid counts as ratio 1), score = exp(-beta * (pc_ratio - 1)).
// Score 1 is the Detail limit, score -> 0 the Global limit.
std::pair<double, double> layer_score(double sigma1, double sigma2, double beta,
                                      double epsilon = 1e-12);

// Classifies every layer from its entropy grid at one representative scale.
// Detail iff score >= detail_threshold. Output ordered by layer index.
std::vector<LayerClassification> classify_layers(const EntropyMap& map, std::size_t rep_scale,
                                                 double beta, double detail_threshold);

// Middle scale ceil(S_max/2); the default representative scale.
std::size_t default_representative_scale(const ScaleSchedule& schedule);

}  // namespace toprokit
