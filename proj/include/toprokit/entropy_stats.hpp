#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "toprokit/matrix.hpp"

namespace toprokit {

// Addresses one per-token entropy vector. Scales are 1-based (matching the
// schedule), layers and heads 0-based.
struct EntropyKey {
    std::size_t scale = 0;
    std::size_t layer = 0;
    std::size_t head = 0;
    auto operator<=>(const EntropyKey&) const = default;
};

// Per-token attention entropies for every (scale, layer, head) the generation
// produced, plus the schedule they were measured on. Entries are nonnegative
// and each vector has exactly h_s*w_s values.
class EntropyMap {
public:
    EntropyMap() = default;
    EntropyMap(ScaleSchedule schedule, std::size_t layer_count, std::size_t head_count)
        : schedule_(std::move(schedule)), layers_(layer_count), heads_(head_count) {}

    const ScaleSchedule& schedule() const { return schedule_; }
    std::size_t layer_count() const { return layers_; }
    std::size_t head_count() const { return heads_; }

    void set(const EntropyKey& key, std::vector<double> entropies);
    const std::vector<double>& get(const EntropyKey& key) const;
    bool contains(const EntropyKey& key) const;

    const std::map<EntropyKey, std::vector<double>>& values() const { return values_; }

    // Directory serialization: one TPRV tensor per (scale, layer, head) plus a
    // JSON manifest carrying the schedule and the layer/head counts.
    void save(const std::string& dir) const;
    static EntropyMap load(const std::string& dir);

private:
    ScaleSchedule schedule_;
    std::size_t layers_ = 0;
    std::size_t heads_ = 0;
    std::map<EntropyKey, std::vector<double>> values_;
};

struct ScaleStats {
    std::size_t scale = 0;
    double mean_entropy = 0.0;
    double low_entropy_ratio = 0.0;
    std::size_t token_count = 0;
};

// Per-token mean across heads; every head must be present for (s, l).
std::vector<double> head_average(const EntropyMap& map, std::size_t scale, std::size_t layer);

// Fraction of entries strictly below the arithmetic mean. Ties count as
// not-low, so an all-equal vector gives 0.
double low_entropy_ratio(const std::vector<double>& entropies);

// H_i / sum_j H_j. Output sums to 1. A zero-sum input (every token fully
// concentrated) is degenerate; normalize_entropy throws and
// normalize_entropy_or_uniform falls back to uniform weights.
std::vector<double> normalize_entropy(const std::vector<double>& entropies);
std::vector<double> normalize_entropy_or_uniform(const std::vector<double>& entropies);

// Head-averaged entropies of (s, l) reduced to mean / low-entropy ratio.
ScaleStats scale_stats(const EntropyMap& map, std::size_t scale, std::size_t layer);

// Head-averaged token entropies reshaped row-major into the h_s x w_s grid
// used by the layer classifier.
Matrix2D entropy_grid(const EntropyMap& map, std::size_t scale, std::size_t layer);

}  // namespace toprokit
