#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace toprokit {

// Row-major dense matrix of doubles. The single data carrier for Q/K/V,
// entropy grids and token maps. Elements read from files or produced by the
// generators are always finite.
class Matrix2D {
public:
    Matrix2D() = default;
    Matrix2D(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix2D(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;

    bool operator==(const Matrix2D& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Coarse-to-fine resolution schedule {(h_1,w_1), ..., (h_K,w_K)}.
// Token counts h_k*w_k must be nondecreasing in k. Scale indices are 1-based
// everywhere in this codebase.
struct ScaleSchedule {
    struct Entry {
        std::size_t h = 0;
        std::size_t w = 0;
        std::size_t tokens() const { return h * w; }
        bool operator==(const Entry&) const = default;
    };

    std::vector<Entry> entries;

    ScaleSchedule() = default;
    explicit ScaleSchedule(std::vector<Entry> e);

    std::size_t size() const { return entries.size(); }
    // 1-based access.
    const Entry& at_scale(std::size_t s) const;
    std::size_t tokens_at(std::size_t s) const { return at_scale(s).tokens(); }
    std::size_t total_tokens() const;

    bool operator==(const ScaleSchedule&) const = default;
};

// Deterministic 64-bit generator: SplitMix64 (Steele, Lea & Flood, 2014).
// State advances by 0x9e3779b97f4a7c15; output mixed with the
// 0xbf58476d1ce4e5b9 / 0x94d049bb133111eb constants. Identical seed gives an
// identical stream on every platform. Gaussians come from Box-Muller on this
// uniform stream, with the second variate of each pair cached.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t seed_state() const { return state_; }

    std::uint64_t next_u64();

    // Uniform in (0, 1]: ((x >> 11) + 1) * 2^-53, never exactly 0 so it is
    // safe under log().
    double next_unit();

    // Standard normal via Box-Muller.
    double next_gaussian();

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Gaussian matrix, entries i.i.d. N(0,1) * scale; a pure function of
// (seed, rows, cols, scale).
Matrix2D random_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double scale);
Matrix2D random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols, double scale);

// ---------------------------------------------------------------------------
// TPRV tensor container (little-endian):
//   magic "TPRV" | version u8 = 1 | dtype u8 (0 = f32, 1 = f64) | ndim u8 |
//   reserved u8 = 0 | ndim x u32 dims | payload row-major.
// Readers reject unknown versions and dtypes.
// ---------------------------------------------------------------------------

enum class TprvDtype : std::uint8_t { f32 = 0, f64 = 1 };

enum class TprvErrc {
    bad_magic,
    unsupported_version,
    unsupported_dtype,
    truncated_payload,
    dimension_overflow,
    io_failure,
};

class tprv_error : public std::runtime_error {
public:
    tprv_error(TprvErrc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    TprvErrc code() const { return code_; }

private:
    TprvErrc code_;
};

Matrix2D matrix_from_file(const std::string& path);
void matrix_to_file(const Matrix2D& m, const std::string& path,
                    TprvDtype dtype = TprvDtype::f64);

constexpr std::size_t tprv_header_bytes(std::size_t ndim = 2) { return 8 + 4 * ndim; }

}  // namespace toprokit
