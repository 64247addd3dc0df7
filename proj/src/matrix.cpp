#include "toprokit/matrix.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>
#include <numbers>

namespace toprokit {

Matrix2D::Matrix2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix2D: data length does not equal rows*cols");
    }
}

bool Matrix2D::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

ScaleSchedule::ScaleSchedule(std::vector<Entry> e) : entries(std::move(e)) {
    if (entries.empty()) {
        throw std::invalid_argument("ScaleSchedule: needs at least one scale");
    }
    for (std::size_t k = 1; k < entries.size(); ++k) {
        if (entries[k].tokens() < entries[k - 1].tokens()) {
            throw std::invalid_argument("ScaleSchedule: token counts must be nondecreasing");
        }
    }
}

const ScaleSchedule::Entry& ScaleSchedule::at_scale(std::size_t s) const {
    if (s < 1 || s > entries.size()) {
        throw std::out_of_range("ScaleSchedule: scale index out of range");
    }
    return entries[s - 1];
}

std::size_t ScaleSchedule::total_tokens() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.tokens();
    return n;
}

std::uint64_t SeededRng::next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double SeededRng::next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double SeededRng::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

Matrix2D random_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double scale) {
    Matrix2D m(rows, cols);
    for (double& v : m.data()) v = rng.next_gaussian() * scale;
    return m;
}

Matrix2D random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols, double scale) {
    SeededRng rng(seed);
    return random_matrix(rng, rows, cols, scale);
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr char kMagic[4] = {'T', 'P', 'R', 'V'};
constexpr std::uint8_t kVersion = 1;

void write_u32_le(std::uint8_t* dst, std::uint32_t v) {
    dst[0] = static_cast<std::uint8_t>(v);
    dst[1] = static_cast<std::uint8_t>(v >> 8);
    dst[2] = static_cast<std::uint8_t>(v >> 16);
    dst[3] = static_cast<std::uint8_t>(v >> 24);
}

std::uint32_t read_u32_le(const std::uint8_t* src) {
    return static_cast<std::uint32_t>(src[0]) | (static_cast<std::uint32_t>(src[1]) << 8) |
           (static_cast<std::uint32_t>(src[2]) << 16) | (static_cast<std::uint32_t>(src[3]) << 24);
}

}  // namespace

Matrix2D matrix_from_file(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) {
        throw tprv_error(TprvErrc::io_failure, "cannot open " + path);
    }

    std::uint8_t header[8];
    if (std::fread(header, 1, sizeof(header), f.get()) != sizeof(header)) {
        throw tprv_error(TprvErrc::truncated_payload, path + ": truncated header");
    }
    if (std::memcmp(header, kMagic, 4) != 0) {
        throw tprv_error(TprvErrc::bad_magic, path + ": bad magic");
    }
    if (header[4] != kVersion) {
        throw tprv_error(TprvErrc::unsupported_version,
                         path + ": unsupported version " + std::to_string(header[4]));
    }
    if (header[5] != 0 && header[5] != 1) {
        throw tprv_error(TprvErrc::unsupported_dtype,
                         path + ": unsupported dtype " + std::to_string(header[5]));
    }
    const auto dtype = static_cast<TprvDtype>(header[5]);
    const std::uint8_t ndim = header[6];
    if (ndim != 2) {
        throw tprv_error(TprvErrc::dimension_overflow,
                         path + ": expected 2 dimensions, got " + std::to_string(ndim));
    }

    std::uint8_t dims_raw[8];
    if (std::fread(dims_raw, 1, sizeof(dims_raw), f.get()) != sizeof(dims_raw)) {
        throw tprv_error(TprvErrc::truncated_payload, path + ": truncated dimension list");
    }
    const std::uint64_t rows = read_u32_le(dims_raw);
    const std::uint64_t cols = read_u32_le(dims_raw + 4);
    const std::size_t width = dtype == TprvDtype::f32 ? 4 : 8;
    if (rows != 0 && cols > std::numeric_limits<std::size_t>::max() / rows) {
        throw tprv_error(TprvErrc::dimension_overflow, path + ": rows*cols overflows");
    }
    const std::size_t count = static_cast<std::size_t>(rows * cols);
    if (count > std::numeric_limits<std::size_t>::max() / width) {
        throw tprv_error(TprvErrc::dimension_overflow, path + ": payload size overflows");
    }

    std::vector<double> data(count);
    if (dtype == TprvDtype::f32) {
        std::vector<float> buf(count);
        if (count && std::fread(buf.data(), 4, count, f.get()) != count) {
            throw tprv_error(TprvErrc::truncated_payload, path + ": truncated payload");
        }
        for (std::size_t i = 0; i < count; ++i) data[i] = buf[i];
    } else {
        if (count && std::fread(data.data(), 8, count, f.get()) != count) {
            throw tprv_error(TprvErrc::truncated_payload, path + ": truncated payload");
        }
    }

    Matrix2D m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), std::move(data));
    if (!m.all_finite()) {
        throw tprv_error(TprvErrc::truncated_payload, path + ": payload contains non-finite values");
    }
    return m;
}

void matrix_to_file(const Matrix2D& m, const std::string& path, TprvDtype dtype) {
    if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
        m.cols() > std::numeric_limits<std::uint32_t>::max()) {
        throw tprv_error(TprvErrc::dimension_overflow, path + ": dimensions exceed u32");
    }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) {
        throw tprv_error(TprvErrc::io_failure, "cannot create " + path);
    }

    std::uint8_t header[16];
    std::memcpy(header, kMagic, 4);
    header[4] = kVersion;
    header[5] = static_cast<std::uint8_t>(dtype);
    header[6] = 2;
    header[7] = 0;
    write_u32_le(header + 8, static_cast<std::uint32_t>(m.rows()));
    write_u32_le(header + 12, static_cast<std::uint32_t>(m.cols()));
    if (std::fwrite(header, 1, sizeof(header), f.get()) != sizeof(header)) {
        throw tprv_error(TprvErrc::io_failure, path + ": header write failed");
    }

    const std::size_t count = m.size();
    if (dtype == TprvDtype::f32) {
        std::vector<float> buf(count);
        for (std::size_t i = 0; i < count; ++i) buf[i] = static_cast<float>(m.data()[i]);
        if (count && std::fwrite(buf.data(), 4, count, f.get()) != count) {
            throw tprv_error(TprvErrc::io_failure, path + ": payload write failed");
        }
    } else {
        if (count && std::fwrite(m.data().data(), 8, count, f.get()) != count) {
            throw tprv_error(TprvErrc::io_failure, path + ": payload write failed");
        }
    }
    if (std::fflush(f.get()) != 0) {
        throw tprv_error(TprvErrc::io_failure, path + ": flush failed");
    }
}

}  // namespace toprokit
