#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "toprokit/entropy_stats.hpp"

using namespace toprokit;
namespace fs = std::filesystem;

namespace {

EntropyMap small_map() {
    EntropyMap map(ScaleSchedule({{1, 1}, {2, 2}}), 2, 2);
    map.set({1, 0, 0}, {1.0});
    map.set({1, 0, 1}, {3.0});
    map.set({1, 1, 0}, {0.5});
    map.set({1, 1, 1}, {0.5});
    map.set({2, 0, 0}, {1.0, 2.0, 3.0, 4.0});
    map.set({2, 0, 1}, {1.0, 2.0, 3.0, 4.0});
    map.set({2, 1, 0}, {0.0, 1.0, 2.0, 5.0});
    map.set({2, 1, 1}, {2.0, 1.0, 0.0, 5.0});
    return map;
}

}  // namespace

TEST_CASE("head_average is the per-token mean over heads") {
    const EntropyMap map = small_map();
    CHECK(head_average(map, 1, 0) == std::vector<double>{2.0});
    CHECK(head_average(map, 2, 1) == std::vector<double>{1.0, 1.0, 1.0, 5.0});

    // Single-head map: identity.
    EntropyMap one(ScaleSchedule({{1, 2}}), 1, 1);
    one.set({1, 0, 0}, {4.0, 7.0});
    CHECK(head_average(one, 1, 0) == std::vector<double>{4.0, 7.0});

    // Random 8-head map agrees with an independent mean computation.
    EntropyMap wide(ScaleSchedule({{2, 3}}), 1, 8);
    SeededRng rng(12);
    std::vector<std::vector<double>> rows(8, std::vector<double>(6));
    for (std::size_t h = 0; h < 8; ++h) {
        for (double& v : rows[h]) v = rng.next_unit() * 5.0;
        wide.set({1, 0, h}, rows[h]);
    }
    const std::vector<double> got = head_average(wide, 1, 0);
    for (std::size_t i = 0; i < 6; ++i) {
        double mean = 0.0;
        for (std::size_t h = 0; h < 8; ++h) mean += rows[h][i];
        mean /= 8.0;
        CHECK(std::abs(got[i] - mean) < 1e-12);
    }

    EntropyMap missing(ScaleSchedule({{1, 1}}), 1, 2);
    missing.set({1, 0, 0}, {1.0});
    CHECK_THROWS_AS(head_average(missing, 1, 0), std::out_of_range);
}

TEST_CASE("low_entropy_ratio counts strictly-below-mean entries") {
    CHECK(low_entropy_ratio({1.0, 2.0, 3.0, 4.0}) == 0.5);
    CHECK(low_entropy_ratio({5.0, 5.0, 5.0}) == 0.0);
    CHECK(low_entropy_ratio({0.0, 10.0}) == 0.5);
    CHECK_THROWS_AS(low_entropy_ratio({}), std::invalid_argument);

    // Invariance under positive affine rescaling.
    SeededRng rng(3);
    std::vector<double> h(50);
    for (double& v : h) v = rng.next_unit() * 9.0;
    const double base = low_entropy_ratio(h);
    std::vector<double> scaled = h;
    for (double& v : scaled) v = 3.25 * v + 17.0;
    CHECK(low_entropy_ratio(scaled) == base);
}

TEST_CASE("normalize_entropy produces a probability vector") {
    const std::vector<double> got = normalize_entropy({2.0, 2.0, 4.0});
    CHECK(got[0] == doctest::Approx(0.25));
    CHECK(got[1] == doctest::Approx(0.25));
    CHECK(got[2] == doctest::Approx(0.5));

    CHECK(normalize_entropy({0.7}) == std::vector<double>{1.0});

    const std::vector<double> uniform = normalize_entropy(std::vector<double>(8, 3.0));
    double sum = 0.0;
    for (double v : uniform) {
        CHECK(v == doctest::Approx(1.0 / 8.0));
        sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);

    CHECK_THROWS_AS(normalize_entropy({0.0, 0.0}), std::domain_error);
    CHECK(normalize_entropy_or_uniform({0.0, 0.0}) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("scale_stats composes head averaging with the ratio") {
    const EntropyMap map = small_map();
    const ScaleStats st = scale_stats(map, 2, 0);
    CHECK(st.low_entropy_ratio == 0.5);
    CHECK(st.mean_entropy == doctest::Approx(2.5));
    CHECK(st.token_count == 4);

    EntropyMap zeros(ScaleSchedule({{2, 2}}), 1, 1);
    zeros.set({1, 0, 0}, {0.0, 0.0, 0.0, 0.0});
    const ScaleStats zst = scale_stats(zeros, 1, 0);
    CHECK(zst.mean_entropy == 0.0);
    CHECK(zst.low_entropy_ratio == 0.0);

    // Duplicating a head leaves the stats unchanged.
    EntropyMap dup(ScaleSchedule({{2, 2}}), 1, 2);
    dup.set({1, 0, 0}, {1.0, 2.0, 3.0, 4.0});
    dup.set({1, 0, 1}, {1.0, 2.0, 3.0, 4.0});
    const ScaleStats dst = scale_stats(dup, 1, 0);
    CHECK(dst.low_entropy_ratio == st.low_entropy_ratio);
    CHECK(dst.mean_entropy == st.mean_entropy);
}

TEST_CASE("entropy_grid reshapes row-major and round-trips") {
    const EntropyMap map = small_map();
    const Matrix2D grid = entropy_grid(map, 2, 0);
    REQUIRE(grid.rows() == 2);
    REQUIRE(grid.cols() == 2);
    CHECK(grid.at(0, 0) == 1.0);
    CHECK(grid.at(0, 1) == 2.0);
    CHECK(grid.at(1, 0) == 3.0);
    CHECK(grid.at(1, 1) == 4.0);

    EntropyMap row(ScaleSchedule({{1, 5}}), 1, 1);
    row.set({1, 0, 0}, {1, 2, 3, 4, 5});
    const Matrix2D rg = entropy_grid(row, 1, 0);
    CHECK(rg.rows() == 1);
    CHECK(rg.cols() == 5);

    // flatten(reshape(x)) == x
    CHECK(rg.data() == std::vector<double>{1, 2, 3, 4, 5});
    CHECK(grid.data() == head_average(map, 2, 0));
}

TEST_CASE("entropy map validates lengths and signs") {
    EntropyMap map(ScaleSchedule({{2, 2}}), 1, 1);
    CHECK_THROWS_AS(map.set({1, 0, 0}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(map.set({1, 0, 0}, {1.0, 1.0, 1.0, -1.0}), std::invalid_argument);
    CHECK_THROWS_AS(map.set({2, 0, 0}, {1.0}), std::out_of_range);
    CHECK_THROWS_AS(map.get({1, 0, 0}), std::out_of_range);
}

TEST_CASE("entropy map directory round-trip") {
    const EntropyMap map = small_map();
    const fs::path dir = fs::temp_directory_path() / "toprokit_entropy_map";
    fs::remove_all(dir);
    map.save(dir.string());
    const EntropyMap back = EntropyMap::load(dir.string());
    CHECK(back.schedule() == map.schedule());
    CHECK(back.layer_count() == map.layer_count());
    CHECK(back.head_count() == map.head_count());
    CHECK(back.values() == map.values());
}
