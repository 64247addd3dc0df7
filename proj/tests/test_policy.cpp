#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "toprokit/policy.hpp"

using namespace toprokit;

namespace {

PolicyConfig base_config() {
    PolicyConfig cfg;
    cfg.tau = 0.4;
    return cfg;
}

// Straight-line reference for a single retention decision, kept independent
// of the production path.
std::vector<double> reference_keep_probability(const std::vector<double>& q, std::size_t scale,
                                               std::size_t depth, const PolicyConfig& cfg) {
    std::vector<double> p(q.size(), 1.0);
    if (scale < depth) return p;
    for (std::size_t i = 0; i < q.size(); ++i) {
        double prune = cfg.alpha_min + (cfg.alpha_max - cfg.alpha_min) * q[i];
        prune = std::min(1.0, std::max(0.0, prune));
        p[i] = 1.0 - prune;
    }
    return p;
}

}  // namespace

TEST_CASE("scale_depth follows the min-index rule") {
    PolicyConfig cfg = base_config();
    const ScaleDecision dec = scale_depth({0.1, 0.2, 0.45, 0.5}, cfg);
    REQUIRE(dec.depth.has_value());
    CHECK(*dec.depth == 3);

    CHECK(!scale_depth({0.0, 0.0, 0.0}, cfg).depth.has_value());

    cfg.tau = 0.0;
    CHECK(*scale_depth({0.1, 0.2}, cfg).depth == 1);

    cfg = base_config();
    cfg.depth_comparison = DepthComparison::at_most;
    CHECK(*scale_depth({0.9, 0.5, 0.3, 0.2}, cfg).depth == 3);

    CHECK_THROWS_AS(scale_depth({}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(scale_depth({1.5}, cfg), std::invalid_argument);
}

TEST_CASE("token_tendency multiplies the three factors") {
    const std::vector<double> zero = token_tendency(4, 8, 0.0, {0.3, 0.7});
    CHECK(zero == std::vector<double>{0.0, 0.0});

    const std::vector<double> q = token_tendency(10, 10, 1.0, {0.5, 0.5});
    CHECK(q[0] == doctest::Approx(0.5));
    CHECK(q[1] == doctest::Approx(0.5));

    // phi is monotone in s.
    std::vector<double> prev{0.0, 0.0};
    for (std::size_t s = 1; s <= 8; ++s) {
        const std::vector<double> cur = token_tendency(s, 8, 0.8, {0.25, 0.75});
        CHECK(cur[0] >= prev[0]);
        CHECK(cur[1] >= prev[1]);
        prev = cur;
    }
    CHECK_THROWS_AS(token_tendency(9, 8, 1.0, {1.0}), std::invalid_argument);
}

TEST_CASE("retention evaluates the piecewise keep probability") {
    PolicyConfig cfg = base_config();
    cfg.alpha_min = 0.2;
    cfg.alpha_max = 1.0;
    ScaleDecision dec;
    dec.rho_per_scale = std::vector<double>(10, 0.5);
    dec.depth = 5;

    // The worked example: q = 0.5 with these alphas gives P_keep = 0.4.
    const TokenDecision at10 = retention(std::vector<double>(4, 0.5), 10, dec, cfg);
    for (double p : at10.keep_probability) CHECK(std::abs(p - 0.4) < 1e-12);

    // Below the depth: everything kept.
    const TokenDecision at3 = retention(std::vector<double>(4, 0.5), 3, dec, cfg);
    CHECK(at3.keep_probability == std::vector<double>(4, 1.0));
    CHECK(at3.kept_count() == 4);

    // Zero pruning range keeps everything regardless of q.
    cfg.alpha_min = 0.0;
    cfg.alpha_max = 0.0;
    const TokenDecision none = retention({0.0, 0.4, 0.9, 1.0}, 10, dec, cfg);
    CHECK(none.keep_probability == std::vector<double>(4, 1.0));
    CHECK(none.kept_count() == 4);

    CHECK_THROWS_AS(retention({0.5}, 11, dec, cfg), std::invalid_argument);
    CHECK_THROWS_AS(retention({-0.5}, 10, dec, cfg), std::invalid_argument);
}

TEST_CASE("deterministic masks keep the expected count with index tie-breaks") {
    PolicyConfig cfg = base_config();
    cfg.alpha_min = 0.0;
    cfg.alpha_max = 1.0;
    ScaleDecision dec;
    dec.rho_per_scale = {0.5};
    dec.depth = 1;

    // P_keep = [0.9, 0.5, 0.5, 0.1]; expected keep = 2 -> the two highest,
    // with the tie between indices 1 and 2 going to index 1.
    const TokenDecision td = retention({0.1, 0.5, 0.5, 0.9}, 1, dec, cfg);
    CHECK(td.kept_count() == 2);
    CHECK(td.mask == std::vector<bool>{true, true, false, false});
}

TEST_CASE("sampled masks are seeded and respect the keep floor") {
    PolicyConfig cfg = base_config();
    cfg.alpha_min = 0.0;
    cfg.alpha_max = 0.8;
    cfg.prune_mode = PruneMode::sampled;
    cfg.rng_seed = 7;
    ScaleDecision dec;
    dec.rho_per_scale = {0.5, 0.5};
    dec.depth = 1;

    std::vector<double> q(50);
    SeededRng rng(9);
    for (double& v : q) v = rng.next_unit();
    const TokenDecision a = retention(q, 2, dec, cfg);
    const TokenDecision b = retention(q, 2, dec, cfg);
    CHECK(a.mask == b.mask);

    cfg.rng_seed = 8;
    const TokenDecision c = retention(q, 2, dec, cfg);
    CHECK(a.mask != c.mask);

    const std::size_t floor_keep = static_cast<std::size_t>(std::ceil(0.2 * 50));
    CHECK(a.kept_count() >= floor_keep);
    CHECK(c.kept_count() >= floor_keep);
}

TEST_CASE("keep probability is monotone in every tendency factor") {
    PolicyConfig cfg = base_config();
    SeededRng rng(31);
    ScaleDecision dec;
    dec.rho_per_scale = std::vector<double>(12, 1.0);
    dec.depth = 1;
    for (int it = 0; it < 10000; ++it) {
        cfg.alpha_min = rng.next_unit() * 0.5;
        cfg.alpha_max = cfg.alpha_min + rng.next_unit() * (1.0 - cfg.alpha_min);
        const std::size_t s_max = 12;
        const std::size_t s_lo = 1 + rng.next_u64() % 11;
        const std::size_t s_hi = s_lo + rng.next_u64() % (s_max - s_lo + 1);
        const double r_lo = rng.next_unit();
        const double r_hi = r_lo + rng.next_unit() * (1.0 - r_lo);
        const double h_lo = rng.next_unit();
        const double h_hi = h_lo + rng.next_unit() * (1.0 - h_lo);

        const std::vector<double> q_lo = token_tendency(s_lo, s_max, r_lo, {h_lo});
        const std::vector<double> q_hi = token_tendency(s_hi, s_max, r_hi, {h_hi});
        const double p_lo = retention(q_lo, s_lo, dec, cfg).keep_probability[0];
        const double p_hi = retention(q_hi, s_hi, dec, cfg).keep_probability[0];
        REQUIRE(p_hi <= p_lo + 1e-15);
        REQUIRE(p_lo >= 0.0);
        REQUIRE(p_lo <= 1.0);
    }
}

namespace {

EntropyMap plan_fixture() {
    // 3 scales, 2 layers, 1 head. Layer 0 is rank-1 at every scale (Global);
    // layer 1 has an identity-like grid (Detail). Reference layer is layer 1
    // (the last), whose rho crosses 0.4 starting at scale 2.
    EntropyMap map(ScaleSchedule({{1, 2}, {2, 2}, {2, 4}}), 2, 1);
    map.set({1, 0, 0}, {1.0, 1.0});
    map.set({2, 0, 0}, {1.0, 2.0, 1.0, 2.0});
    map.set({3, 0, 0}, {1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0});
    map.set({1, 1, 0}, {2.0, 2.0});                            // rho = 0
    map.set({2, 1, 0}, {1.0, 0.0, 0.0, 1.0});                  // rho = 0.5
    map.set({3, 1, 0}, {2.0, 0.0, 0.0, 1.0, 0.5, 2.0, 0.1, 0.3});  // rho = 0.625
    return map;
}

}  // namespace

TEST_CASE("build_plan opens gates only for Detail layers at scales >= D") {
    const EntropyMap map = plan_fixture();
    PolicyConfig cfg = base_config();
    cfg.alpha_min = 0.3;
    cfg.alpha_max = 0.9;
    const auto cls = classify_layers(map, 2, 1.0, 0.5);
    REQUIRE(cls[0].label == LayerLabel::Global);
    REQUIRE(cls[1].label == LayerLabel::Detail);

    const PruningPlan plan = build_plan(map, cls, cfg);
    CHECK(plan.scale_decision.rho_per_scale == std::vector<double>{0.0, 0.5, 0.625});
    REQUIRE(plan.scale_decision.depth.has_value());
    CHECK(*plan.scale_decision.depth == 2);

    // Masks nontrivial exactly at (s in {2,3}, layer 1).
    for (std::size_t s = 1; s <= 3; ++s) {
        for (std::size_t l = 0; l < 2; ++l) {
            const TokenDecision& dec = plan.decision(s, l, 2);
            CHECK(dec.scale == s);
            CHECK(dec.layer == l);
            const bool expect_pruning = (s >= 2 && l == 1);
            if (!expect_pruning) {
                CHECK(dec.kept_count() == dec.mask.size());
                CHECK(dec.pruned_importance_mass == 0.0);
            } else {
                CHECK(dec.kept_count() < dec.mask.size());
            }
        }
    }

    // Straight-line recomputation of the (s=2, l=1) decision.
    {
        const TokenDecision& dec = plan.decision(2, 1, 2);
        const std::vector<double> h_hat = normalize_entropy({1.0, 0.0, 0.0, 1.0});
        const std::vector<double> q = token_tendency(2, 3, cls[1].score, h_hat);
        const std::vector<double> expect = reference_keep_probability(q, 2, 2, cfg);
        REQUIRE(dec.keep_probability.size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) {
            CHECK(dec.keep_probability[i] == doctest::Approx(expect[i]).epsilon(1e-12));
        }
        // gamma equals the independently summed pruned importance mass.
        double gamma = 0.0;
        for (std::size_t i = 0; i < dec.mask.size(); ++i) {
            if (!dec.mask[i]) gamma += h_hat[i];
        }
        CHECK(dec.pruned_importance_mass == doctest::Approx(gamma).epsilon(1e-12));
        // Keep floor.
        CHECK(dec.kept_count() >=
              static_cast<std::size_t>(std::ceil((1.0 - cfg.alpha_max) * dec.mask.size())));
    }
}

TEST_CASE("closed gates produce identity plans") {
    const EntropyMap map = plan_fixture();
    PolicyConfig cfg = base_config();

    // Every layer Global: no token pruned anywhere.
    auto cls = classify_layers(map, 2, 1.0, 0.5);
    for (auto& c : cls) c.label = LayerLabel::Global;
    const PruningPlan all_global = build_plan(map, cls, cfg);
    for (const auto& dec : all_global.decisions) {
        CHECK(dec.kept_count() == dec.mask.size());
    }

    // Threshold never crossed: identity plan.
    cfg.tau = 0.99;
    const PruningPlan no_depth = build_plan(map, classify_layers(map, 2, 1.0, 0.5), cfg);
    CHECK(!no_depth.scale_decision.depth.has_value());
    for (const auto& dec : no_depth.decisions) {
        CHECK(dec.kept_count() == dec.mask.size());
    }
}

TEST_CASE("plan serialization writes masks and scalars") {
    const EntropyMap map = plan_fixture();
    const PolicyConfig cfg = base_config();
    const PruningPlan plan = build_plan(map, classify_layers(map, 2, 1.0, 0.5), cfg);
    const auto dir = std::filesystem::temp_directory_path() / "toprokit_plan";
    std::filesystem::remove_all(dir);
    save_plan(plan, dir.string());
    CHECK(std::filesystem::exists(dir / "plan.json"));
    const Matrix2D mask = matrix_from_file((dir / "mask_s2_l1.tprv").string());
    CHECK(mask.size() == 4);
    std::size_t kept = 0;
    for (double v : mask.data()) {
        CHECK((v == 0.0 || v == 1.0));
        if (v == 1.0) ++kept;
    }
    CHECK(kept == plan.decision(2, 1, 2).kept_count());
}

TEST_CASE("policy config validation") {
    PolicyConfig cfg;
    cfg.tau = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = PolicyConfig{};
    cfg.alpha_min = 0.8;
    cfg.alpha_max = 0.2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = PolicyConfig{};
    cfg.beta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_NOTHROW(PolicyConfig{}.validate());
}
