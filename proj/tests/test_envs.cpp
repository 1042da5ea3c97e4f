#include <catch2/catch.hpp>

#include "mpcgrad/envs.hpp"

using namespace mpcgrad;

TEST_CASE("first benchmark arithmetic", "[envs]") {
    const auto [mdp, spec] = example1();
    REQUIRE(mdp.stage_cost(Vec::Zero(1), Vec::Zero(1)) == 0.0);
    REQUIRE(mdp.stage_cost(Vec::Ones(1), Vec::Constant(1, 0.2)) == Approx(1.04));
    const Vec h = spec.h(Vec::Ones(1), Vec::Constant(1, 0.2), Vec::Constant(1, 0.5));
    REQUIRE(h(0) == Approx(0.2));  // 1 + 5*0.04 - 1 > 0, infeasible pair
    REQUIRE(mdp.gamma == 0.9);
    REQUIRE(spec.gamma == 0.9);
}

TEST_CASE("first benchmark is deterministic", "[envs]") {
    const auto [mdp, spec] = example1();
    (void)spec;
    SplitRng a(1), b(2);
    const Vec s = Vec::Constant(1, 0.3);
    const Vec u = Vec::Constant(1, -0.1);
    REQUIRE(mdp.step(s, u, a)(0) == mdp.step(s, u, b)(0));
    REQUIRE(mdp.step(s, u, a)(0) == Approx(0.2));
}

TEST_CASE("second benchmark noise is bounded and centred", "[envs]") {
    const auto [mdp, spec] = example2();
    (void)spec;
    SplitRng rng(99);
    const Vec s = Vec::Zero(1);
    const Vec a = Vec::Zero(1);
    double mean = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const double d = mdp.step(s, a, rng)(0);
        REQUIRE(std::abs(d) < 1e-3);
        mean += d;
    }
    REQUIRE(std::abs(mean / n) < 3e-6);  // SE = 1e-3/sqrt(3n) = 5.8e-7
}

TEST_CASE("second benchmark targets are consistent", "[envs]") {
    const auto [mdp, spec] = example2();
    REQUIRE(mdp.stage_cost(Vec::Constant(1, 0.5), Vec::Constant(1, 2.0)) == 0.0);
    // steady state x = 1/3 requires u = 0.1, making the bound u <= theta = 0.1 marginal
    const Vec next = spec.f(Vec::Constant(1, 1.0 / 3.0), Vec::Constant(1, 0.1), Vec::Zero(1));
    REQUIRE(std::abs(next(0) - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("model matches the plant up to noise", "[envs]") {
    const auto [mdp, spec] = example2();
    SplitRng rng(7);
    const Vec theta = Vec::Constant(1, 0.1);
    for (int i = 0; i < 100; ++i) {
        const Vec s = Vec::Constant(1, rng.uniform(-1.0, 1.0));
        const Vec a = Vec::Constant(1, rng.uniform(-2.0, 2.0));
        const double plant = mdp.step(s, a, rng)(0);
        const double model = spec.f(s, a, theta)(0);
        REQUIRE(std::abs(plant - model) < 1e-3);
    }
}

TEST_CASE("return of a zero-cost problem is exactly zero", "[envs]") {
    Mdp stub;
    stub.state_dim = 1;
    stub.input_dim = 1;
    stub.gamma = 0.9;
    stub.step = [](const Vec& s, const Vec&, SplitRng&) { return s; };
    stub.stage_cost = [](const Vec&, const Vec&) { return 0.0; };
    stub.init_kind = Mdp::InitKind::Fixed;
    stub.init_fixed = Vec::Zero(1);
    const auto est = closed_loop_J(
        stub, [] { return RolloutPolicy([](const Vec&) { return Vec::Zero(1); }); }, 50, 8,
        SplitRng(3));
    REQUIRE(est.mean == 0.0);
    REQUIRE(est.se == 0.0);
}

TEST_CASE("return at the first benchmark origin is zero", "[envs]") {
    auto [mdp, spec] = example1();
    (void)spec;
    mdp.init_kind = Mdp::InitKind::Fixed;
    mdp.init_fixed = Vec::Zero(1);
    const auto est = closed_loop_J(
        mdp, [] { return RolloutPolicy([](const Vec&) { return Vec::Zero(1); }); }, 100, 4,
        SplitRng(5));
    REQUIRE(est.mean == 0.0);
}

TEST_CASE("returns are reproducible for a fixed seed", "[envs]") {
    const auto [mdp, spec] = example2();
    (void)spec;
    auto factory = [] { return RolloutPolicy([](const Vec&) { return Vec::Constant(1, 0.1); }); };
    const auto a = closed_loop_J(mdp, factory, 80, 16, SplitRng(11));
    const auto b = closed_loop_J(mdp, factory, 80, 16, SplitRng(11));
    REQUIRE(a.mean == b.mean);
    REQUIRE(a.se == b.se);
}
