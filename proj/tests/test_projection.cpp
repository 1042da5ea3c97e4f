#include <catch2/catch.hpp>

#include "mpcgrad/envs.hpp"
#include "mpcgrad/exploration.hpp"
#include "mpcgrad/projection.hpp"

using namespace mpcgrad;

namespace {

// Independent oracle for the first benchmark: u0 is feasible iff the
// first-stage inequality holds and the successor state admits a resting tail,
// i.e. 5 u0^2 <= 1 - s^2 and |s + u0| <= 1. Scan a dense grid for the
// feasible point closest to a.
double grid_projection_oracle(double s, double a) {
    double best = 0.0/0.0;
    double best_dist = 1e99;
    const int n = 400001;
    for (int i = 0; i < n; ++i) {
        const double u = -1.0 + 2.0 * i / (n - 1);
        if (s * s + 5.0 * u * u > 1.0) continue;
        if (std::abs(s + u) > 1.0) continue;
        const double dist = std::abs(u - a);
        if (dist < best_dist) {
            best_dist = dist;
            best = u;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("feasible points are fixed by the projection", "[projection]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    Projector projector(spec);
    const Vec theta = Vec::Constant(1, 0.5);
    const ProjectionResult pr = projector.project(Vec::Zero(1), theta, Vec::Zero(1));
    REQUIRE(std::abs(pr.a_perp(0)) <= 1e-7);
    REQUIRE(pr.epsilon.norm() <= 1e-7);
    REQUIRE_FALSE(pr.active);
}

TEST_CASE("projection onto the constrained input set", "[projection]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    Projector projector(spec);
    const Vec theta = Vec::Constant(1, 0.5);
    const ProjectionResult pr = projector.project(Vec::Zero(1), theta, Vec::Ones(1));
    REQUIRE(pr.a_perp(0) == Approx(1.0 / std::sqrt(5.0)).margin(1e-6));
    REQUIRE(pr.active);
    // grid oracle agrees
    REQUIRE(std::abs(pr.a_perp(0) - grid_projection_oracle(0.0, 1.0)) <= 1e-4);
}

TEST_CASE("projection against the grid oracle across states", "[projection][oracle]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    Projector projector(spec);
    const Vec theta = Vec::Constant(1, 0.5);
    for (double s : {-0.7, 0.0, 0.5, 0.9}) {
        for (double a : {-1.0, -0.3, 0.2, 0.6, 1.2}) {
            const ProjectionResult pr =
                projector.project(Vec::Constant(1, s), theta, Vec::Constant(1, a));
            const double oracle = grid_projection_oracle(s, a);
            INFO("s=" << s << " a=" << a);
            REQUIRE(std::abs(pr.a_perp(0) - oracle) <= 1e-4);
        }
    }
}

TEST_CASE("input-box projection clips to the bound", "[projection]") {
    const auto [mdp, spec] = example2();
    (void)mdp;
    Projector projector(spec);
    const Vec theta = Vec::Constant(1, 0.1);
    const ProjectionResult pr = projector.project(Vec::Zero(1), theta, Vec::Constant(1, 0.2));
    REQUIRE(pr.a_perp(0) == Approx(0.1).margin(1e-7));
    REQUIRE(pr.epsilon(0) == Approx(-0.1).margin(1e-7));
}

TEST_CASE("projection is idempotent", "[projection]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    Projector projector(spec);
    const Vec theta = Vec::Constant(1, 0.5);
    for (double a : {1.0, -0.8, 0.3}) {
        const ProjectionResult first =
            projector.project(Vec::Constant(1, 0.4), theta, Vec::Constant(1, a));
        const ProjectionResult second =
            projector.project(Vec::Constant(1, 0.4), theta, first.a_perp);
        REQUIRE(std::abs(second.a_perp(0) - first.a_perp(0)) <= 1e-8);
    }
}

TEST_CASE("infeasible states are reported", "[projection]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    Projector projector(spec);
    const Vec theta = Vec::Constant(1, 0.5);
    REQUIRE_THROWS_AS(projector.project(Vec::Constant(1, 1.5), theta, Vec::Zero(1)),
                      InfeasibleState);
}

TEST_CASE("zero exploration projects to the robust policy", "[projection]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.05;
    const Vec theta = Vec::Constant(1, 0.5);
    const ProjectionResult pr =
        explore_and_project(spec, cfg, Vec::Constant(1, 0.9), theta, Vec::Zero(1));
    REQUIRE(pr.epsilon.norm() <= 1e-7);
    REQUIRE(pr.e_perp.norm() <= 1e-7);
}

TEST_CASE("projected exploration decomposes as e + epsilon", "[projection]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.05;
    RobustPolicy robust(spec, cfg);
    Projector projector(spec);
    const Vec theta = Vec::Constant(1, 0.5);
    const Vec s = Vec::Constant(1, 0.9);
    const PolicyEval pe = robust.eval(s, theta, std::nullopt, false);
    SplitRng rng(2024);
    for (int i = 0; i < 200; ++i) {
        SplitRng stream = rng.split(static_cast<std::uint64_t>(i));
        const ExplorationSample es = sample_ball(1, pe.eta, stream);
        const ProjectionResult pr = explore_and_project(projector, pe, s, theta, es.e_hat);
        REQUIRE((pr.e_perp - (es.e_hat + pr.epsilon)).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("projection is closer than any backtracked feasible point", "[projection]") {
    // Backtracking a = pi_hat + t e toward the policy generates certified
    // feasible candidates; the projection must never be farther from a.
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.08;
    RobustPolicy robust(spec, cfg);
    Projector projector(spec);
    MpcPolicy nominal(spec);
    const ParametricNlp nom = nominal.nlp();
    const Vec theta = Vec::Constant(1, 0.5);
    const Vec s = Vec::Constant(1, 0.88);
    const PolicyEval pe = robust.eval(s, theta, std::nullopt, false);
    Vec params(2);
    params << s(0), theta(0);
    SplitRng rng(7);
    for (int i = 0; i < 50; ++i) {
        SplitRng stream = rng.split(static_cast<std::uint64_t>(i));
        const ExplorationSample es = sample_ball(1, pe.eta, stream);
        const Vec a = pe.u0 + es.e_hat;
        const ProjectionResult pr = explore_and_project(projector, pe, s, theta, es.e_hat);
        for (double t : {0.0, 0.25, 0.5, 0.75, 0.9, 1.0}) {
            Vec candidate = pe.u_profile;
            candidate.head(1) = pe.u0 + t * es.e_hat;
            const Vec h = nom.constraints(params, candidate);
            if (detail::max_violation(h) > 1e-10) continue;  // not certified feasible
            const double cand_dist = (candidate.head(1) - a).norm();
            REQUIRE((pr.a_perp - a).norm() <= cand_dist + 1e-8);
        }
    }
}

TEST_CASE("corrections appear on boundary states and scale quadratically",
          "[projection]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    const Vec theta = Vec::Constant(1, 0.5);
    const Vec s = Vec::Constant(1, 0.9);
    Projector projector(spec);
    double max_eps_large = 0.0, max_eps_small = 0.0;
    int active_large = 0;
    for (double bar : {0.1, 0.05}) {
        RmpcConfig cfg;
        cfg.eta_bar = bar;
        RobustPolicy robust(spec, cfg);
        const PolicyEval pe = robust.eval(s, theta, std::nullopt, false);
        SplitRng rng(99);
        double max_eps = 0.0;
        int active = 0;
        for (int i = 0; i < 2000; ++i) {
            SplitRng stream = rng.split(static_cast<std::uint64_t>(i));
            const ExplorationSample es = sample_ball(1, pe.eta, stream);
            const ProjectionResult pr = explore_and_project(projector, pe, s, theta, es.e_hat);
            max_eps = std::max(max_eps, pr.epsilon.norm());
            if (pr.active) ++active;
        }
        if (bar == 0.1) {
            max_eps_large = max_eps;
            active_large = active;
        } else {
            max_eps_small = max_eps;
        }
    }
    REQUIRE(active_large > 20);  // a measurable fraction of draws is corrected
    REQUIRE(max_eps_large > 0.0);
    // quadratic scaling: halving the radius shrinks the max correction by
    // roughly four; allow a factor-of-two band
    REQUIRE(max_eps_small <= max_eps_large / 2.0);
}
