#include <catch2/catch.hpp>

#include "mpcgrad/envs.hpp"
#include "mpcgrad/rmpc.hpp"

using namespace mpcgrad;

TEST_CASE("robust compilation dimensions", "[rmpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    const ParametricNlp nlp = compile_robust(spec, cfg);
    REQUIRE(nlp.n_dec == spec.horizon + 1);
    REQUIRE(nlp.n_con == spec.horizon + 1 + 2);  // stage rows, terminal, two radius bounds
}

TEST_CASE("stage-zero row matches the closed form", "[rmpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.1;
    const ParametricNlp nlp = compile_robust(spec, cfg);
    Vec p(2);
    p << 0.3, 0.5;
    Vec z = Vec::Zero(spec.horizon + 1);
    z(0) = 0.12;
    z(spec.horizon) = 0.07;  // nu
    const Vec h = nlp.constraints(p, z);
    const double expected = 0.3 * 0.3 + 5.0 * 0.12 * 0.12 - 1.0 + std::abs(10.0 * 0.12) * 0.07;
    REQUIRE(h(0) == Approx(expected).margin(1e-8));
    // radius bounds
    REQUIRE(h(nlp.n_con - 2) == Approx(-0.07));
    REQUIRE(h(nlp.n_con - 1) == Approx(0.07 - 0.1));
}

TEST_CASE("input-bound row gains exactly the radius", "[rmpc]") {
    const auto [mdp, spec] = example2();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.05;
    cfg.constant_backoff = true;
    const ParametricNlp nlp = compile_robust(spec, cfg);
    Vec p(2);
    p << 0.0, 0.1;
    Vec z = Vec::Zero(spec.horizon + 1);
    z(0) = 0.04;
    z(spec.horizon) = 0.03;
    const Vec h = nlp.constraints(p, z);
    REQUIRE(h(0) == Approx(0.04 - 0.1 + 0.03).margin(1e-9));
    // later stages depend on u_0 only through the state, which this
    // constraint does not involve: no tightening there
    REQUIRE(h(1) == Approx(0.0 - 0.1).margin(1e-9));
}

TEST_CASE("zero radius bound reproduces the nominal policy", "[rmpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.0;
    MpcPolicy nominal(spec);
    RobustPolicy robust(spec, cfg);
    const Vec theta = Vec::Constant(1, 0.5);
    for (double s : {-0.9, -0.4, 0.0, 0.6, 0.95}) {
        const PolicyEval a = nominal.eval(Vec::Constant(1, s), theta, std::nullopt, false);
        const PolicyEval b = robust.eval(Vec::Constant(1, s), theta, std::nullopt, false);
        REQUIRE(std::abs(a.u0(0) - b.u0(0)) <= 1e-6);
        REQUIRE(b.eta <= 1e-9);
    }
}

TEST_CASE("interior states saturate the radius", "[rmpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.05;
    RobustPolicy robust(spec, cfg);
    const Vec theta = Vec::Constant(1, 0.5);
    for (double s : {-0.5, -0.25, 0.0, 0.25, 0.5}) {
        const PolicyEval pe = robust.eval(Vec::Constant(1, s), theta, std::nullopt, false);
        REQUIRE(std::abs(pe.eta - cfg.eta_bar) <= 1e-6);
    }
}

TEST_CASE("boundary states drive the radius to zero", "[rmpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.05;
    RobustPolicy robust(spec, cfg);
    const Vec theta = Vec::Constant(1, 0.5);
    for (double s : {-1.0, 1.0}) {
        const PolicyEval pe = robust.eval(Vec::Constant(1, s), theta, std::nullopt, false);
        REQUIRE(pe.eta <= 1e-6);
    }
}

TEST_CASE("tightened margins keep the ball feasible to first order", "[rmpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.05;
    RobustPolicy robust(spec, cfg);
    MpcPolicy nominal(spec);
    const ParametricNlp nom = nominal.nlp();
    const Vec theta = Vec::Constant(1, 0.5);
    for (double s : {-0.9, -0.6, 0.0, 0.7, 0.95}) {
        const PolicyEval pe = robust.eval(Vec::Constant(1, s), theta, std::nullopt, false);
        Vec params(2);
        params << s, theta(0);
        const Vec h = nom.constraints(params, pe.u_profile);
        const Mat jac = nom.constraint_jac(params, pe.u_profile);
        for (int i = 0; i < nom.n_con; ++i) {
            for (double v : {-1.0, 1.0}) {
                const double fo = h(i) + jac(i, 0) * pe.eta * v;
                REQUIRE(fo <= 1e-8);
            }
        }
    }
}

TEST_CASE("radius is monotone in its bound", "[rmpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    const Vec theta = Vec::Constant(1, 0.5);
    for (double s : {-0.97, -0.8, 0.0, 0.9}) {
        double previous = -1.0;
        for (double bar : {0.025, 0.05, 0.1}) {
            RmpcConfig cfg;
            cfg.eta_bar = bar;
            const PolicyEval pe = robust_policy(spec, cfg, Vec::Constant(1, s), theta);
            REQUIRE(pe.eta <= bar + 1e-9);
            REQUIRE(pe.eta >= previous - 1e-7);
            previous = pe.eta;
        }
    }
}

TEST_CASE("robust policy succeeds wherever the nominal does", "[rmpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.05;
    MpcPolicy nominal(spec);
    RobustPolicy robust(spec, cfg);
    const Vec theta = Vec::Constant(1, 0.5);
    for (int i = 0; i <= 20; ++i) {
        const double s = -1.0 + 2.0 * i / 20.0;
        REQUIRE_NOTHROW(nominal.eval(Vec::Constant(1, s), theta, std::nullopt, false));
        REQUIRE_NOTHROW(robust.eval(Vec::Constant(1, s), theta, std::nullopt, false));
    }
}

TEST_CASE("robust policy backs away from the nominal boundary", "[rmpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.05;
    MpcPolicy nominal(spec);
    RobustPolicy robust(spec, cfg);
    const Vec theta = Vec::Constant(1, 0.5);
    const Vec s = Vec::Constant(1, 0.9);
    const PolicyEval pe_n = nominal.eval(s, theta, std::nullopt, false);
    const PolicyEval pe_r = robust.eval(s, theta, std::nullopt, false);
    const double slack_n = 1.0 - (0.81 + 5.0 * pe_n.u0(0) * pe_n.u0(0));
    const double slack_r = 1.0 - (0.81 + 5.0 * pe_r.u0(0) * pe_r.u0(0));
    REQUIRE(std::abs(slack_n) <= 1e-6);  // nominal sits on the bound
    REQUIRE(slack_r > 1e-3);             // robust keeps a distance
}

TEST_CASE("policy gap shrinks with the radius bound", "[rmpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    MpcPolicy nominal(spec);
    const Vec theta = Vec::Constant(1, 0.5);
    const Vec s = Vec::Constant(1, 0.9);
    const double pi = nominal.eval(s, theta, std::nullopt, false).u0(0);
    double gap_large = 0.0, gap_small = 0.0;
    {
        RmpcConfig cfg;
        cfg.eta_bar = 0.1;
        gap_large = std::abs(robust_policy(spec, cfg, s, theta).u0(0) - pi);
    }
    {
        RmpcConfig cfg;
        cfg.eta_bar = 0.025;
        gap_small = std::abs(robust_policy(spec, cfg, s, theta).u0(0) - pi);
    }
    REQUIRE(gap_small < gap_large);
    REQUIRE(gap_large <= 3.0 * 0.1);  // gap is of the order of the radius
}

TEST_CASE("second benchmark saturates the radius everywhere", "[rmpc]") {
    const auto [mdp, spec] = example2();
    (void)mdp;
    RmpcConfig cfg;
    cfg.eta_bar = 0.05;
    cfg.constant_backoff = true;
    RobustPolicy robust(spec, cfg);
    const Vec theta = Vec::Constant(1, 0.1);
    // Radius saturates for any state: the input bound can always be met by
    // backing the input off, at bounded cost.
    for (double s : {0.0, 0.2, 0.5}) {
        const PolicyEval pe = robust.eval(Vec::Constant(1, s), theta, std::nullopt, false);
        REQUIRE(std::abs(pe.eta - cfg.eta_bar) <= 1e-6);
    }
    // Below the state target the controller pushes against the bound: the
    // policy is pinned at theta - eta_bar and moves one-for-one with theta.
    for (double s : {0.0, 0.2}) {
        const PolicyEval pe = robust.eval(Vec::Constant(1, s), theta);
        REQUIRE(pe.u0(0) == Approx(0.1 - 0.05).margin(1e-6));
        REQUIRE(pe.dpi_dtheta(0, 0) == Approx(1.0).margin(1e-5));
    }
    // Above it the bound is inactive and the input drops below the back-off.
    const PolicyEval interior = robust.eval(Vec::Constant(1, 0.5), theta, std::nullopt, false);
    REQUIRE(interior.u0(0) < 0.1 - 0.05 - 1e-3);
}
