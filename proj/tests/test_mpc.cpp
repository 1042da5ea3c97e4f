#include <catch2/catch.hpp>

#include "mpcgrad/envs.hpp"
#include "mpcgrad/mpc.hpp"
#include "support/finite_dp.hpp"

using namespace mpcgrad;

TEST_CASE("compiled dimensions follow the scheme", "[mpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    const ParametricNlp nlp = compile(spec);
    REQUIRE(nlp.n_dec == spec.horizon);
    REQUIRE(nlp.n_con == spec.horizon + 1);  // one row per stage plus terminal
    REQUIRE(nlp.n_par == 2);                 // scalar state + scalar theta
}

TEST_CASE("constant dynamics and constant constraints compile verbatim", "[mpc]") {
    MpcSpec spec;
    spec.state_dim = 1;
    spec.input_dim = 1;
    spec.horizon = 4;
    spec.theta_dim = 1;
    spec.gamma = 1.0;
    spec.f = [](const Vec& x, const Vec&, const Vec&) { return x; };
    spec.f_x = [](const Vec&, const Vec&, const Vec&) { return Mat::Identity(1, 1); };
    spec.f_u = [](const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
    spec.stage_cost = [](const Vec&, const Vec& u, const Vec&) { return u.squaredNorm(); };
    spec.stage_cost_x = [](const Vec&, const Vec&, const Vec&) { return Vec::Zero(1); };
    spec.stage_cost_u = [](const Vec&, const Vec& u, const Vec&) { return Vec(2.0 * u); };
    spec.terminal_cost = [](const Vec&, const Vec&) { return 0.0; };
    spec.terminal_cost_x = [](const Vec&, const Vec&) { return Vec::Zero(1); };
    spec.stage_con_dim = 1;
    spec.h = [](const Vec&, const Vec&, const Vec&) { return Vec::Constant(1, -1.0); };
    spec.h_x = [](const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
    spec.h_u = [](const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };

    const ParametricNlp nlp = compile(spec);
    Vec params(2);
    params << 0.3, 0.0;
    const Vec h = nlp.constraints(params, Vec::Ones(4));
    REQUIRE(h.size() == 4);
    for (int i = 0; i < 4; ++i) REQUIRE(h(i) == Approx(-1.0).margin(1e-15));
}

TEST_CASE("second benchmark cost at rest matches direct summation", "[mpc]") {
    const auto [mdp, spec] = example2();
    (void)mdp;
    const double theta = 0.37;
    const ParametricNlp nlp = compile(spec);
    Vec params(2);
    params << 0.0, theta;
    const double compiled = nlp.cost(params, Vec::Zero(spec.horizon));

    const double uref = 0.2 - theta;
    double direct = 0.0;
    for (int k = 0; k <= 50; ++k)
        direct += std::pow(0.9, k) * (10.0 * (1.0 / 9.0) + uref * uref);
    REQUIRE(compiled == Approx(direct).epsilon(1e-12));
}

TEST_CASE("policy at the origin rests", "[mpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    MpcPolicy pol(spec);
    const PolicyEval pe = pol.eval(Vec::Zero(1), Vec::Constant(1, 0.5));
    REQUIRE(std::abs(pe.u0(0)) <= 1e-7);
    REQUIRE(std::abs(pe.objective) <= 1e-10);
    REQUIRE(pe.eta == 0.0);
}

TEST_CASE("boundary state pins the first input to zero", "[mpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    MpcPolicy pol(spec);
    const PolicyEval pe = pol.eval(Vec::Ones(1), Vec::Constant(1, 0.5), std::nullopt, false);
    // At s = 1 the pinning constraint 5 u0^2 <= 0 has a vanishing gradient, so
    // no multiplier certificate exists and the iterates approach zero along a
    // penalty path; the pin is only resolved to the penalty scale.
    REQUIRE(std::abs(pe.u0(0)) <= 1e-4);
    // first-stage constraint sits on the boundary: s^2 + 5 u0^2 = 1
    const double boundary = 1.0 + 5.0 * pe.u0(0) * pe.u0(0) - 1.0;
    REQUIRE(std::abs(boundary) <= 1e-6);
    REQUIRE(std::abs(pe.solution.constraint_values(0)) <= 1e-6);
}

TEST_CASE("trajectory satisfies the dynamics recursion", "[mpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    MpcPolicy pol(spec);
    const Vec theta = Vec::Constant(1, 0.5);
    const Vec s = Vec::Constant(1, 0.6);
    const PolicyEval pe = pol.eval(s, theta, std::nullopt, false);
    REQUIRE(pe.x_traj[0](0) == s(0));
    for (int k = 0; k < spec.horizon; ++k) {
        const Vec next = spec.f(pe.x_traj[static_cast<std::size_t>(k)],
                                pe.u_profile.segment(k, 1), theta);
        REQUIRE(std::abs(pe.x_traj[static_cast<std::size_t>(k) + 1](0) - next(0)) <= 1e-12);
    }
}

TEST_CASE("policy sensitivity matches differenced re-solves", "[mpc]") {
    SECTION("first benchmark, binding constraint") {
        const auto [mdp, spec] = example1();
        (void)mdp;
        MpcPolicy pol(spec);
        const Vec s = Vec::Constant(1, 0.9);
        const Vec theta = Vec::Constant(1, 0.5);
        const PolicyEval pe = pol.eval(s, theta);

        const double delta = 1e-6;
        const PolicyEval up = pol.eval(s, Vec::Constant(1, 0.5 + delta), pe.u_profile, false);
        const PolicyEval um = pol.eval(s, Vec::Constant(1, 0.5 - delta), pe.u_profile, false);
        const double fd = (up.u0(0) - um.u0(0)) / (2.0 * delta);
        REQUIRE(std::abs(pe.dpi_dtheta(0, 0) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
    SECTION("second benchmark at theta = 0.1") {
        const auto [mdp, spec] = example2();
        (void)mdp;
        MpcPolicy pol(spec);
        const Vec s = Vec::Zero(1);
        const Vec theta = Vec::Constant(1, 0.1);
        const PolicyEval pe = pol.eval(s, theta);

        const double delta = 1e-6;
        const PolicyEval up = pol.eval(s, Vec::Constant(1, 0.1 + delta), pe.u_profile, false);
        const PolicyEval um = pol.eval(s, Vec::Constant(1, 0.1 - delta), pe.u_profile, false);
        const double fd = (up.u0(0) - um.u0(0)) / (2.0 * delta);
        REQUIRE(std::abs(pe.dpi_dtheta(0, 0) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("policy agrees with grid backward induction", "[mpc][oracle]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    MpcPolicy pol(spec);
    const Vec theta = Vec::Constant(1, 0.5);
    const test_support::FiniteDpOracle oracle(spec.horizon, 0.5, spec.gamma);
    for (double s : {-0.8, -0.3, 0.0, 0.4, 0.9, 1.0}) {
        const PolicyEval pe = pol.eval(Vec::Constant(1, s), theta, std::nullopt, false);
        const double u_dp = oracle.best_first_input(s);
        INFO("s = " << s << " nlp = " << pe.u0(0) << " dp = " << u_dp);
        REQUIRE(std::abs(pe.u0(0) - u_dp) <= 1e-3);
    }
}

TEST_CASE("warm-started sweep succeeds wherever the cold sweep does", "[mpc]") {
    const auto [mdp, spec] = example1();
    (void)mdp;
    MpcPolicy pol(spec);
    const Vec theta = Vec::Constant(1, 0.5);
    std::optional<Vec> warm;
    for (int i = 0; i <= 40; ++i) {
        const double s = -1.0 + 2.0 * i / 40.0;
        const PolicyEval cold = pol.eval(Vec::Constant(1, s), theta, std::nullopt, false);
        const PolicyEval warmed = pol.eval(Vec::Constant(1, s), theta, warm, false);
        // At the degenerate endpoints the solve stalls near the pin and the
        // answer is only defined to the penalty scale.
        const double tol = cold.solution.status == SolveStatus::Converged ? 1e-6 : 1e-4;
        REQUIRE(std::abs(cold.u0(0) - warmed.u0(0)) <= tol);
        warm = warmed.u_profile;
    }
}

TEST_CASE("policy is insensitive to the horizon beyond ten stages", "[mpc]") {
    const Vec theta = Vec::Constant(1, 0.5);
    std::vector<double> us;
    for (int N : {12, 20, 28}) {
        Example1Options opt;
        opt.horizon = N;
        const auto [mdp, spec] = example1(opt);
        (void)mdp;
        MpcPolicy pol(spec);
        us.push_back(pol.eval(Vec::Constant(1, 0.7), theta, std::nullopt, false).u0(0));
    }
    REQUIRE(std::abs(us[0] - us[1]) <= 0.02);
    REQUIRE(std::abs(us[1] - us[2]) <= 0.002);
}
