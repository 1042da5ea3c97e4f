#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "mpcgrad/mpc.hpp"
#include "mpcgrad/rng.hpp"

namespace mpcgrad {

/// A small continuous-space MDP: transition, stage cost, discount and an
/// initial-state distribution. Transitions are deterministic given the rng
/// substream.
struct Mdp {
    int state_dim = 1;
    int input_dim = 1;
    double gamma = 0.9;
    std::function<Vec(const Vec&, const Vec&, SplitRng&)> step;
    std::function<double(const Vec&, const Vec&)> stage_cost;

    enum class InitKind { Fixed, Uniform };
    InitKind init_kind = InitKind::Fixed;
    Vec init_fixed;
    Vec init_lo, init_hi;

    [[nodiscard]] Vec sample_initial(SplitRng& rng) const {
        if (init_kind == InitKind::Fixed) return init_fixed;
        Vec s(state_dim);
        for (int i = 0; i < state_dim; ++i) s(i) = rng.uniform(init_lo(i), init_hi(i));
        return s;
    }
};

struct Example1Options {
    int horizon = 20;                 // not fixed by the benchmark; user-overridable
    bool terminal_constraint = true;  // reuse the stage constraint shape at x_N
};

/// Scalar benchmark: s+ = s + a, L = s^2 + a^2, constraint s^2 + 5a^2 <= 1,
/// gamma = 0.9. The matching scheme has stage cost theta*x^2 + u^2, terminal
/// cost x_N^2 and the same inequality at every stage.
inline std::pair<Mdp, MpcSpec> example1(const Example1Options& opt = Example1Options{}) {
    Mdp mdp;
    mdp.state_dim = 1;
    mdp.input_dim = 1;
    mdp.gamma = 0.9;
    mdp.step = [](const Vec& s, const Vec& a, SplitRng&) { return Vec(s + a); };
    mdp.stage_cost = [](const Vec& s, const Vec& a) { return s.squaredNorm() + a.squaredNorm(); };
    mdp.init_kind = Mdp::InitKind::Uniform;
    mdp.init_lo = Vec::Constant(1, -1.0);
    mdp.init_hi = Vec::Constant(1, 1.0);

    MpcSpec spec;
    spec.state_dim = 1;
    spec.input_dim = 1;
    spec.horizon = opt.horizon;
    spec.theta_dim = 1;
    spec.gamma = 0.9;
    spec.f = [](const Vec& x, const Vec& u, const Vec&) { return Vec(x + u); };
    spec.f_x = [](const Vec&, const Vec&, const Vec&) { return Mat::Identity(1, 1); };
    spec.f_u = [](const Vec&, const Vec&, const Vec&) { return Mat::Identity(1, 1); };
    spec.stage_cost = [](const Vec& x, const Vec& u, const Vec& th) {
        return th(0) * x(0) * x(0) + u(0) * u(0);
    };
    spec.stage_cost_x = [](const Vec& x, const Vec&, const Vec& th) {
        return Vec::Constant(1, 2.0 * th(0) * x(0));
    };
    spec.stage_cost_u = [](const Vec&, const Vec& u, const Vec&) {
        return Vec::Constant(1, 2.0 * u(0));
    };
    spec.terminal_cost = [](const Vec& x, const Vec&) { return x(0) * x(0); };
    spec.terminal_cost_x = [](const Vec& x, const Vec&) { return Vec::Constant(1, 2.0 * x(0)); };
    spec.stage_con_dim = 1;
    spec.h = [](const Vec& x, const Vec& u, const Vec&) {
        return Vec::Constant(1, x(0) * x(0) + 5.0 * u(0) * u(0) - 1.0);
    };
    spec.h_x = [](const Vec& x, const Vec&, const Vec&) { return Mat::Constant(1, 1, 2.0 * x(0)); };
    spec.h_u = [](const Vec&, const Vec& u, const Vec&) {
        return Mat::Constant(1, 1, 10.0 * u(0));
    };
    if (opt.terminal_constraint) {
        spec.terminal_con_dim = 1;
        spec.hf = [](const Vec& x, const Vec&) { return Vec::Constant(1, x(0) * x(0) - 1.0); };
        spec.hf_x = [](const Vec& x, const Vec&) { return Mat::Constant(1, 1, 2.0 * x(0)); };
    }
    return {std::move(mdp), std::move(spec)};
}

/// Scalar benchmark with input bound: s+ = 0.97 s + 0.1 a + d with
/// d ~ U(-1e-3, 1e-3), L = 20 (s - 1/2)^2 + (a - 2)^2, gamma = 0.9. The
/// scheme tracks x -> 1/3 and u -> u_ref(theta) = 0.2 - theta over 51 stages
/// under u_k <= theta, with no terminal cost or constraint.
inline std::pair<Mdp, MpcSpec> example2() {
    Mdp mdp;
    mdp.state_dim = 1;
    mdp.input_dim = 1;
    mdp.gamma = 0.9;
    mdp.step = [](const Vec& s, const Vec& a, SplitRng& rng) {
        return Vec::Constant(1, 0.97 * s(0) + 0.1 * a(0) + rng.uniform(-1e-3, 1e-3));
    };
    mdp.stage_cost = [](const Vec& s, const Vec& a) {
        return 20.0 * (s(0) - 0.5) * (s(0) - 0.5) + (a(0) - 2.0) * (a(0) - 2.0);
    };
    mdp.init_kind = Mdp::InitKind::Fixed;
    mdp.init_fixed = Vec::Zero(1);

    MpcSpec spec;
    spec.state_dim = 1;
    spec.input_dim = 1;
    spec.horizon = 51;
    spec.theta_dim = 1;
    spec.gamma = 0.9;
    spec.f = [](const Vec& x, const Vec& u, const Vec&) {
        return Vec::Constant(1, 0.97 * x(0) + 0.1 * u(0));
    };
    spec.f_x = [](const Vec&, const Vec&, const Vec&) { return Mat::Constant(1, 1, 0.97); };
    spec.f_u = [](const Vec&, const Vec&, const Vec&) { return Mat::Constant(1, 1, 0.1); };
    spec.stage_cost = [](const Vec& x, const Vec& u, const Vec& th) {
        const double uref = 0.2 - th(0);
        const double dx = x(0) - 1.0 / 3.0;
        const double du = u(0) - uref;
        return 10.0 * dx * dx + du * du;
    };
    spec.stage_cost_x = [](const Vec& x, const Vec&, const Vec&) {
        return Vec::Constant(1, 20.0 * (x(0) - 1.0 / 3.0));
    };
    spec.stage_cost_u = [](const Vec&, const Vec& u, const Vec& th) {
        return Vec::Constant(1, 2.0 * (u(0) - (0.2 - th(0))));
    };
    spec.terminal_cost = [](const Vec&, const Vec&) { return 0.0; };
    spec.terminal_cost_x = [](const Vec&, const Vec&) { return Vec::Zero(1); };
    spec.stage_con_dim = 1;
    spec.h = [](const Vec&, const Vec& u, const Vec& th) {
        return Vec::Constant(1, u(0) - th(0));
    };
    spec.h_x = [](const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
    spec.h_u = [](const Vec&, const Vec&, const Vec&) { return Mat::Constant(1, 1, 1.0); };
    spec.terminal_con_dim = 0;
    spec.constant_cost_hessian = true;  // affine dynamics, quadratic cost, theta only shifts it
    return {std::move(mdp), std::move(spec)};
}

struct ReturnEstimate {
    double mean = 0.0;
    double se = 0.0;
};

/// Stateful per-rollout action map (may carry warm-start state internally).
using RolloutPolicy = std::function<Vec(const Vec&)>;

/// Monte Carlo discounted return of a policy, no exploration. The factory is
/// invoked once per rollout so policies can warm-start along the trajectory;
/// rollout r draws from rng.split(r).
inline ReturnEstimate closed_loop_J(const Mdp& mdp,
                                    const std::function<RolloutPolicy()>& policy_factory,
                                    int horizon, int n_rollouts, SplitRng rng) {
    double sum = 0.0, sum_sq = 0.0;
    for (int r = 0; r < n_rollouts; ++r) {
        SplitRng stream = rng.split(static_cast<std::uint64_t>(r));
        SplitRng init_stream = stream.split(0);
        SplitRng noise_stream = stream.split(1);
        RolloutPolicy pol = policy_factory();
        Vec s = mdp.sample_initial(init_stream);
        double ret = 0.0;
        double disc = 1.0;
        for (int t = 0; t < horizon; ++t) {
            const Vec a = pol(s);
            ret += disc * mdp.stage_cost(s, a);
            disc *= mdp.gamma;
            s = mdp.step(s, a, noise_stream);
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    ReturnEstimate est;
    est.mean = sum / n_rollouts;
    if (n_rollouts > 1) {
        const double var = std::max(0.0, (sum_sq - sum * sum / n_rollouts) / (n_rollouts - 1));
        est.se = std::sqrt(var / n_rollouts);
    }
    return est;
}

}  // namespace mpcgrad
