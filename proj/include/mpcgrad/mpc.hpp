#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "mpcgrad/kkt_sensitivity.hpp"
#include "mpcgrad/nlp.hpp"

namespace mpcgrad {

/// Structured ingredients of a finite-horizon control scheme: dynamics, stage
/// and terminal costs, stage and terminal inequality constraints, horizon and
/// discount. Callbacks receive (x, u, theta); everything must be smooth in a
/// neighborhood of the iterates.
struct MpcSpec {
    int state_dim = 0;
    int input_dim = 0;
    int horizon = 0;  // N >= 1
    int theta_dim = 0;
    double gamma = 1.0;

    std::function<Vec(const Vec&, const Vec&, const Vec&)> f;    // x+ = f(x,u,theta)
    std::function<Mat(const Vec&, const Vec&, const Vec&)> f_x;  // n x n
    std::function<Mat(const Vec&, const Vec&, const Vec&)> f_u;  // n x m

    std::function<double(const Vec&, const Vec&, const Vec&)> stage_cost;
    std::function<Vec(const Vec&, const Vec&, const Vec&)> stage_cost_x;
    std::function<Vec(const Vec&, const Vec&, const Vec&)> stage_cost_u;

    std::function<double(const Vec&, const Vec&)> terminal_cost;  // V(x,theta)
    std::function<Vec(const Vec&, const Vec&)> terminal_cost_x;

    int stage_con_dim = 0;  // rows of h(x,u,theta) <= 0
    std::function<Vec(const Vec&, const Vec&, const Vec&)> h;
    std::function<Mat(const Vec&, const Vec&, const Vec&)> h_x;  // q x n
    std::function<Mat(const Vec&, const Vec&, const Vec&)> h_u;  // q x m

    int terminal_con_dim = 0;  // rows of hf(x,theta) <= 0
    std::function<Vec(const Vec&, const Vec&)> hf;
    std::function<Mat(const Vec&, const Vec&)> hf_x;  // qf x n

    /// Set when the compiled cost Hessian in u is independent of state,
    /// parameters and inputs (affine dynamics with quadratic costs whose
    /// curvature does not involve theta); lets solvers cache it.
    bool constant_cost_hessian = false;
};

/// Forward simulation of the input profile; returns x_0..x_N.
inline std::vector<Vec> simulate(const MpcSpec& spec, const Vec& s, const Vec& theta,
                                 const Vec& u) {
    std::vector<Vec> xs(static_cast<std::size_t>(spec.horizon) + 1);
    xs[0] = s;
    for (int k = 0; k < spec.horizon; ++k)
        xs[static_cast<std::size_t>(k) + 1] =
            spec.f(xs[static_cast<std::size_t>(k)], u.segment(k * spec.input_dim, spec.input_dim),
                   theta);
    return xs;
}

namespace mpc_detail {

inline double cost_value(const MpcSpec& spec, const Vec& theta, const std::vector<Vec>& xs,
                         const Vec& u) {
    const int m = spec.input_dim;
    double value = 0.0;
    double disc = 1.0;
    for (int k = 0; k < spec.horizon; ++k) {
        value += disc * spec.stage_cost(xs[static_cast<std::size_t>(k)], u.segment(k * m, m), theta);
        disc *= spec.gamma;
    }
    value += spec.terminal_cost(xs[static_cast<std::size_t>(spec.horizon)], theta);
    return value;
}

/// Discrete adjoint sweep for the single-shooting cost gradient.
inline Vec cost_gradient(const MpcSpec& spec, const Vec& theta, const std::vector<Vec>& xs,
                         const Vec& u) {
    const int m = spec.input_dim;
    const int N = spec.horizon;
    Vec grad(N * m);
    Vec adj = spec.terminal_cost_x(xs[static_cast<std::size_t>(N)], theta);
    for (int k = N - 1; k >= 0; --k) {
        const Vec& x = xs[static_cast<std::size_t>(k)];
        const Vec uk = u.segment(k * m, m);
        const double disc = std::pow(spec.gamma, k);
        grad.segment(k * m, m) =
            disc * spec.stage_cost_u(x, uk, theta) + spec.f_u(x, uk, theta).transpose() * adj;
        adj = disc * spec.stage_cost_x(x, uk, theta) + spec.f_x(x, uk, theta).transpose() * adj;
    }
    return grad;
}

inline Vec constraint_values(const MpcSpec& spec, const Vec& theta, const std::vector<Vec>& xs,
                             const Vec& u) {
    const int m = spec.input_dim;
    const int q = spec.stage_con_dim;
    const int qf = spec.terminal_con_dim;
    Vec h(spec.horizon * q + qf);
    for (int k = 0; k < spec.horizon; ++k)
        if (q)
            h.segment(k * q, q) =
                spec.h(xs[static_cast<std::size_t>(k)], u.segment(k * m, m), theta);
    if (qf)
        h.tail(qf) = spec.hf(xs[static_cast<std::size_t>(spec.horizon)], theta);
    return h;
}

/// Forward sensitivity sweep: block (k, j) of the Jacobian is
/// dh(x_k,u_k)/du_j = h_x * dx_k/du_j for j < k and h_u for j = k.
inline Mat constraint_jacobian(const MpcSpec& spec, const Vec& theta, const std::vector<Vec>& xs,
                               const Vec& u) {
    const int n = spec.state_dim;
    const int m = spec.input_dim;
    const int N = spec.horizon;
    const int q = spec.stage_con_dim;
    const int qf = spec.terminal_con_dim;
    Mat jac = Mat::Zero(N * q + qf, N * m);
    std::vector<Mat> dx_du(static_cast<std::size_t>(N));  // dx_k/du_j for j < k
    Mat tmp(n, m);

    for (int k = 0; k < N; ++k) {
        const Vec& x = xs[static_cast<std::size_t>(k)];
        const Vec uk = u.segment(k * m, m);
        if (q) {
            const Mat hx = spec.h_x(x, uk, theta);
            for (int j = 0; j < k; ++j)
                jac.block(k * q, j * m, q, m).noalias() = hx * dx_du[static_cast<std::size_t>(j)];
            jac.block(k * q, k * m, q, m) = spec.h_u(x, uk, theta);
        }
        const Mat fx = spec.f_x(x, uk, theta);
        for (int j = 0; j < k; ++j) {
            Mat& s = dx_du[static_cast<std::size_t>(j)];
            tmp.noalias() = fx * s;
            s.swap(tmp);
        }
        dx_du[static_cast<std::size_t>(k)] = spec.f_u(x, uk, theta);
    }
    if (qf) {
        const Mat hfx = spec.hf_x(xs[static_cast<std::size_t>(N)], theta);
        for (int j = 0; j < N; ++j)
            jac.block(N * q, j * m, qf, m).noalias() = hfx * dx_du[static_cast<std::size_t>(j)];
    }
    return jac;
}

}  // namespace mpc_detail

/// Compile the scheme into a single-shooting parametric NLP over the stacked
/// input profile; the parameter vector is (s, theta). The cost Hessian
/// callback differentiates the analytic gradient, which is exact for the
/// quadratic costs used here.
inline ParametricNlp compile(const MpcSpec& spec_in) {
    auto spec = std::make_shared<const MpcSpec>(spec_in);
    const int n = spec->state_dim;

    ParametricNlp nlp;
    nlp.n_dec = spec->horizon * spec->input_dim;
    nlp.n_con = spec->horizon * spec->stage_con_dim + spec->terminal_con_dim;
    nlp.n_par = n + spec->theta_dim;

    nlp.cost = [spec, n](const Vec& p, const Vec& u) {
        const Vec theta = p.tail(p.size() - n);
        return mpc_detail::cost_value(*spec, theta, simulate(*spec, p.head(n), theta, u), u);
    };
    nlp.cost_grad = [spec, n](const Vec& p, const Vec& u) {
        const Vec theta = p.tail(p.size() - n);
        return mpc_detail::cost_gradient(*spec, theta, simulate(*spec, p.head(n), theta, u), u);
    };
    auto grad_cb = nlp.cost_grad;
    auto fd_hess = [grad_cb](const Vec& p, const Vec& u) {
        const int nd = static_cast<int>(u.size());
        Mat hess(nd, nd);
        for (int j = 0; j < nd; ++j) {
            const double step = 1e-5 * std::max(1.0, std::abs(u(j)));
            Vec up = u, um = u;
            up(j) += step;
            um(j) -= step;
            hess.col(j) = (grad_cb(p, up) - grad_cb(p, um)) / (2.0 * step);
        }
        return Mat(0.5 * (hess + hess.transpose()));
    };
    if (spec->constant_cost_hessian) {
        auto cache = std::make_shared<detail::HessianCache>();
        nlp.cost_hess = [fd_hess, cache](const Vec& p, const Vec& u) {
            std::lock_guard<std::mutex> lock(cache->mutex);
            if (!cache->value) cache->value = fd_hess(p, u);
            return *cache->value;
        };
    } else {
        nlp.cost_hess = fd_hess;
    }
    if (nlp.n_con) {
        nlp.constraints = [spec, n](const Vec& p, const Vec& u) {
            const Vec theta = p.tail(p.size() - n);
            return mpc_detail::constraint_values(*spec, theta, simulate(*spec, p.head(n), theta, u),
                                                 u);
        };
        nlp.constraint_jac = [spec, n](const Vec& p, const Vec& u) {
            const Vec theta = p.tail(p.size() - n);
            return mpc_detail::constraint_jacobian(*spec, theta,
                                                   simulate(*spec, p.head(n), theta, u), u);
        };
    }
    return nlp;
}

/// A policy evaluation: first input, full profile and simulated trajectory,
/// realized exploration radius (zero for the nominal scheme), the parameter
/// sensitivity of the first input, and the underlying NLP solution.
struct PolicyEval {
    Vec u0;
    Vec u_profile;
    std::vector<Vec> x_traj;
    double eta = 0.0;
    Mat dpi_dtheta;  // theta_dim x m
    double objective = 0.0;
    NlpSolution solution;
};

/// Shift an input profile one stage forward, repeating the final block;
/// the usual warm start between consecutive closed-loop solves.
inline Vec shift_profile(const Vec& profile, int m) {
    Vec shifted = profile;
    const Eigen::Index tail = profile.size() - m;
    if (tail > 0) shifted.head(tail) = profile.tail(tail);
    return shifted;
}

namespace mpc_detail {

/// Central-difference fallback for the policy sensitivity when the KKT
/// system is degenerate at the solution.
template <typename Resolve>
Mat fd_policy_sensitivity(const Resolve& resolve, const Vec& theta, const Vec& base_profile,
                          int m, double step = 1e-6) {
    Mat dpi(theta.size(), m);
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double dj = step * std::max(1.0, std::abs(theta(j)));
        Vec tp = theta, tm = theta;
        tp(j) += dj;
        tm(j) -= dj;
        const Vec up = resolve(tp, base_profile);
        const Vec um = resolve(tm, base_profile);
        dpi.row(j) = ((up.head(m) - um.head(m)) / (2.0 * dj)).transpose();
    }
    return dpi;
}

}  // namespace mpc_detail

/// Nominal policy engine: compiles once, then evaluates pi_theta(s) = u0*.
class MpcPolicy {
public:
    explicit MpcPolicy(MpcSpec spec, SqpSettings settings = SqpSettings{})
        : spec_(std::make_shared<const MpcSpec>(std::move(spec))),
          nlp_(compile(*spec_)),
          settings_(settings) {}

    [[nodiscard]] const MpcSpec& spec() const { return *spec_; }
    [[nodiscard]] const ParametricNlp& nlp() const { return nlp_; }
    [[nodiscard]] const SqpSettings& settings() const { return settings_; }

    PolicyEval eval(const Vec& s, const Vec& theta, const std::optional<Vec>& warm = std::nullopt,
                    bool want_sensitivity = true) const {
        Vec params(s.size() + theta.size());
        params << s, theta;
        NlpSolution sol = solve(nlp_, params, warm, settings_);
        if (sol.status == SolveStatus::Infeasible)
            throw InfeasibleState("MPC infeasible at the requested state");
        if (sol.status == SolveStatus::MaxIter &&
            detail::max_violation(sol.constraint_values) > std::max(10.0 * settings_.feas_tol, 1e-6))
            throw SolveFailure("MPC solve did not reach a feasible point");

        const int m = spec_->input_dim;
        PolicyEval pe;
        pe.u_profile = sol.u_star;
        pe.u0 = sol.u_star.head(m);
        pe.x_traj = simulate(*spec_, s, theta, sol.u_star);
        pe.objective = sol.objective;
        pe.eta = 0.0;
        if (want_sensitivity) pe.dpi_dtheta = sensitivity(params, sol, s);
        pe.solution = std::move(sol);
        return pe;
    }

private:
    Mat sensitivity(const Vec& params, const NlpSolution& sol, const Vec& s) const {
        const int m = spec_->input_dim;
        const int td = spec_->theta_dim;
        const auto sens = kkt_sensitivity(nlp_, sol, params, settings_);
        if (sens) return sens->block(0, s.size(), m, td).transpose();
        auto resolve = [&](const Vec& th, const Vec& warm) {
            Vec p(s.size() + th.size());
            p << s, th;
            NlpSolution r = solve(nlp_, p, warm, settings_);
            if (r.status == SolveStatus::Infeasible)
                throw InfeasibleState("MPC infeasible while differencing the policy");
            return r.u_star;
        };
        return mpc_detail::fd_policy_sensitivity(resolve, params.tail(td), sol.u_star, m);
    }

    std::shared_ptr<const MpcSpec> spec_;
    ParametricNlp nlp_;
    SqpSettings settings_;
};

inline PolicyEval policy(const MpcSpec& spec, const Vec& s, const Vec& theta,
                         const std::optional<Vec>& warm = std::nullopt,
                         const SqpSettings& settings = SqpSettings{}) {
    return MpcPolicy(spec, settings).eval(s, theta, warm);
}

}  // namespace mpcgrad
