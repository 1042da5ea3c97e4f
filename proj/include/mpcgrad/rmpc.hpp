#pragma once

#include <cmath>

#include "mpcgrad/mpc.hpp"
#include "mpcgrad/trajectory_sensitivity.hpp"

namespace mpcgrad {

/// Configuration of the tightened scheme. The exploration radius enters the
/// decision vector as nu in [0, eta_bar] and is rewarded by -slack_weight*nu
/// in the objective; slack_weight must be large enough that nu saturates at
/// eta_bar on interior states (covered by a calibration test).
struct RmpcConfig {
    double eta_bar = 0.05;
    double slack_weight = 1000.0;
    double norm_smoothing = 1e-9;  // delta in sqrt(|z|^2 + delta^2) - delta
    bool tighten_terminal = true;
    /// Set when the back-off factors do not depend on u (pure input
    /// constraints); skips their finite differencing in the Jacobian.
    bool constant_backoff = false;
};

namespace rmpc_detail {

inline double smooth_norm(const Eigen::RowVectorXd& z, double delta) {
    return std::sqrt(z.squaredNorm() + delta * delta) - delta;
}

/// Per-row back-off factors at the current trajectory: the norm of the
/// first-input derivative of each constraint row, stage 0 directly through
/// h_u, later stages and the terminal through the trajectory sensitivities.
inline Vec backoff_factors(const MpcSpec& spec, const RmpcConfig& cfg, const Vec& theta,
                           const std::vector<Vec>& xs, const Vec& u) {
    const int q = spec.stage_con_dim;
    const int qf = spec.terminal_con_dim;
    const int m = spec.input_dim;
    const int N = spec.horizon;
    Vec factors = Vec::Zero(N * q + qf);
    if (q == 0 && qf == 0) return factors;

    const TrajectorySensitivities ts = propagate(spec, xs, u, theta);
    if (q) {
        const Mat hu0 = spec.h_u(xs[0], u.head(m), theta);
        for (int i = 0; i < q; ++i) factors(i) = smooth_norm(hu0.row(i), cfg.norm_smoothing);
        for (int k = 1; k < N; ++k) {
            const Mat hx = spec.h_x(xs[static_cast<std::size_t>(k)], u.segment(k * m, m), theta);
            const Mat rows = hx * ts.S[static_cast<std::size_t>(k)];
            for (int i = 0; i < q; ++i)
                factors(k * q + i) = smooth_norm(rows.row(i), cfg.norm_smoothing);
        }
    }
    if (qf && cfg.tighten_terminal) {
        const Mat rows = spec.hf_x(xs[static_cast<std::size_t>(N)], theta) * ts.S[static_cast<std::size_t>(N)];
        for (int i = 0; i < qf; ++i)
            factors(N * q + i) = smooth_norm(rows.row(i), cfg.norm_smoothing);
    }
    return factors;
}

}  // namespace rmpc_detail

/// Compile the tightened scheme into a parametric NLP over z = (u, nu):
///     min  -w nu + V(x_N) + sum gamma^k l(x_k,u_k)
///     s.t. h_i(x_k,u_k) + |d h_i/d u_0| nu <= 0   (first order, per row)
///          hf_i(x_N)   + |d hf_i/d u_0| nu <= 0
///          0 <= nu <= eta_bar,
/// with the back-off factors recomputed from the current trajectory at every
/// evaluation. With nu = 0 the feasible set coincides with the nominal one.
inline ParametricNlp compile_robust(const MpcSpec& spec_in, const RmpcConfig& cfg) {
    auto spec = std::make_shared<const MpcSpec>(spec_in);
    const int n = spec->state_dim;
    const int m = spec->input_dim;
    const int N = spec->horizon;
    const int n_u = N * m;
    const int n_nom = N * spec->stage_con_dim + spec->terminal_con_dim;

    ParametricNlp nlp;
    nlp.n_dec = n_u + 1;
    nlp.n_con = n_nom + 2;
    nlp.n_par = n + spec->theta_dim;

    nlp.cost = [spec, cfg, n, n_u](const Vec& p, const Vec& z) {
        const Vec theta = p.tail(p.size() - n);
        const Vec u = z.head(n_u);
        return mpc_detail::cost_value(*spec, theta, simulate(*spec, p.head(n), theta, u), u) -
               cfg.slack_weight * z(n_u);
    };
    nlp.cost_grad = [spec, cfg, n, n_u](const Vec& p, const Vec& z) {
        const Vec theta = p.tail(p.size() - n);
        const Vec u = z.head(n_u);
        Vec g(n_u + 1);
        g.head(n_u) =
            mpc_detail::cost_gradient(*spec, theta, simulate(*spec, p.head(n), theta, u), u);
        g(n_u) = -cfg.slack_weight;
        return g;
    };
    auto grad_cb = nlp.cost_grad;
    auto fd_hess = [grad_cb, n_u](const Vec& p, const Vec& z) {
        Mat hess = Mat::Zero(n_u + 1, n_u + 1);
        for (int j = 0; j < n_u; ++j) {
            const double step = 1e-5 * std::max(1.0, std::abs(z(j)));
            Vec zp = z, zm = z;
            zp(j) += step;
            zm(j) -= step;
            hess.col(j) = (grad_cb(p, zp) - grad_cb(p, zm)) / (2.0 * step);
        }
        hess = 0.5 * (hess + hess.transpose()).eval();
        // The objective is linear in nu; give the quasi-Newton seed a
        // unit-scale curvature there to keep the subproblems well posed.
        hess(n_u, n_u) = std::max(1.0, hess.diagonal().head(n_u).cwiseAbs().mean());
        return hess;
    };
    if (spec->constant_cost_hessian) {
        auto cache = std::make_shared<detail::HessianCache>();
        nlp.cost_hess = [fd_hess, cache](const Vec& p, const Vec& z) {
            std::lock_guard<std::mutex> lock(cache->mutex);
            if (!cache->value) cache->value = fd_hess(p, z);
            return *cache->value;
        };
    } else {
        nlp.cost_hess = fd_hess;
    }

    nlp.constraints = [spec, cfg, n, n_u, n_nom](const Vec& p, const Vec& z) {
        const Vec theta = p.tail(p.size() - n);
        const Vec u = z.head(n_u);
        const double nu = z(n_u);
        const auto xs = simulate(*spec, p.head(n), theta, u);
        Vec h(n_nom + 2);
        if (n_nom) {
            h.head(n_nom) = mpc_detail::constraint_values(*spec, theta, xs, u) +
                            nu * rmpc_detail::backoff_factors(*spec, cfg, theta, xs, u);
        }
        h(n_nom) = -nu;
        h(n_nom + 1) = nu - cfg.eta_bar;
        return h;
    };
    nlp.constraint_jac = [spec, cfg, n, n_u, n_nom](const Vec& p, const Vec& z) {
        const Vec theta = p.tail(p.size() - n);
        const Vec u = z.head(n_u);
        const double nu = z(n_u);
        Mat jac = Mat::Zero(n_nom + 2, n_u + 1);
        if (n_nom) {
            const auto xs = simulate(*spec, p.head(n), theta, u);
            jac.topLeftCorner(n_nom, n_u) =
                mpc_detail::constraint_jacobian(*spec, theta, xs, u);
            jac.block(0, n_u, n_nom, 1) = rmpc_detail::backoff_factors(*spec, cfg, theta, xs, u);
            if (!cfg.constant_backoff && std::abs(nu) > 1e-14) {
                for (int j = 0; j < n_u; ++j) {
                    const double step = 1e-6 * std::max(1.0, std::abs(u(j)));
                    Vec up = u, um = u;
                    up(j) += step;
                    um(j) -= step;
                    const Vec gp = rmpc_detail::backoff_factors(
                        *spec, cfg, theta, simulate(*spec, p.head(n), theta, up), up);
                    const Vec gm = rmpc_detail::backoff_factors(
                        *spec, cfg, theta, simulate(*spec, p.head(n), theta, um), um);
                    jac.block(0, j, n_nom, 1) += nu * (gp - gm) / (2.0 * step);
                }
            }
        }
        jac(n_nom, n_u) = -1.0;
        jac(n_nom + 1, n_u) = 1.0;
        return jac;
    };
    return nlp;
}

/// Tightened-scheme policy engine; the first element of the solved profile is
/// the robust policy and the solved nu is the realized exploration radius.
class RobustPolicy {
public:
    RobustPolicy(MpcSpec spec, RmpcConfig cfg, SqpSettings settings = SqpSettings{})
        : spec_(std::make_shared<const MpcSpec>(std::move(spec))),
          cfg_(cfg),
          nlp_(compile_robust(*spec_, cfg)),
          settings_(settings) {}

    [[nodiscard]] const MpcSpec& spec() const { return *spec_; }
    [[nodiscard]] const RmpcConfig& config() const { return cfg_; }
    [[nodiscard]] const ParametricNlp& nlp() const { return nlp_; }

    /// warm, when given, is a full decision vector (u profile with nu appended).
    PolicyEval eval(const Vec& s, const Vec& theta, const std::optional<Vec>& warm = std::nullopt,
                    bool want_sensitivity = true) const {
        Vec params(s.size() + theta.size());
        params << s, theta;
        NlpSolution sol = solve(nlp_, params, warm, settings_);
        if (sol.status == SolveStatus::Infeasible)
            throw InfeasibleState("tightened scheme infeasible: nominal problem has no solution");
        if (sol.status == SolveStatus::MaxIter &&
            detail::max_violation(sol.constraint_values) > std::max(10.0 * settings_.feas_tol, 1e-6))
            throw SolveFailure("tightened solve did not reach a feasible point");

        const int m = spec_->input_dim;
        const int n_u = spec_->horizon * m;
        PolicyEval pe;
        pe.u_profile = sol.u_star.head(n_u);
        pe.u0 = sol.u_star.head(m);
        pe.x_traj = simulate(*spec_, s, theta, pe.u_profile);
        pe.eta = certified_radius(params.tail(spec_->theta_dim), pe.x_traj, pe.u_profile);
        pe.objective = mpc_detail::cost_value(*spec_, params.tail(spec_->theta_dim), pe.x_traj,
                                              pe.u_profile);
        if (want_sensitivity) pe.dpi_dtheta = sensitivity(params, sol, s);
        pe.solution = std::move(sol);
        return pe;
    }

    /// Decision vector for warm starting from a nominal profile.
    [[nodiscard]] Vec warm_from_profile(const Vec& u_profile, double nu = 0.0) const {
        Vec z(u_profile.size() + 1);
        z << u_profile, nu;
        return z;
    }

private:
    /// Exact inner maximization of the radius over the tightened rows at the
    /// returned plan. The NLP's nu coordinate can ride the feasibility
    /// tolerance at degenerate pins; this reports precisely the radius the
    /// first-order margins of the plan certify.
    double certified_radius(const Vec& theta, const std::vector<Vec>& xs, const Vec& u) const {
        double nu = cfg_.eta_bar;
        const int n_nom = spec_->horizon * spec_->stage_con_dim + spec_->terminal_con_dim;
        if (n_nom == 0) return nu;
        const Vec h = mpc_detail::constraint_values(*spec_, theta, xs, u);
        const Vec factors = rmpc_detail::backoff_factors(*spec_, cfg_, theta, xs, u);
        for (int i = 0; i < n_nom; ++i) {
            if (factors(i) > 1e-14)
                nu = std::min(nu, -h(i) / factors(i));
            else if (h(i) > settings_.feas_tol)
                nu = 0.0;  // row violated and insensitive to the radius
        }
        return std::clamp(nu, 0.0, cfg_.eta_bar);
    }

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
                throw InfeasibleState("tightened scheme infeasible while differencing");
            return r.u_star;
        };
        return mpc_detail::fd_policy_sensitivity(resolve, params.tail(td), sol.u_star, m);
    }

    std::shared_ptr<const MpcSpec> spec_;
    RmpcConfig cfg_;
    ParametricNlp nlp_;
    SqpSettings settings_;
};

inline PolicyEval robust_policy(const MpcSpec& spec, const RmpcConfig& cfg, const Vec& s,
                                const Vec& theta,
                                const std::optional<Vec>& warm = std::nullopt,
                                const SqpSettings& settings = SqpSettings{}) {
    return RobustPolicy(spec, cfg, settings).eval(s, theta, warm);
}

}  // namespace mpcgrad
