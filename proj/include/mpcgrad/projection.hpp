#pragma once

#include "mpcgrad/rmpc.hpp"

namespace mpcgrad {

/// Outcome of projecting a proposed first input onto the feasible set of the
/// nominal scheme.
struct ProjectionResult {
    Vec a_perp;    // nearest feasible first input
    Vec epsilon;   // a_perp - a, the projection correction
    Vec e_perp;    // a_perp - pi_ref (equals epsilon when no reference given)
    bool active = false;  // correction exceeded tolerance
    NlpSolution solution;
};

/// Nearest-feasible-first-input solver: minimizes 1/2 |u0 - a|^2 over the
/// nominal constraints at (s, theta). The cost is flat in the tail inputs, so
/// a tiny regularization makes the solution unique without moving u0 beyond
/// rounding.
class Projector {
public:
    explicit Projector(MpcSpec spec, SqpSettings settings = SqpSettings{},
                       double tail_regularization = 1e-10)
        : spec_(std::make_shared<const MpcSpec>(std::move(spec))),
          settings_(settings),
          reg_(tail_regularization) {
        build();
    }

    [[nodiscard]] const MpcSpec& spec() const { return *spec_; }

    /// Classification threshold for "no correction needed".
    static constexpr double kActiveTol = 1e-7;

    /// `warm`, when given, is a full input profile; its tail seeds the search
    /// and, when the profile with u0 = a is already feasible, certifies a = a_perp
    /// without a solve. `pi_ref` is the policy value the exploration is
    /// measured against (defaults to a itself).
    ProjectionResult project(const Vec& s, const Vec& theta, const Vec& a,
                             const std::optional<Vec>& warm = std::nullopt,
                             const std::optional<Vec>& pi_ref = std::nullopt) const {
        const int m = spec_->input_dim;
        Vec params(s.size() + theta.size() + m);
        params << s, theta, a;

        if (warm && warm->size() == nlp_.n_dec) {
            Vec candidate = *warm;
            candidate.head(m) = a;
            const Vec h = nlp_.n_con ? nlp_.constraints(params, candidate) : Vec();
            if (detail::max_violation(h) <= settings_.feas_tol)
                return assemble(shortcut_solution(params, candidate, h), a, pi_ref);
        }

        Vec init = Vec::Zero(nlp_.n_dec);
        if (warm && warm->size() == nlp_.n_dec) init = *warm;
        init.head(m) = a;
        NlpSolution sol = solve(nlp_, params, init, settings_);
        if (sol.status == SolveStatus::Infeasible)
            throw InfeasibleState("projection infeasible: state admits no feasible profile");
        if (sol.status == SolveStatus::MaxIter &&
            detail::max_violation(sol.constraint_values) > std::max(10.0 * settings_.feas_tol, 1e-6))
            throw SolveFailure("projection solve did not reach a feasible point");
        return assemble(std::move(sol), a, pi_ref);
    }

private:
    void build() {
        const auto spec = spec_;
        const int n = spec->state_dim;
        const int m = spec->input_dim;
        const int td = spec->theta_dim;
        const int n_u = spec->horizon * m;
        const double reg = reg_;

        nlp_.n_dec = n_u;
        nlp_.n_con = spec->horizon * spec->stage_con_dim + spec->terminal_con_dim;
        nlp_.n_par = n + td + m;

        nlp_.cost = [n, td, m, reg](const Vec& p, const Vec& u) {
            const Vec a = p.tail(m);
            const double head = 0.5 * (u.head(m) - a).squaredNorm();
            return head + reg * u.tail(u.size() - m).squaredNorm();
        };
        nlp_.cost_grad = [n, td, m, reg](const Vec& p, const Vec& u) {
            Vec g(u.size());
            g.head(m) = u.head(m) - p.tail(m);
            g.tail(u.size() - m) = 2.0 * reg * u.tail(u.size() - m);
            return g;
        };
        nlp_.cost_hess = [m, reg](const Vec&, const Vec& u) {
            Vec d = Vec::Constant(u.size(), 2.0 * reg);
            d.head(m).setOnes();
            return Mat(d.asDiagonal());
        };
        if (nlp_.n_con) {
            nlp_.constraints = [spec, n, td](const Vec& p, const Vec& u) {
                const Vec theta = p.segment(n, td);
                return mpc_detail::constraint_values(*spec, theta,
                                                     simulate(*spec, p.head(n), theta, u), u);
            };
            nlp_.constraint_jac = [spec, n, td](const Vec& p, const Vec& u) {
                const Vec theta = p.segment(n, td);
                return mpc_detail::constraint_jacobian(*spec, theta,
                                                       simulate(*spec, p.head(n), theta, u), u);
            };
        }
    }

    NlpSolution shortcut_solution(const Vec& params, Vec candidate, const Vec& h) const {
        NlpSolution sol;
        sol.u_star = std::move(candidate);
        sol.lambda_star = Vec::Zero(nlp_.n_con);
        sol.constraint_values = h;
        sol.objective = nlp_.cost(params, sol.u_star);
        const Mat jac = nlp_.n_con ? nlp_.constraint_jac(params, sol.u_star) : Mat(0, nlp_.n_dec);
        sol.kkt_residual =
            detail::kkt_residual(nlp_.cost_grad(params, sol.u_star), h, jac, sol.lambda_star);
        sol.status = sol.kkt_residual <= settings_.kkt_tol ? SolveStatus::Converged
                                                           : SolveStatus::MaxIter;
        sol.iterations = 0;
        sol.active_set.assign(static_cast<std::size_t>(nlp_.n_con), false);
        for (int i = 0; i < nlp_.n_con; ++i)
            sol.active_set[static_cast<std::size_t>(i)] = std::abs(h(i)) <= settings_.act_tol;
        return sol;
    }

    ProjectionResult assemble(NlpSolution sol, const Vec& a,
                              const std::optional<Vec>& pi_ref) const {
        const int m = spec_->input_dim;
        ProjectionResult out;
        out.a_perp = sol.u_star.head(m);
        out.epsilon = out.a_perp - a;
        out.e_perp = out.a_perp - (pi_ref ? *pi_ref : a);
        out.active = out.epsilon.norm() > kActiveTol;
        out.solution = std::move(sol);
        return out;
    }

    std::shared_ptr<const MpcSpec> spec_;
    ParametricNlp nlp_;
    SqpSettings settings_;
    double reg_;
};

/// Projection of the explored action a = pi_hat(s) + e_hat, reusing an
/// already-solved policy evaluation: the robust tail both warm-starts and
/// certifies feasible draws.
inline ProjectionResult explore_and_project(const Projector& projector, const PolicyEval& pe,
                                            const Vec& s, const Vec& theta, const Vec& e_hat) {
    const Vec a = pe.u0 + e_hat;
    return projector.project(s, theta, a, pe.u_profile, pe.u0);
}

/// Convenience form building the engines per call.
inline ProjectionResult explore_and_project(const MpcSpec& spec, const RmpcConfig& cfg,
                                            const Vec& s, const Vec& theta, const Vec& e_hat,
                                            const SqpSettings& settings = SqpSettings{}) {
    const RobustPolicy robust(spec, cfg, settings);
    const Projector projector(spec, settings);
    const PolicyEval pe = robust.eval(s, theta, std::nullopt, false);
    return explore_and_project(projector, pe, s, theta, e_hat);
}

}  // namespace mpcgrad
