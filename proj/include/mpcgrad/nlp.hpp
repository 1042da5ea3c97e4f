#pragma once
#include <cstdio>
#include <mutex>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <functional>
#include <optional>
#include <vector>

#include "mpcgrad/qp.hpp"
#include "mpcgrad/types.hpp"

namespace mpcgrad {

/// A dense inequality-constrained program
///     min_u  cost(params, u)   s.t.   constraints(params, u) <= 0
/// parametrized by a vector `params` (for MPC problems the concatenation of
/// the current state and the policy parameters). All evaluators must be
/// deterministic functions of (params, u) and callable from any thread.
struct ParametricNlp {
    int n_dec = 0;
    int n_con = 0;
    int n_par = 0;
    std::function<double(const Vec&, const Vec&)> cost;
    std::function<Vec(const Vec&, const Vec&)> cost_grad;
    /// Optional Hessian approximation of the cost; used to seed the quasi-Newton
    /// matrix. May be empty.
    std::function<Mat(const Vec&, const Vec&)> cost_hess;
    std::function<Vec(const Vec&, const Vec&)> constraints;
    /// Row i is the gradient of constraint i with respect to u.
    std::function<Mat(const Vec&, const Vec&)> constraint_jac;
};

enum class SolveStatus { Converged, MaxIter, Infeasible };

struct SqpSettings {
    double kkt_tol = 1e-8;
    double feas_tol = 1e-8;
    double act_tol = 1e-6;     // |H_i| below this counts as active
    double strict_tol = 1e-8;  // multiplier threshold for strict complementarity
    int max_iter = 200;
    double merit_penalty0 = 10.0;
    double elastic_penalty0 = 1e4;
    double elastic_penalty_max = 1e12;
    int line_search_max = 45;
    double armijo = 1e-4;
    double backtrack = 0.5;
    int verbosity = 0;  // 1: iteration summary on stderr
};

struct NlpSolution {
    Vec u_star;
    Vec lambda_star;                 // one multiplier per inequality
    std::vector<bool> active_set;    // |H_i| <= act_tol
    double kkt_residual = std::numeric_limits<double>::infinity();
    SolveStatus status = SolveStatus::MaxIter;
    double objective = 0.0;
    Vec constraint_values;
    int iterations = 0;
};

namespace detail {

struct HessianCache {
    std::mutex mutex;
    std::optional<Mat> value;
};

inline double max_violation(const Vec& h) {
    return h.size() ? std::max(0.0, h.maxCoeff()) : 0.0;
}

inline double sum_violation(const Vec& h) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < h.size(); ++i) s += std::max(0.0, h(i));
    return s;
}

/// Infinity norm over stationarity, primal feasibility, dual feasibility and
/// complementarity violations.
inline double kkt_residual(const Vec& grad, const Vec& h, const Mat& jac, const Vec& lam) {
    if (!lam.allFinite() || !grad.allFinite()) return std::numeric_limits<double>::infinity();
    double r = 0.0;
    Vec stat = grad;
    if (h.size()) stat += jac.transpose() * lam;
    if (!stat.allFinite()) return std::numeric_limits<double>::infinity();
    r = std::max(r, stat.size() ? stat.lpNorm<Eigen::Infinity>() : 0.0);
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        r = std::max(r, std::max(0.0, h(i)));
        r = std::max(r, std::max(0.0, -lam(i)));
        r = std::max(r, std::abs(lam(i) * h(i)));
    }
    return r;
}

/// Symmetrize and shift a Hessian candidate until it admits a Cholesky factor.
inline Mat regularize_spd(Mat m) {
    m = 0.5 * (m + m.transpose()).eval();
    const int n = static_cast<int>(m.rows());
    double scale = std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
    Mat shifted = m + 1e-8 * scale * Mat::Identity(n, n);
    Eigen::LLT<Mat> llt(shifted);
    if (llt.info() == Eigen::Success) return shifted;
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    Vec ev = es.eigenvalues();
    const double floor_ev = 1e-8 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (int i = 0; i < n; ++i) ev(i) = std::max(ev(i), floor_ev);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Least-squares multiplier estimate on the near-active set with a
/// nonnegativity active-set loop. Cleans up the multiplier split the elastic
/// QP produces on degenerate (dependent) constraint blocks.
inline Vec refine_multipliers(const Vec& grad, const Vec& h, const Mat& jac, double act_tol) {
    const int mc = static_cast<int>(h.size());
    Vec lam = Vec::Zero(mc);
    std::vector<int> support;
    for (int i = 0; i < mc; ++i)
        if (h(i) >= -act_tol) support.push_back(i);
    while (!support.empty()) {
        const int k = static_cast<int>(support.size());
        Mat at(grad.size(), k);
        for (int j = 0; j < k; ++j) at.col(j) = jac.row(support[static_cast<std::size_t>(j)]).transpose();
        const Vec sol = at.colPivHouseholderQr().solve(-grad);
        if (!sol.allFinite()) break;
        int worst = -1;
        double most_negative = -1e-12;
        for (int j = 0; j < k; ++j) {
            if (sol(j) < most_negative) {
                most_negative = sol(j);
                worst = j;
            }
        }
        if (worst < 0) {
            for (int j = 0; j < k; ++j) lam(support[static_cast<std::size_t>(j)]) = std::max(0.0, sol(j));
            break;
        }
        support.erase(support.begin() + worst);
    }
    return lam;
}

/// Powell-damped BFGS update keeping B positive definite.
inline void damped_bfgs_update(Mat& B, const Vec& s, Vec y) {
    const double sBs = s.dot(B * s);
    if (!(sBs > 1e-16) || s.lpNorm<Eigen::Infinity>() < 1e-14) return;
    const double sy = s.dot(y);
    if (sy < 0.2 * sBs) {
        const double theta = 0.8 * sBs / (sBs - sy);
        y = theta * y + (1.0 - theta) * (B * s);
    }
    const double sy_d = s.dot(y);
    if (sy_d <= 1e-16) return;
    const Vec Bs = B * s;
    B -= (Bs * Bs.transpose()) / sBs;
    B += (y * y.transpose()) / sy_d;
}

}  // namespace detail

/// SQP with a damped-BFGS Lagrangian Hessian, an l1 merit line search and a
/// dense primal active-set QP subproblem. The subproblem carries one elastic
/// slack on the constraint block so it stays feasible when the linearization
/// is not; the slack penalty is escalated until the slack vanishes, which
/// doubles as the feasibility-restoration phase.
inline NlpSolution solve(const ParametricNlp& nlp, const Vec& params,
                         const std::optional<Vec>& warm_start = std::nullopt,
                         const SqpSettings& st = SqpSettings{}) {
    const int n = nlp.n_dec;
    const int mc = nlp.n_con;

    Vec u = warm_start ? *warm_start : Vec::Zero(n);
    Mat B = nlp.cost_hess ? detail::regularize_spd(nlp.cost_hess(params, u))
                          : Mat::Identity(n, n);

    double merit_mu = st.merit_penalty0;
    double elastic_rho = st.elastic_penalty0;

    NlpSolution out;
    out.u_star = u;
    out.lambda_star = Vec::Zero(mc);

    double best_viol = std::numeric_limits<double>::infinity();
    int no_progress = 0;
    int ls_failures = 0;
    int tiny_steps = 0;
    std::vector<int> qp_warm_set;
    bool have_qp_warm = false;

    auto eval_cons = [&](const Vec& uu) { return mc ? nlp.constraints(params, uu) : Vec(); };

    // Current-point evaluations, reused across iterations (the accepted-step
    // bookkeeping below refreshes them).
    double f = nlp.cost(params, u);
    Vec grad = nlp.cost_grad(params, u);
    Vec h = eval_cons(u);
    Mat jac = mc ? nlp.constraint_jac(params, u) : Mat(0, n);

    // Gauss-Newton descent of the squared violation until feasible or stalled.
    auto viol_sq = [](const Vec& hh) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < hh.size(); ++i) {
            const double v = std::max(0.0, hh(i));
            s += v * v;
        }
        return s;
    };
    auto restore_feasibility = [&]() {
        for (int inner = 0; inner < 40; ++inner) {
            if (detail::max_violation(h) <= st.feas_tol) break;
            const double sq_now = viol_sq(h);
            std::vector<int> act;
            for (int i = 0; i < mc; ++i)
                if (h(i) > 0.0) act.push_back(i);
            const int na = static_cast<int>(act.size());
            Mat a_act(na, n);
            Vec h_act(na);
            for (int j = 0; j < na; ++j) {
                a_act.row(j) = jac.row(act[static_cast<std::size_t>(j)]);
                h_act(j) = h(act[static_cast<std::size_t>(j)]);
            }
            const Mat gram = a_act * a_act.transpose() + 1e-12 * Mat::Identity(na, na);
            const Vec d_rest = -a_act.transpose() * gram.ldlt().solve(h_act);
            if (!d_rest.allFinite() || d_rest.lpNorm<Eigen::Infinity>() <= 1e-15) break;
            double alpha = 1.0;
            bool moved = false;
            for (int ls = 0; ls <= 40; ++ls) {
                const Vec u_try = u + alpha * d_rest;
                const Vec h_try = eval_cons(u_try);
                if (viol_sq(h_try) <= sq_now * (1.0 - 1e-4 * alpha)) {
                    u = u_try;
                    h = h_try;
                    jac = nlp.constraint_jac(params, u);
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!moved) break;
        }
        f = nlp.cost(params, u);
        grad = nlp.cost_grad(params, u);
    };

    double best_kkt = std::numeric_limits<double>::infinity();
    int kkt_stall = 0;

    for (int it = 1; it <= st.max_iter; ++it) {
        out.iterations = it;
        const double viol = detail::max_violation(h);

        // Pure feasibility restoration once the penalty escalates or the
        // merit path drags on.
        if (mc && viol > st.feas_tol && (merit_mu >= 1e7 || it >= 40)) {
            restore_feasibility();
            continue;
        }

        // Elastic QP over z = (d, t):  min g'd + 1/2 d'Bd + rho*t + 1/2 sigma t^2
        //   s.t. A d - t <= -h,  -t <= 0.
        Vec d = Vec::Zero(n);
        Vec lam = Vec::Zero(mc);
        double t_solved = 0.0;
        bool qp_ok = true;
        bool linearization_infeasible = false;
        {
            Mat Gq = Mat::Zero(n + 1, n + 1);
            Gq.topLeftCorner(n, n) = B;
            Gq(n, n) = std::max(1.0, B.trace() / n);  // keep the QP well conditioned
            Vec gq(n + 1);
            gq.head(n) = grad;
            Mat Cq(mc + 1, n + 1);
            Vec bq(mc + 1);
            if (mc) {
                Cq.topLeftCorner(mc, n) = jac;
                Cq.topRightCorner(mc, 1).setConstant(-1.0);
                bq.head(mc) = -h;
            }
            Cq.row(mc).setZero();
            Cq(mc, n) = -1.0;
            bq(mc) = 0.0;
            Vec z0 = Vec::Zero(n + 1);
            z0(n) = viol;

            // Seed the active-set walk with the rows that are nearly active
            // at the current iterate; stale sets from other iterates produce
            // wild pull-on steps.
            qp_warm_set.clear();
            have_qp_warm = false;
            if (mc) {
                const double band = 1e-5 * (1.0 + h.lpNorm<Eigen::Infinity>());
                for (int i = 0; i < mc; ++i)
                    if (h(i) >= -band) qp_warm_set.push_back(i);
                if (viol <= st.feas_tol) qp_warm_set.push_back(mc);  // slack at its bound
                have_qp_warm = !qp_warm_set.empty();
            }

            for (int round = 0; round < 6; ++round) {
                gq(n) = elastic_rho;
                QpResult qr = solve_qp(Gq, gq, Cq, bq, z0, 0,
                                       have_qp_warm ? &qp_warm_set : nullptr);
                if (qr.status == QpStatus::NumericalFailure) {
                    qp_ok = false;
                    break;
                }
                d = qr.x.head(n);
                t_solved = qr.x(n);
                lam = qr.lambda.head(mc);
                if (t_solved <= std::max(st.feas_tol, 1e-12 * (1.0 + viol))) break;
                if (elastic_rho >= st.elastic_penalty_max) {
                    linearization_infeasible = true;
                    break;
                }
                elastic_rho = std::min(elastic_rho * 10.0, st.elastic_penalty_max);
            }
        }
        if (st.verbosity >= 1)
            std::fprintf(stderr,
                         "sqp it %3d f=% .6e viol=%.3e |d|=%.3e t=%.2e rho=%.1e mu=%.1e qp_ok=%d\n",
                         it, f, viol, d.lpNorm<Eigen::Infinity>(), t_solved, elastic_rho, merit_mu,
                         static_cast<int>(qp_ok));
        if (!qp_ok) break;
        double kkt = detail::kkt_residual(grad, h, jac, lam);
        if (mc && viol <= st.feas_tol && kkt > st.kkt_tol) {
            // The elastic QP can smear the penalty weight over degenerate
            // constraint blocks; prefer the least-squares estimate when it
            // certifies a smaller residual.
            const Vec lam_ref = detail::refine_multipliers(grad, h, jac, st.act_tol);
            const double kkt_ref = detail::kkt_residual(grad, h, jac, lam_ref);
            if (kkt_ref < kkt) {
                lam = lam_ref;
                kkt = kkt_ref;
            }
        }
        out.lambda_star = lam;
        if (kkt <= st.kkt_tol && viol <= st.feas_tol) {
            out.u_star = u;
            out.lambda_star = lam;
            out.kkt_residual = kkt;
            out.status = SolveStatus::Converged;
            out.objective = f;
            out.constraint_values = h;
            out.active_set.assign(static_cast<std::size_t>(mc), false);
            for (int i = 0; i < mc; ++i)
                out.active_set[static_cast<std::size_t>(i)] = std::abs(h(i)) <= st.act_tol;
            return out;
        }

        // A degenerate pin has no multiplier certificate: the residual stalls
        // above tolerance at a feasible point. Stop once it stops improving.
        if (viol <= st.feas_tol) {
            if (kkt < 0.99 * best_kkt) {
                best_kkt = kkt;
                kkt_stall = 0;
            } else if (++kkt_stall >= 12) {
                break;
            }
        }

        // Declare infeasibility only when the restoration step itself cannot
        // reduce the linearized violation, the iterates make no headway, and
        // the violation is substantial (degenerate pins stall with tiny
        // violations that the exit restoration cleans up).
        if (linearization_infeasible && viol > 1e3 * st.feas_tol) {
            if (viol < best_viol - 1e-14) {
                best_viol = viol;
                no_progress = 0;
            } else if (++no_progress >= 10) {
                out.status = SolveStatus::Infeasible;
                break;
            }
        } else {
            best_viol = std::min(best_viol, viol);
            no_progress = 0;
        }

        const double dnorm = d.lpNorm<Eigen::Infinity>();
        if (dnorm <= 1e-15 * (1.0 + u.lpNorm<Eigen::Infinity>())) {
            if (viol > st.feas_tol && elastic_rho >= st.elastic_penalty_max) {
                out.status = SolveStatus::Infeasible;
                break;
            }
            // Stationary for the merit but not KKT-accurate: sharpen penalties.
            merit_mu *= 10.0;
            if (++ls_failures > 8) break;
            continue;
        }

        if (mc) {
            const double lam_inf = lam.size() ? lam.lpNorm<Eigen::Infinity>() : 0.0;
            merit_mu = std::max(merit_mu, 2.0 * lam_inf + 1.0);
        }
        const double phi0 = f + merit_mu * detail::sum_violation(h);
        double descent = grad.dot(d) - merit_mu * detail::sum_violation(h);
        if (descent > -1e-16) descent = -d.squaredNorm();

        double alpha = 1.0;
        bool accepted = false;
        Vec soc = Vec::Zero(n);
        double f_accepted = f;
        Vec h_accepted;
        for (int ls = 0; ls <= st.line_search_max; ++ls) {
            const Vec u_try = u + alpha * (d + soc);
            const double f_try = nlp.cost(params, u_try);
            Vec h_try = eval_cons(u_try);
            const double phi_try = f_try + merit_mu * detail::sum_violation(h_try);
            if (phi_try <= phi0 + st.armijo * alpha * descent) {
                accepted = true;
                f_accepted = f_try;
                h_accepted = std::move(h_try);
                break;
            }
            if (ls == 0 && mc) {
                // Second-order correction: pull the full step back onto the
                // constraint manifold before backtracking (Maratos remedy).
                const Vec c_full = eval_cons(u + d);
                std::vector<int> act;
                for (int i = 0; i < mc; ++i)
                    if (c_full(i) > 0.0) act.push_back(i);
                if (!act.empty()) {
                    const int na = static_cast<int>(act.size());
                    Mat a_act(na, n);
                    Vec c_act(na);
                    for (int j = 0; j < na; ++j) {
                        a_act.row(j) = jac.row(act[static_cast<std::size_t>(j)]);
                        c_act(j) = c_full(act[static_cast<std::size_t>(j)]);
                    }
                    const Mat gram =
                        a_act * a_act.transpose() + 1e-12 * Mat::Identity(na, na);
                    const Vec p = -a_act.transpose() * gram.ldlt().solve(c_act);
                    if (p.allFinite()) {
                        const Vec u_soc = u + d + p;
                        const double f_soc = nlp.cost(params, u_soc);
                        Vec h_soc = eval_cons(u_soc);
                        const double phi_soc = f_soc + merit_mu * detail::sum_violation(h_soc);
                        if (phi_soc <= phi0 + st.armijo * descent) {
                            soc = p;
                            accepted = true;
                            f_accepted = f_soc;
                            h_accepted = std::move(h_soc);
                            break;
                        }
                    }
                }
            }
            alpha *= st.backtrack;
        }
        const Vec step_vec = alpha * (d + soc);
        if (accepted && step_vec.lpNorm<Eigen::Infinity>() <=
                            1e-14 * (1.0 + u.lpNorm<Eigen::Infinity>()))
            accepted = false;  // step below roundoff makes no progress
        if (!accepted) {
            merit_mu *= 10.0;
            if (++ls_failures > 8) break;
            continue;
        }
        ls_failures = 0;

        // Degenerate pins without a multiplier certificate converge along the
        // penalty path; push the penalty when steps stay tiny.
        if (step_vec.lpNorm<Eigen::Infinity>() <= 1e-4 * (1.0 + u.lpNorm<Eigen::Infinity>())) {
            if (++tiny_steps >= 5) {
                merit_mu = std::min(merit_mu * 10.0, 1e14);
                tiny_steps = 0;
            }
        } else {
            tiny_steps = 0;
        }

        const Vec grad_l_old = mc ? Vec(grad + jac.transpose() * lam) : grad;
        const Vec u_new = u + step_vec;
        Vec grad_new = nlp.cost_grad(params, u_new);
        Mat jac_new = mc ? nlp.constraint_jac(params, u_new) : Mat(0, n);
        const Vec grad_l_new = mc ? Vec(grad_new + jac_new.transpose() * lam) : grad_new;
        detail::damped_bfgs_update(B, u_new - u, grad_l_new - grad_l_old);
        u = u_new;
        f = f_accepted;
        grad = std::move(grad_new);
        h = mc ? std::move(h_accepted) : Vec();
        jac = std::move(jac_new);
    }

    // Not converged: leave the iterate as feasible as the geometry permits
    // and report it honestly.
    h = eval_cons(u);
    jac = mc ? nlp.constraint_jac(params, u) : Mat(0, n);
    if (mc && detail::max_violation(h) > st.feas_tol &&
        out.status != SolveStatus::Infeasible)
        restore_feasibility();
    out.u_star = u;
    if (out.lambda_star.size() != mc) out.lambda_star = Vec::Zero(mc);
    out.kkt_residual = detail::kkt_residual(nlp.cost_grad(params, u), h, jac, out.lambda_star);
    out.objective = nlp.cost(params, u);
    out.constraint_values = h;
    out.active_set.assign(static_cast<std::size_t>(mc), false);
    for (int i = 0; i < mc; ++i)
        out.active_set[static_cast<std::size_t>(i)] = std::abs(h(i)) <= st.act_tol;
    if (out.status != SolveStatus::Infeasible)
        out.status = detail::max_violation(h) > 1e3 * st.feas_tol ? SolveStatus::Infeasible
                                                                  : SolveStatus::MaxIter;
    return out;
}

}  // namespace mpcgrad
