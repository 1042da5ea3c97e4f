#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mpcgrad/kkt_sensitivity.hpp"
#include "mpcgrad/nlp.hpp"

namespace mpcgrad {

/// One closed-form benchmark problem for the SQP solver.
struct CorpusProblem {
    std::string name;
    ParametricNlp nlp;
    Vec params;
    Vec u_expected;
    bool expect_degenerate = false;  // LICQ / strict complementarity failure intended
};

struct CorpusReport {
    std::string name;
    SolveStatus status = SolveStatus::MaxIter;
    int iterations = 0;
    double kkt_residual = 0.0;
    double primal_error = 0.0;
    double sensitivity_error = 0.0;  // vs central differences of the solve, scale-relative
    bool degenerate = false;         // kkt_sensitivity declined
    bool expect_degenerate = false;
};

namespace corpus_detail {

inline ParametricNlp make_nlp(int n_dec, int n_con, int n_par,
                              std::function<double(const Vec&, const Vec&)> cost,
                              std::function<Vec(const Vec&, const Vec&)> grad,
                              std::function<Vec(const Vec&, const Vec&)> cons = nullptr,
                              std::function<Mat(const Vec&, const Vec&)> jac = nullptr) {
    ParametricNlp nlp;
    nlp.n_dec = n_dec;
    nlp.n_con = n_con;
    nlp.n_par = n_par;
    nlp.cost = std::move(cost);
    nlp.cost_grad = std::move(grad);
    nlp.constraints = std::move(cons);
    nlp.constraint_jac = std::move(jac);
    return nlp;
}

inline double cubic_root_2x3_minus_x_minus_2() {
    // Positive root of 2x^3 - x - 2 = 0, by bisection (monotone on [0.9, 1.2]).
    double lo = 0.9, hi = 1.2;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double val = 2.0 * mid * mid * mid - mid - 2.0;
        (val > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace corpus_detail

/// Analytic NLP corpus: QPs, quadratically constrained scalar problems,
/// nonconvex smooth problems and one deliberately degenerate instance.
inline std::vector<CorpusProblem> solver_corpus() {
    using corpus_detail::make_nlp;
    std::vector<CorpusProblem> out;

    {  // min (u - p)^2  s.t. u <= 1, p = 2 : pinned at the bound
        CorpusProblem c;
        c.name = "scalar_qp_active";
        c.nlp = make_nlp(
            1, 1, 1, [](const Vec& p, const Vec& u) { return (u(0) - p(0)) * (u(0) - p(0)); },
            [](const Vec& p, const Vec& u) { return Vec::Constant(1, 2.0 * (u(0) - p(0))); },
            [](const Vec&, const Vec& u) { return Vec::Constant(1, u(0) - 1.0); },
            [](const Vec&, const Vec&) { return Mat::Constant(1, 1, 1.0); });
        c.params = Vec::Constant(1, 2.0);
        c.u_expected = Vec::Constant(1, 1.0);
        out.push_back(std::move(c));
    }
    {  // min ||u||^2 over R^3, unconstrained
        CorpusProblem c;
        c.name = "identity_3d";
        c.nlp = make_nlp(
            3, 0, 1, [](const Vec&, const Vec& u) { return u.squaredNorm(); },
            [](const Vec&, const Vec& u) { return Vec(2.0 * u); });
        c.params = Vec::Zero(1);
        c.u_expected = Vec::Zero(3);
        out.push_back(std::move(c));
    }
    {  // min (u - p)^2 : u* = p
        CorpusProblem c;
        c.name = "tracking_unconstrained";
        c.nlp = make_nlp(
            1, 0, 1, [](const Vec& p, const Vec& u) { return (u(0) - p(0)) * (u(0) - p(0)); },
            [](const Vec& p, const Vec& u) { return Vec::Constant(1, 2.0 * (u(0) - p(0))); });
        c.params = Vec::Constant(1, 0.7);
        c.u_expected = Vec::Constant(1, 0.7);
        out.push_back(std::move(c));
    }
    {  // min (u1-1)^2 + (u2-2)^2  s.t. u1 + u2 <= p, p = 1
        CorpusProblem c;
        c.name = "halfspace_2d";
        c.nlp = make_nlp(
            2, 1, 1,
            [](const Vec&, const Vec& u) {
                return (u(0) - 1.0) * (u(0) - 1.0) + (u(1) - 2.0) * (u(1) - 2.0);
            },
            [](const Vec&, const Vec& u) {
                Vec g(2);
                g << 2.0 * (u(0) - 1.0), 2.0 * (u(1) - 2.0);
                return g;
            },
            [](const Vec& p, const Vec& u) { return Vec::Constant(1, u(0) + u(1) - p(0)); },
            [](const Vec&, const Vec&) {
                Mat j(1, 2);
                j << 1.0, 1.0;
                return j;
            });
        c.params = Vec::Constant(1, 1.0);
        c.u_expected = (Vec(2) << 0.0, 1.0).finished();
        out.push_back(std::move(c));
    }
    {  // min ||u - (p,0)||^2  s.t. ||u||^2 <= 1, p = 2 : projection onto the disk
        CorpusProblem c;
        c.name = "disk_projection";
        c.nlp = make_nlp(
            2, 1, 1,
            [](const Vec& p, const Vec& u) {
                return (u(0) - p(0)) * (u(0) - p(0)) + u(1) * u(1);
            },
            [](const Vec& p, const Vec& u) {
                Vec g(2);
                g << 2.0 * (u(0) - p(0)), 2.0 * u(1);
                return g;
            },
            [](const Vec&, const Vec& u) { return Vec::Constant(1, u.squaredNorm() - 1.0); },
            [](const Vec&, const Vec& u) { return Mat(2.0 * u.transpose()); });
        c.params = Vec::Constant(1, 2.0);
        c.u_expected = (Vec(2) << 1.0, 0.0).finished();
        out.push_back(std::move(c));
    }
    {  // min u  s.t. u^2 <= p, p = 4 : u* = -2
        CorpusProblem c;
        c.name = "sqrt_bound";
        c.nlp = make_nlp(
            1, 1, 1, [](const Vec&, const Vec& u) { return u(0); },
            [](const Vec&, const Vec&) { return Vec::Constant(1, 1.0); },
            [](const Vec& p, const Vec& u) { return Vec::Constant(1, u(0) * u(0) - p(0)); },
            [](const Vec&, const Vec& u) { return Mat::Constant(1, 1, 2.0 * u(0)); });
        c.params = Vec::Constant(1, 4.0);
        c.u_expected = Vec::Constant(1, -2.0);
        out.push_back(std::move(c));
    }
    {  // min (u1+p)^2 + (u2+p)^2  s.t. u >= 0, p = 1 : pinned corner
        CorpusProblem c;
        c.name = "corner_2d";
        c.nlp = make_nlp(
            2, 2, 1,
            [](const Vec& p, const Vec& u) {
                return (u(0) + p(0)) * (u(0) + p(0)) + (u(1) + p(0)) * (u(1) + p(0));
            },
            [](const Vec& p, const Vec& u) {
                Vec g(2);
                g << 2.0 * (u(0) + p(0)), 2.0 * (u(1) + p(0));
                return g;
            },
            [](const Vec&, const Vec& u) { return Vec(-u); },
            [](const Vec&, const Vec&) { return Mat(-Mat::Identity(2, 2)); });
        c.params = Vec::Constant(1, 1.0);
        c.u_expected = Vec::Zero(2);
        out.push_back(std::move(c));
    }
    {  // min u^4 - p u, p = 4 : u* = (p/4)^(1/3) = 1
        CorpusProblem c;
        c.name = "quartic";
        c.nlp = make_nlp(
            1, 0, 1,
            [](const Vec& p, const Vec& u) { return std::pow(u(0), 4) - p(0) * u(0); },
            [](const Vec& p, const Vec& u) {
                return Vec::Constant(1, 4.0 * std::pow(u(0), 3) - p(0));
            });
        c.params = Vec::Constant(1, 4.0);
        c.u_expected = Vec::Constant(1, 1.0);
        out.push_back(std::move(c));
    }
    {  // Rosenbrock with parametric target: u* = (p, p^2)
        CorpusProblem c;
        c.name = "rosenbrock";
        c.nlp = make_nlp(
            2, 0, 1,
            [](const Vec& p, const Vec& u) {
                const double a = p(0) - u(0);
                const double b = u(1) - u(0) * u(0);
                return a * a + 100.0 * b * b;
            },
            [](const Vec& p, const Vec& u) {
                const double b = u(1) - u(0) * u(0);
                Vec g(2);
                g << -2.0 * (p(0) - u(0)) - 400.0 * u(0) * b, 200.0 * b;
                return g;
            });
        c.params = Vec::Constant(1, 1.0);
        c.u_expected = (Vec(2) << 1.0, 1.0).finished();
        out.push_back(std::move(c));
    }
    {  // min (u1-2)^2 + (u2-1)^2  s.t. u1^2 - u2 <= 0 : root of 2x^3 - x - 2
        CorpusProblem c;
        c.name = "parabola_qcqp";
        c.nlp = make_nlp(
            2, 1, 1,
            [](const Vec&, const Vec& u) {
                return (u(0) - 2.0) * (u(0) - 2.0) + (u(1) - 1.0) * (u(1) - 1.0);
            },
            [](const Vec&, const Vec& u) {
                Vec g(2);
                g << 2.0 * (u(0) - 2.0), 2.0 * (u(1) - 1.0);
                return g;
            },
            [](const Vec&, const Vec& u) { return Vec::Constant(1, u(0) * u(0) - u(1)); },
            [](const Vec&, const Vec& u) {
                Mat j(1, 2);
                j << 2.0 * u(0), -1.0;
                return j;
            });
        c.params = Vec::Zero(1);
        const double r = corpus_detail::cubic_root_2x3_minus_x_minus_2();
        c.u_expected = (Vec(2) << r, r * r).finished();
        out.push_back(std::move(c));
    }
    {  // Equality u1 + u2 = 1 encoded as paired inequalities: LICQ fails by design
        CorpusProblem c;
        c.name = "paired_inequalities";
        c.nlp = make_nlp(
            2, 2, 1, [](const Vec&, const Vec& u) { return u.squaredNorm(); },
            [](const Vec&, const Vec& u) { return Vec(2.0 * u); },
            [](const Vec&, const Vec& u) {
                Vec h(2);
                h << u(0) + u(1) - 1.0, 1.0 - u(0) - u(1);
                return h;
            },
            [](const Vec&, const Vec&) {
                Mat j(2, 2);
                j << 1.0, 1.0, -1.0, -1.0;
                return j;
            });
        c.params = Vec::Zero(1);
        c.u_expected = (Vec(2) << 0.5, 0.5).finished();
        c.expect_degenerate = true;
        out.push_back(std::move(c));
    }
    {  // min u^2 + p u  s.t. u >= 0, p = 1 : active bound
        CorpusProblem c;
        c.name = "bound_active";
        c.nlp = make_nlp(
            1, 1, 1, [](const Vec& p, const Vec& u) { return u(0) * u(0) + p(0) * u(0); },
            [](const Vec& p, const Vec& u) { return Vec::Constant(1, 2.0 * u(0) + p(0)); },
            [](const Vec&, const Vec& u) { return Vec::Constant(1, -u(0)); },
            [](const Vec&, const Vec&) { return Mat::Constant(1, 1, -1.0); });
        c.params = Vec::Constant(1, 1.0);
        c.u_expected = Vec::Zero(1);
        out.push_back(std::move(c));
    }
    {  // same problem with p = -1 : bound inactive, u* = 1/2
        CorpusProblem c;
        c.name = "bound_inactive";
        c.nlp = make_nlp(
            1, 1, 1, [](const Vec& p, const Vec& u) { return u(0) * u(0) + p(0) * u(0); },
            [](const Vec& p, const Vec& u) { return Vec::Constant(1, 2.0 * u(0) + p(0)); },
            [](const Vec&, const Vec& u) { return Vec::Constant(1, -u(0)); },
            [](const Vec&, const Vec&) { return Mat::Constant(1, 1, -1.0); });
        c.params = Vec::Constant(1, -1.0);
        c.u_expected = Vec::Constant(1, 0.5);
        out.push_back(std::move(c));
    }
    {  // badly scaled diagonal QP: u* = p * (1, 2, 3)
        CorpusProblem c;
        c.name = "scaled_qp";
        c.nlp = make_nlp(
            3, 0, 1,
            [](const Vec& p, const Vec& u) {
                const double k[3] = {1.0, 100.0, 10000.0};
                double v = 0.0;
                for (int i = 0; i < 3; ++i) {
                    const double d = u(i) - p(0) * (i + 1.0);
                    v += k[i] * d * d;
                }
                return v;
            },
            [](const Vec& p, const Vec& u) {
                const double k[3] = {1.0, 100.0, 10000.0};
                Vec g(3);
                for (int i = 0; i < 3; ++i) g(i) = 2.0 * k[i] * (u(i) - p(0) * (i + 1.0));
                return g;
            });
        c.params = Vec::Constant(1, 1.0);
        c.u_expected = (Vec(3) << 1.0, 2.0, 3.0).finished();
        out.push_back(std::move(c));
    }

    return out;
}

/// Central differences of the solve itself, warm-started from the base
/// solution; the independent reference for kkt_sensitivity.
inline Mat fd_solution_sensitivity(const ParametricNlp& nlp, const Vec& params,
                                   const NlpSolution& base, const SqpSettings& st = SqpSettings{},
                                   double step = 1e-5) {
    auto resolve = [&](const Vec& p) {
        NlpSolution s = solve(nlp, p, base.u_star, st);
        if (s.status != SolveStatus::Converged) s = solve(nlp, p, std::nullopt, st);
        return s;
    };
    Mat fd(nlp.n_dec, nlp.n_par);
    for (int j = 0; j < nlp.n_par; ++j) {
        const double dj = step * std::max(1.0, std::abs(params(j)));
        Vec pp = params, pm = params;
        pp(j) += dj;
        pm(j) -= dj;
        fd.col(j) = (resolve(pp).u_star - resolve(pm).u_star) / (2.0 * dj);
    }
    return fd;
}

/// Solve every corpus problem and compare against the closed forms.
inline std::vector<CorpusReport> run_solver_corpus(const SqpSettings& st = SqpSettings{}) {
    std::vector<CorpusReport> reports;
    for (const CorpusProblem& prob : solver_corpus()) {
        CorpusReport r;
        r.name = prob.name;
        r.expect_degenerate = prob.expect_degenerate;
        const NlpSolution sol = solve(prob.nlp, prob.params, std::nullopt, st);
        r.status = sol.status;
        r.iterations = sol.iterations;
        r.kkt_residual = sol.kkt_residual;
        r.primal_error = (sol.u_star - prob.u_expected).lpNorm<Eigen::Infinity>();
        const auto sens = kkt_sensitivity(prob.nlp, sol, prob.params, st);
        if (!sens) {
            r.degenerate = true;
        } else {
            const Mat fd = fd_solution_sensitivity(prob.nlp, prob.params, sol, st);
            const double scale = std::max(1.0, fd.lpNorm<Eigen::Infinity>());
            r.sensitivity_error = (*sens - fd).lpNorm<Eigen::Infinity>() / scale;
        }
        reports.push_back(std::move(r));
    }
    return reports;
}

}  // namespace mpcgrad
