#pragma once

#include <optional>
#include <vector>

#include "mpcgrad/nlp.hpp"

namespace mpcgrad {

/// Implicit-function-theorem derivative du*/dparams of a converged solution,
/// obtained from the linearized KKT system with the active set held fixed.
/// Requires LICQ and strict complementarity; returns nullopt when either
/// fails (degenerate KKT), signalling callers to fall back to finite
/// differences of the solve itself.
///
/// The Lagrangian Hessian and the parameter cross-derivatives are formed by
/// central differences of the analytic first-order callbacks, so accuracy is
/// limited only by the smoothness of the evaluators.
inline std::optional<Mat> kkt_sensitivity(const ParametricNlp& nlp, const NlpSolution& sol,
                                          const Vec& params, const SqpSettings& st = SqpSettings{},
                                          double fd_step = 1e-6) {
    if (sol.status != SolveStatus::Converged) return std::nullopt;
    const int n = nlp.n_dec;
    const int np = nlp.n_par;
    const int mc = nlp.n_con;
    const Vec& u = sol.u_star;
    const Vec& lam = sol.lambda_star;

    std::vector<int> act;
    for (int i = 0; i < mc; ++i) {
        if (std::abs(sol.constraint_values(i)) <= st.act_tol) {
            if (lam(i) < st.strict_tol) return std::nullopt;  // weakly active
            act.push_back(i);
        }
    }
    const int na = static_cast<int>(act.size());

    Mat jac_act(na, n);
    if (mc) {
        const Mat jac = nlp.constraint_jac(params, u);
        for (int j = 0; j < na; ++j) jac_act.row(j) = jac.row(act[static_cast<std::size_t>(j)]);
    }
    if (na > 0) {
        Eigen::ColPivHouseholderQR<Mat> qr(jac_act.transpose());
        qr.setThreshold(1e-10);
        if (qr.rank() < na) return std::nullopt;  // LICQ failure
    }

    // Gradient of the Lagrangian at fixed multipliers.
    auto grad_lagrangian = [&](const Vec& p, const Vec& uu) -> Vec {
        Vec g = nlp.cost_grad(p, uu);
        if (mc) g += nlp.constraint_jac(p, uu).transpose() * lam;
        return g;
    };

    Mat hess_l(n, n);
    for (int j = 0; j < n; ++j) {
        const double step = fd_step * std::max(1.0, std::abs(u(j)));
        Vec up = u, um = u;
        up(j) += step;
        um(j) -= step;
        hess_l.col(j) = (grad_lagrangian(params, up) - grad_lagrangian(params, um)) / (2.0 * step);
    }
    hess_l = 0.5 * (hess_l + hess_l.transpose()).eval();

    Mat kkt = Mat::Zero(n + na, n + na);
    kkt.topLeftCorner(n, n) = hess_l;
    if (na) {
        kkt.topRightCorner(n, na) = jac_act.transpose();
        kkt.bottomLeftCorner(na, n) = jac_act;
    }
    Eigen::PartialPivLU<Mat> lu(kkt);

    Mat rhs(n + na, np);
    for (int j = 0; j < np; ++j) {
        const double step = fd_step * std::max(1.0, std::abs(params(j)));
        Vec pp = params, pm = params;
        pp(j) += step;
        pm(j) -= step;
        rhs.col(j).head(n) = (grad_lagrangian(pp, u) - grad_lagrangian(pm, u)) / (2.0 * step);
        if (na) {
            const Vec hp = nlp.constraints(pp, u);
            const Vec hm = nlp.constraints(pm, u);
            for (int a = 0; a < na; ++a)
                rhs.col(j)(n + a) =
                    (hp(act[static_cast<std::size_t>(a)]) - hm(act[static_cast<std::size_t>(a)])) /
                    (2.0 * step);
        }
    }

    const Mat solved = lu.solve(-rhs);
    // Singular KKT systems slip through PartialPivLU; verify by residual.
    const double res = (kkt * solved + rhs).norm();
    if (!solved.allFinite() || res > 1e-6 * (1.0 + rhs.norm())) return std::nullopt;
    return Mat(solved.topRows(n));
}

}  // namespace mpcgrad
