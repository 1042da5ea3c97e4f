#pragma once

#include <functional>
#include <limits>

#include "mpcgrad/types.hpp"

namespace mpcgrad {

struct ValueIterationOptions {
    double s_lo = -1.0;
    double s_hi = 1.0;
    int state_points = 401;
    int action_points = 401;
    double tol = 1e-9;  // sup-norm Bellman residual
    int max_sweeps = 20000;
};

struct ValueIterationResult {
    Vec s_grid;
    Vec value;
    Vec policy;
    int sweeps = 0;
    double residual = 0.0;

    [[nodiscard]] double policy_at(double s) const { return interp(policy, s); }
    [[nodiscard]] double value_at(double s) const { return interp(value, s); }

private:
    [[nodiscard]] double interp(const Vec& table, double s) const {
        const double lo = s_grid(0);
        const double hi = s_grid(s_grid.size() - 1);
        const double x = std::clamp(s, lo, hi);
        const double pos = (x - lo) / (hi - lo) * (s_grid.size() - 1);
        const int i = std::min<int>(static_cast<int>(s_grid.size()) - 2, static_cast<int>(pos));
        const double w = pos - i;
        return (1.0 - w) * table(i) + w * table(i + 1);
    }
};

/// Value iteration for a deterministic scalar MDP with a state-dependent
/// feasible action interval. Successor states outside the grid are treated
/// as infeasible; the converged policy is refined by a parabolic fit around
/// the grid argmin.
inline ValueIterationResult value_iteration_1d(
    const std::function<double(double, double)>& next_state,
    const std::function<double(double, double)>& stage_cost,
    const std::function<double(double)>& action_lo,
    const std::function<double(double)>& action_hi, double gamma,
    const ValueIterationOptions& opt = ValueIterationOptions{}) {
    const double inf = std::numeric_limits<double>::infinity();
    const int ns = opt.state_points;
    const int na = opt.action_points;

    ValueIterationResult out;
    out.s_grid = Vec::LinSpaced(ns, opt.s_lo, opt.s_hi);
    out.value = Vec::Zero(ns);
    out.policy = Vec::Zero(ns);

    auto interp_v = [&](const Vec& v, double s) -> double {
        if (s < opt.s_lo || s > opt.s_hi) return inf;
        const double pos = (s - opt.s_lo) / (opt.s_hi - opt.s_lo) * (ns - 1);
        const int i = std::min(ns - 2, static_cast<int>(pos));
        const double w = pos - i;
        const double a = v(i);
        const double b = v(i + 1);
        if (!std::isfinite(a) || !std::isfinite(b)) return inf;
        return (1.0 - w) * a + w * b;
    };

    Vec v_next(ns);
    for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        double delta = 0.0;
        for (int i = 0; i < ns; ++i) {
            const double s = out.s_grid(i);
            const double lo = action_lo(s);
            const double hi = action_hi(s);
            double best = inf;
            if (hi >= lo) {
                for (int j = 0; j < na; ++j) {
                    const double a = na > 1 ? lo + (hi - lo) * j / (na - 1) : lo;
                    const double q = stage_cost(s, a) + gamma * interp_v(out.value, next_state(s, a));
                    if (q < best) best = q;
                }
            }
            v_next(i) = best;
            if (std::isfinite(best) || std::isfinite(out.value(i)))
                delta = std::max(delta, std::abs(best - out.value(i)));
        }
        out.value = v_next;
        out.sweeps = sweep;
        out.residual = delta;
        if (delta <= opt.tol) break;
    }

    // Extract the greedy policy with parabolic refinement.
    for (int i = 0; i < ns; ++i) {
        const double s = out.s_grid(i);
        const double lo = action_lo(s);
        const double hi = action_hi(s);
        double best = inf, best_a = 0.0;
        int best_j = -1;
        std::vector<double> qs(static_cast<std::size_t>(na), inf);
        if (hi >= lo) {
            for (int j = 0; j < na; ++j) {
                const double a = na > 1 ? lo + (hi - lo) * j / (na - 1) : lo;
                const double q = stage_cost(s, a) + gamma * interp_v(out.value, next_state(s, a));
                qs[static_cast<std::size_t>(j)] = q;
                if (q < best) {
                    best = q;
                    best_a = a;
                    best_j = j;
                }
            }
        }
        if (best_j > 0 && best_j < na - 1 && std::isfinite(qs[static_cast<std::size_t>(best_j) - 1]) &&
            std::isfinite(qs[static_cast<std::size_t>(best_j) + 1])) {
            const double qm = qs[static_cast<std::size_t>(best_j) - 1];
            const double q0 = qs[static_cast<std::size_t>(best_j)];
            const double qp = qs[static_cast<std::size_t>(best_j) + 1];
            const double denom = qm - 2.0 * q0 + qp;
            if (denom > 1e-14) {
                const double da = (hi - lo) / (na - 1);
                best_a += 0.5 * da * (qm - qp) / denom;
            }
        }
        out.policy(i) = best_a;
    }
    return out;
}

}  // namespace mpcgrad
