#pragma once

#include <utility>
#include <vector>

#include "mpcgrad/envs.hpp"

namespace mpcgrad {

/// One fitted data point: state, projected exploration, realized radius,
/// policy sensitivity and the Monte Carlo action-value / baseline pair.
struct CriticSample {
    Vec s;
    Vec e_perp;
    double eta = 0.0;
    Mat dpi_dtheta;  // theta_dim x m
    double q_est = 0.0;
    double v_est = 0.0;
};

/// Linear advantage model A^w(s, a) = (eta_bar^2/eta^2) w' dpi (a - pi); the
/// radius rescaling keeps the fit well posed as eta_bar shrinks and undoes
/// the per-state variation of the realized radius.
struct AdvantageModel {
    Vec w_critic;
    double eta_bar = 0.0;

    [[nodiscard]] double advantage(double eta, const Mat& dpi_dtheta, const Vec& e_perp) const {
        return (eta_bar * eta_bar) / (eta * eta) * w_critic.dot(dpi_dtheta * e_perp);
    }
    /// Gradient of the advantage in the action at the policy value.
    [[nodiscard]] Vec action_gradient(double eta, const Mat& dpi_dtheta) const {
        return (eta_bar * eta_bar) / (eta * eta) * (dpi_dtheta.transpose() * w_critic);
    }
};

namespace critic_detail {

inline Vec features(const CriticSample& cs, double eta_bar) {
    return (eta_bar * eta_bar) / (cs.eta * cs.eta) * (cs.dpi_dtheta * cs.e_perp);
}

}  // namespace critic_detail

/// Weighted least squares for the advantage weights: minimizes the squared
/// targets (Q - V - A^w) over the samples. Samples with zero radius carry no
/// information and must be excluded by the caller. Throws RankDeficient when
/// the feature Gram matrix is numerically singular (condition above 1e12).
inline AdvantageModel fit(const std::vector<CriticSample>& samples, double eta_bar) {
    if (samples.empty()) throw EmptyBatch("critic fit needs at least one sample");
    const int d = static_cast<int>(samples.front().dpi_dtheta.rows());
    const int n = static_cast<int>(samples.size());
    if (n < d) throw RankDeficient("fewer samples than critic parameters");

    Mat design(n, d);
    Vec target(n);
    for (int i = 0; i < n; ++i) {
        const CriticSample& cs = samples[static_cast<std::size_t>(i)];
        design.row(i) = critic_detail::features(cs, eta_bar).transpose();
        target(i) = cs.q_est - cs.v_est;
    }
    const Eigen::JacobiSVD<Mat> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(d - 1);
    if (!(smin > 0.0) || smax / smin > 1e6)  // Gram condition = (smax/smin)^2
        throw RankDeficient("critic feature matrix is numerically rank deficient");

    AdvantageModel model;
    model.eta_bar = eta_bar;
    model.w_critic = svd.solve(target);
    return model;
}

/// Empirical stationarity residual of the fitted weights:
///     mean_i (1/eta_i^2) dpi_i e_perp_i (y_i - A^w_i),
/// which is the gradient of the weighted least-squares objective up to the
/// constant 1/eta_bar^2 factor.
inline Vec fit_stationarity_residual(const std::vector<CriticSample>& samples,
                                     const AdvantageModel& model) {
    const int d = static_cast<int>(model.w_critic.size());
    Vec r = Vec::Zero(d);
    for (const CriticSample& cs : samples) {
        const double y = cs.q_est - cs.v_est;
        const double a = model.advantage(cs.eta, cs.dpi_dtheta, cs.e_perp);
        r += (cs.dpi_dtheta * cs.e_perp) * ((y - a) / (cs.eta * cs.eta));
    }
    return r / static_cast<double>(samples.size());
}

/// Per-rollout discounted returns of a policy from a fixed start, applying a
/// given first action; rollout r draws noise from rng.split(r).
inline Vec action_value_returns(const Mdp& mdp,
                                const std::function<RolloutPolicy()>& policy_factory, const Vec& s0,
                                const Vec& a0, int horizon, int n_rollouts, SplitRng rng) {
    Vec returns(n_rollouts);
    for (int r = 0; r < n_rollouts; ++r) {
        SplitRng noise = rng.split(static_cast<std::uint64_t>(r));
        RolloutPolicy pol = policy_factory();
        Vec s = s0;
        double ret = 0.0;
        double disc = 1.0;
        for (int t = 0; t < horizon; ++t) {
            const Vec a = t == 0 ? a0 : pol(s);
            ret += disc * mdp.stage_cost(s, a);
            disc *= mdp.gamma;
            s = mdp.step(s, a, noise);
        }
        returns(r) = ret;
    }
    return returns;
}

/// Monte Carlo Q(s, a0) with the policy applied after the first step.
inline double estimate_q(const Mdp& mdp, const std::function<RolloutPolicy()>& policy_factory,
                         const Vec& s0, const Vec& a0, int horizon, int n_rollouts, SplitRng rng) {
    return action_value_returns(mdp, policy_factory, s0, a0, horizon, n_rollouts, rng).mean();
}

/// Paired Q(s, a0) and baseline V(s) estimates sharing noise streams
/// (common random numbers), so the target Q - V is low variance.
inline std::pair<double, double> estimate_q_and_v(
    const Mdp& mdp, const std::function<RolloutPolicy()>& policy_factory, const Vec& s0,
    const Vec& a0, int horizon, int n_rollouts, SplitRng rng) {
    const double q =
        action_value_returns(mdp, policy_factory, s0, a0, horizon, n_rollouts, rng).mean();
    RolloutPolicy pol = policy_factory();
    const Vec pi0 = pol(s0);
    const double v =
        action_value_returns(mdp, policy_factory, s0, pi0, horizon, n_rollouts, rng).mean();
    return {q, v};
}

}  // namespace mpcgrad
