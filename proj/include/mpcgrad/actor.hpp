#pragma once

#include <memory>
#include <vector>

#include "mpcgrad/critic.hpp"
#include "mpcgrad/exploration.hpp"

namespace mpcgrad {

enum class PolicyKind { Mpc, Rmpc };

/// A state visited during batch collection, with everything the gradient
/// assembly needs: the policy sensitivity and the realized radius there.
struct VisitedState {
    Vec s;
    Mat dpi_dtheta;  // theta_dim x m
    double eta = 0.0;
};

struct GradientDiagnostics {
    double dpi_norm_min = 0.0;
    double dpi_norm_max = 0.0;
    double dpi_norm_mean = 0.0;
};

struct GradientEstimate {
    Vec grad;
    int n_states = 0;
    GradientDiagnostics diagnostics;
};

/// Policy-gradient assembly: the empirical mean over visited states of
/// dpi * grad_a A^w evaluated at the policy value.
inline GradientEstimate estimate_gradient(const AdvantageModel& model,
                                          const std::vector<VisitedState>& visited) {
    if (visited.empty()) throw EmptyBatch("gradient estimate needs visited states");
    const int d = static_cast<int>(visited.front().dpi_dtheta.rows());
    GradientEstimate out;
    out.grad = Vec::Zero(d);
    out.n_states = static_cast<int>(visited.size());
    double norm_min = std::numeric_limits<double>::infinity(), norm_max = 0.0, norm_sum = 0.0;
    for (const VisitedState& vs : visited) {
        out.grad += vs.dpi_dtheta * model.action_gradient(vs.eta, vs.dpi_dtheta);
        const double nrm = vs.dpi_dtheta.norm();
        norm_min = std::min(norm_min, nrm);
        norm_max = std::max(norm_max, nrm);
        norm_sum += nrm;
    }
    out.grad /= static_cast<double>(visited.size());
    out.diagnostics = {norm_min, norm_max, norm_sum / visited.size()};
    return out;
}

/// Per-rollout discounted returns of a policy parametrization; rollout r must
/// draw only from rng.split(r) so evaluations at different theta share noise.
using ReturnsFn = std::function<Vec(const Vec& theta, SplitRng rng)>;

struct FdGradient {
    Vec grad;
    Vec se;  // standard error of each central difference, from paired rollouts
};

/// Central-difference reference gradient with common random numbers: both
/// sides of every difference replay the same rollout streams, so the paired
/// per-rollout differences carry the Monte Carlo error estimate.
inline FdGradient true_gradient_fd(const ReturnsFn& returns, const Vec& theta, double delta,
                                   SplitRng rng) {
    const int d = static_cast<int>(theta.size());
    FdGradient out;
    out.grad = Vec(d);
    out.se = Vec(d);
    for (int j = 0; j < d; ++j) {
        const double dj = delta * std::max(1.0, std::abs(theta(j)));
        Vec tp = theta, tm = theta;
        tp(j) += dj;
        tm(j) -= dj;
        const Vec rp = returns(tp, rng);
        const Vec rm = returns(tm, rng);
        const Vec diff = (rp - rm) / (2.0 * dj);
        const int n = static_cast<int>(diff.size());
        out.grad(j) = diff.mean();
        if (n > 1) {
            const double var = (diff.array() - diff.mean()).square().sum() / (n - 1);
            out.se(j) = std::sqrt(var / n);
        } else {
            out.se(j) = 0.0;
        }
    }
    return out;
}

/// Stateful rollout policy warm-started from the previous step's solution.
/// (Unshifted profiles warm noticeably better than shift-by-one here: the
/// tightened scheme back-offs only the first input, so a shifted profile
/// starts infeasible in its first block.) The engine must outlive the
/// returned factory.
inline std::function<RolloutPolicy()> rollout_factory(const MpcPolicy& engine, Vec theta) {
    return [&engine, theta] {
        auto warm = std::make_shared<std::optional<Vec>>();
        return RolloutPolicy([&engine, theta, warm](const Vec& s) {
            const PolicyEval pe = engine.eval(s, theta, *warm, false);
            *warm = pe.solution.u_star;
            return pe.u0;
        });
    };
}

inline std::function<RolloutPolicy()> rollout_factory(const RobustPolicy& engine, Vec theta) {
    return [&engine, theta] {
        auto warm = std::make_shared<std::optional<Vec>>();
        return RolloutPolicy([&engine, theta, warm](const Vec& s) {
            const PolicyEval pe = engine.eval(s, theta, *warm, false);
            *warm = pe.solution.u_star;
            return pe.u0;
        });
    };
}

struct TrainOptions {
    int iterations = 8;
    double step_size = 1e-3;
    int batch_trajectories = 32;
    int trajectory_length = 150;
    int samples_per_trajectory = 5;   // drawn with discount-proportional time weights
    int q_rollouts = 2;
    int rollout_horizon = 150;
    double oracle_delta = 1e-3;
    int oracle_rollouts = 64;
    PolicyKind kind = PolicyKind::Rmpc;
};

/// One training iteration record. Gradient estimates and the differenced
/// reference are all expressed per unit of discounted state visitation
/// (the raw dJ/dtheta divided by sum_t gamma^t over the horizon), which makes
/// the estimator and the reference directly comparable.
struct TrainingRecord {
    Vec theta;
    Vec grad_mpc_est, grad_mpc_se;
    Vec grad_rmpc_est, grad_rmpc_se;
    Vec grad_oracle;
    double oracle_se = 0.0;
    Vec grad_oracle_coarse;  // doubled-step differences for the consistency check
    double oracle_coarse_se = 0.0;
    double j_estimate = 0.0, j_se = 0.0;
    double stationarity_mpc = 0.0, stationarity_rmpc = 0.0;
    double targets_scale_mpc = 0.0, targets_scale_rmpc = 0.0;  // max |Q - V| in the fit
};

struct TrainingTrace {
    std::vector<TrainingRecord> records;
    double visitation_mass = 0.0;  // sum_t gamma^t over the rollout horizon
    bool aborted = false;
    std::string abort_reason;
};

namespace actor_detail {

struct Batch {
    std::vector<CriticSample> samples;
    std::vector<VisitedState> visited;
    std::vector<int> cluster;  // trajectory index per sample
};

struct StepRecord {
    Vec s;
    Vec warm;  // solved decision vector to re-derive sensitivities cheaply
    double eta = 0.0;
    Vec e_perp;
    Vec a_applied;
};

/// Roll exploring closed-loop trajectories and sample transitions with
/// discount-proportional time weights, so the visited-state mean estimates
/// the discounted-visitation expectation the reference gradient differentiates.
template <typename Engine>
Batch collect_batch(const Mdp& mdp, const Engine& engine, const Projector& projector,
                    double exploration_eta_bar, bool radius_from_policy, const Vec& theta,
                    const TrainOptions& opt, SplitRng rng) {
    Batch batch;
    const int T = opt.trajectory_length;
    const int m = mdp.input_dim;
    auto qv_factory = rollout_factory(engine, theta);

    // discount-proportional sampling distribution over time indices
    Vec cdf(T);
    double mass = 0.0;
    for (int t = 0; t < T; ++t) {
        mass += std::pow(mdp.gamma, t);
        cdf(t) = mass;
    }

    for (int r = 0; r < opt.batch_trajectories; ++r) {
        SplitRng traj = rng.split(static_cast<std::uint64_t>(r));
        SplitRng init_stream = traj.split(0);
        SplitRng noise = traj.split(1);
        SplitRng ball = traj.split(2);
        SplitRng times = traj.split(3);
        SplitRng qv = traj.split(4);

        std::vector<StepRecord> steps(static_cast<std::size_t>(T));
        Vec s = mdp.sample_initial(init_stream);
        std::optional<Vec> warm;
        for (int t = 0; t < T; ++t) {
            const PolicyEval pe = engine.eval(s, theta, warm, false);
            warm = pe.solution.u_star;
            const double eta = radius_from_policy ? pe.eta : exploration_eta_bar;
            SplitRng ball_t = ball.split(static_cast<std::uint64_t>(t));
            const ExplorationSample es = sample_ball(m, eta, ball_t);
            const ProjectionResult pr =
                projector.project(s, theta, pe.u0 + es.e_hat, pe.u_profile, pe.u0);
            StepRecord& rec = steps[static_cast<std::size_t>(t)];
            rec.s = s;
            rec.warm = pe.solution.u_star;
            rec.eta = eta;
            rec.e_perp = pr.e_perp;
            rec.a_applied = pr.a_perp;
            s = mdp.step(s, rec.a_applied, noise);
        }

        for (int k = 0; k < opt.samples_per_trajectory; ++k) {
            const double x = times.next_double() * mass;
            int t = 0;
            while (t < T - 1 && cdf(t) < x) ++t;
            const StepRecord& rec = steps[static_cast<std::size_t>(t)];
            if (rec.eta <= 1e-12) continue;  // no exploration, no information

            const PolicyEval pe = engine.eval(rec.s, theta, rec.warm, true);
            const auto [q, v] =
                estimate_q_and_v(mdp, qv_factory, rec.s, rec.a_applied, opt.rollout_horizon,
                                 opt.q_rollouts, qv.split(static_cast<std::uint64_t>(k)));
            CriticSample cs;
            cs.s = rec.s;
            cs.e_perp = rec.e_perp;
            cs.eta = rec.eta;
            cs.dpi_dtheta = pe.dpi_dtheta;
            cs.q_est = q;
            cs.v_est = v;
            batch.samples.push_back(cs);
            batch.visited.push_back({rec.s, pe.dpi_dtheta, rec.eta});
            batch.cluster.push_back(r);
        }
    }
    return batch;
}

/// Delete-one-trajectory jackknife of the full pipeline (least-squares fit
/// plus visited mean). Samples within a trajectory share its path, so the
/// trajectory is the independent unit.
inline Vec jackknife_se(const Batch& batch, double eta_bar, const Vec& grad_full) {
    const int n = static_cast<int>(batch.samples.size());
    const int d = static_cast<int>(grad_full.size());
    int n_clusters = 0;
    for (int c : batch.cluster) n_clusters = std::max(n_clusters, c + 1);
    if (n < 3 || n_clusters < 3) return Vec::Zero(d);

    std::vector<Mat> gram_c(static_cast<std::size_t>(n_clusters), Mat::Zero(d, d));
    std::vector<Vec> moment_c(static_cast<std::size_t>(n_clusters), Vec::Zero(d));
    std::vector<Mat> assembly_c(static_cast<std::size_t>(n_clusters), Mat::Zero(d, d));
    std::vector<int> count_c(static_cast<std::size_t>(n_clusters), 0);
    Mat gram = Mat::Zero(d, d), assembly_sum = Mat::Zero(d, d);
    Vec moment = Vec::Zero(d);
    for (int i = 0; i < n; ++i) {
        const CriticSample& cs = batch.samples[static_cast<std::size_t>(i)];
        const std::size_t c = static_cast<std::size_t>(batch.cluster[static_cast<std::size_t>(i)]);
        const Vec phi = critic_detail::features(cs, eta_bar);
        const VisitedState& vs = batch.visited[static_cast<std::size_t>(i)];
        const double ratio = (eta_bar * eta_bar) / (vs.eta * vs.eta);
        const Mat asm_i = ratio * vs.dpi_dtheta * vs.dpi_dtheta.transpose();
        gram_c[c] += phi * phi.transpose();
        moment_c[c] += phi * (cs.q_est - cs.v_est);
        assembly_c[c] += asm_i;
        ++count_c[c];
        gram += phi * phi.transpose();
        moment += phi * (cs.q_est - cs.v_est);
        assembly_sum += asm_i;
    }

    std::vector<Vec> loo;
    loo.reserve(static_cast<std::size_t>(n_clusters));
    for (int c = 0; c < n_clusters; ++c) {
        const std::size_t cc = static_cast<std::size_t>(c);
        if (count_c[cc] == 0) continue;
        const int n_rest = n - count_c[cc];
        if (n_rest < d) continue;
        const Mat g_c = gram - gram_c[cc];
        const Vec b_c = moment - moment_c[cc];
        const Vec w_c = g_c.ldlt().solve(b_c);
        const Mat asm_c = (assembly_sum - assembly_c[cc]) / static_cast<double>(n_rest);
        loo.push_back(asm_c * w_c);
    }
    const int r = static_cast<int>(loo.size());
    if (r < 3) return Vec::Zero(d);
    Vec se = Vec::Zero(d);
    for (int j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const Vec& v : loo) mean += v(j);
        mean /= r;
        double ss = 0.0;
        for (const Vec& v : loo) ss += (v(j) - mean) * (v(j) - mean);
        se(j) = std::sqrt(ss * (r - 1.0) / r);
    }
    return se;
}

}  // namespace actor_detail

/// Actor-critic training on a benchmark: per iteration, collect exploring
/// batches under both schemes, fit both critics, record both gradient
/// estimates next to the differenced reference, then step theta along the
/// estimator selected by `kind`. Aborts with the trace so far if a state
/// becomes infeasible or a fit goes rank deficient.
inline TrainingTrace train(const Mdp& mdp, const MpcSpec& spec, const RmpcConfig& cfg, Vec theta,
                           const TrainOptions& opt, SplitRng rng,
                           const SqpSettings& settings = SqpSettings{}) {
    const MpcPolicy nominal(spec, settings);
    const RobustPolicy robust(spec, cfg, settings);
    const Projector projector(spec, settings);

    TrainingTrace trace;
    double mass = 0.0;
    for (int t = 0; t < opt.rollout_horizon; ++t) mass += std::pow(mdp.gamma, t);
    trace.visitation_mass = mass;

    auto returns_fn = [&](const Vec& th, SplitRng r) {
        const auto factory = opt.kind == PolicyKind::Rmpc ? rollout_factory(robust, th)
                                                          : rollout_factory(nominal, th);
        Vec returns(opt.oracle_rollouts);
        for (int i = 0; i < opt.oracle_rollouts; ++i) {
            SplitRng stream = r.split(static_cast<std::uint64_t>(i));
            SplitRng init_stream = stream.split(0);
            SplitRng noise = stream.split(1);
            RolloutPolicy pol = factory();
            Vec s = mdp.sample_initial(init_stream);
            double ret = 0.0;
            double disc = 1.0;
            for (int t = 0; t < opt.rollout_horizon; ++t) {
                const Vec a = pol(s);
                ret += disc * mdp.stage_cost(s, a);
                disc *= mdp.gamma;
                s = mdp.step(s, a, noise);
            }
            returns(i) = ret;
        }
        return returns;
    };

    for (int it = 0; it < opt.iterations; ++it) {
        TrainingRecord rec;
        rec.theta = theta;
        try {
            SplitRng iter_rng = rng.split(static_cast<std::uint64_t>(it));

            const auto batch_rmpc = actor_detail::collect_batch(
                mdp, robust, projector, cfg.eta_bar, true, theta, opt, iter_rng.split(1));
            const auto batch_mpc = actor_detail::collect_batch(
                mdp, nominal, projector, cfg.eta_bar, false, theta, opt, iter_rng.split(2));

            const AdvantageModel model_rmpc = fit(batch_rmpc.samples, cfg.eta_bar);
            const AdvantageModel model_mpc = fit(batch_mpc.samples, cfg.eta_bar);
            rec.stationarity_rmpc =
                fit_stationarity_residual(batch_rmpc.samples, model_rmpc).lpNorm<Eigen::Infinity>();
            rec.stationarity_mpc =
                fit_stationarity_residual(batch_mpc.samples, model_mpc).lpNorm<Eigen::Infinity>();
            for (const auto& cs : batch_rmpc.samples)
                rec.targets_scale_rmpc = std::max(rec.targets_scale_rmpc,
                                                  std::abs(cs.q_est - cs.v_est));
            for (const auto& cs : batch_mpc.samples)
                rec.targets_scale_mpc = std::max(rec.targets_scale_mpc,
                                                 std::abs(cs.q_est - cs.v_est));

            rec.grad_rmpc_est = estimate_gradient(model_rmpc, batch_rmpc.visited).grad;
            rec.grad_mpc_est = estimate_gradient(model_mpc, batch_mpc.visited).grad;
            rec.grad_rmpc_se =
                actor_detail::jackknife_se(batch_rmpc, cfg.eta_bar, rec.grad_rmpc_est);
            rec.grad_mpc_se =
                actor_detail::jackknife_se(batch_mpc, cfg.eta_bar, rec.grad_mpc_est);

            SplitRng oracle_rng = iter_rng.split(3);
            const FdGradient fine = true_gradient_fd(returns_fn, theta, opt.oracle_delta, oracle_rng);
            const FdGradient coarse =
                true_gradient_fd(returns_fn, theta, 2.0 * opt.oracle_delta, oracle_rng);
            rec.grad_oracle = fine.grad / mass;
            rec.oracle_se = fine.se.lpNorm<Eigen::Infinity>() / mass;
            rec.grad_oracle_coarse = coarse.grad / mass;
            rec.oracle_coarse_se = coarse.se.lpNorm<Eigen::Infinity>() / mass;

            const Vec returns = returns_fn(theta, oracle_rng.split(1));
            rec.j_estimate = returns.mean();
            if (returns.size() > 1) {
                const double var =
                    (returns.array() - returns.mean()).square().sum() / (returns.size() - 1);
                rec.j_se = std::sqrt(var / returns.size());
            }

            trace.records.push_back(rec);
            const Vec& grad =
                opt.kind == PolicyKind::Rmpc ? rec.grad_rmpc_est : rec.grad_mpc_est;
            theta -= opt.step_size * grad;
        } catch (const InfeasibleState& e) {
            trace.aborted = true;
            trace.abort_reason = e.what();
            break;
        } catch (const RankDeficient& e) {
            trace.aborted = true;
            trace.abort_reason = e.what();
            break;
        }
    }
    return trace;
}

}  // namespace mpcgrad
