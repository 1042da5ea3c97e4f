#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "mpcgrad/actor.hpp"
#include "mpcgrad/config.hpp"
#include "mpcgrad/csv.hpp"
#include "mpcgrad/solver_corpus.hpp"
#include "mpcgrad/value_iteration.hpp"

namespace mpcgrad {

namespace experiments_detail {

/// Shared tightening knobs; the radius bound is assigned by the caller
/// (sweep experiments iterate over a list of bounds).
inline RmpcConfig rmpc_config_from(const ExperimentConfig& cfg, bool constant_backoff = false) {
    RmpcConfig rc;
    rc.slack_weight = cfg.get_real("slack_weight");
    if (cfg.kind() != ExperimentKind::Fig3) {
        rc.norm_smoothing = cfg.get_real("norm_smoothing");
        rc.tighten_terminal = cfg.get_bool("tighten_terminal");
    }
    rc.constant_backoff = constant_backoff;
    return rc;
}

inline Example1Options example1_options_from(const ExperimentConfig& cfg) {
    Example1Options opt;
    opt.horizon = static_cast<int>(cfg.get_int("horizon"));
    opt.terminal_constraint = cfg.get_bool("terminal_constraint");
    return opt;
}

inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = q * (static_cast<double>(values.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * values[lo] + w * values[hi];
}

}  // namespace experiments_detail

// ---------------------------------------------------------------------------
// policy sweep figure: policies, solved radius and projection corrections on
// a state grid of the first benchmark, next to the dynamic-programming
// optimal policy
// ---------------------------------------------------------------------------

struct Fig1Result {
    Vec s_grid;
    Vec pi_mpc, pi_rmpc, pi_optimal;
    Vec eta;
    Vec eps_mean, eps_p50, eps_p90, eps_max;
    double eta_bar = 0.0;
    /// Smallest slack of the tightened rows over the grid: min over states
    /// and rows of -(h_i + backoff_i * eta) at the robust plans.
    double min_tightened_margin = std::numeric_limits<double>::infinity();
    /// Largest first-stage boundary value s^2 + 5 pi^2 of the nominal policy.
    double max_nominal_boundary = 0.0;
};

inline Fig1Result run_fig1(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto [mdp, spec] = example1(experiments_detail::example1_options_from(cfg));
    RmpcConfig rc = experiments_detail::rmpc_config_from(cfg);
    rc.eta_bar = cfg.get_real("eta_bar");
    const Vec theta = Vec::Constant(1, cfg.get_real("theta"));
    const int grid_n = static_cast<int>(cfg.get_int("grid_points"));
    const int draws = static_cast<int>(cfg.get_int("draws_per_state"));
    const SplitRng master(cfg.seed());

    const MpcPolicy nominal(spec);
    const RobustPolicy robust(spec, rc);
    const Projector projector(spec);

    ValueIterationOptions vi_opt;
    vi_opt.state_points = static_cast<int>(cfg.get_int("dp_state_points"));
    vi_opt.action_points = static_cast<int>(cfg.get_int("dp_action_points"));
    vi_opt.tol = cfg.get_real("dp_tol");
    const auto dp = value_iteration_1d(
        [](double s, double a) { return s + a; },
        [&mdp = mdp](double s, double a) {
            return mdp.stage_cost(Vec::Constant(1, s), Vec::Constant(1, a));
        },
        [](double s) { return -std::sqrt(std::max(0.0, (1.0 - s * s) / 5.0)); },
        [](double s) { return std::sqrt(std::max(0.0, (1.0 - s * s) / 5.0)); }, mdp.gamma, vi_opt);

    Fig1Result res;
    res.eta_bar = rc.eta_bar;
    res.s_grid = Vec::LinSpaced(grid_n, -1.0, 1.0);
    res.pi_mpc.resize(grid_n);
    res.pi_rmpc.resize(grid_n);
    res.pi_optimal.resize(grid_n);
    res.eta.resize(grid_n);
    res.eps_mean.resize(grid_n);
    res.eps_p50.resize(grid_n);
    res.eps_p90.resize(grid_n);
    res.eps_max.resize(grid_n);

    std::optional<Vec> warm_nom, warm_rob;
    for (int i = 0; i < grid_n; ++i) {
        const Vec s = Vec::Constant(1, res.s_grid(i));
        const PolicyEval pn = nominal.eval(s, theta, warm_nom, false);
        const PolicyEval pr = robust.eval(s, theta, warm_rob, false);
        warm_nom = pn.solution.u_star;
        warm_rob = pr.solution.u_star;
        res.pi_mpc(i) = pn.u0(0);
        res.pi_rmpc(i) = pr.u0(0);
        res.pi_optimal(i) = dp.policy_at(res.s_grid(i));
        res.eta(i) = pr.eta;
        res.max_nominal_boundary = std::max(
            res.max_nominal_boundary, res.s_grid(i) * res.s_grid(i) + 5.0 * pn.u0(0) * pn.u0(0));
        {
            const Vec theta_v = theta;
            const Vec h_nom = mpc_detail::constraint_values(spec, theta_v, pr.x_traj, pr.u_profile);
            const Vec factors =
                rmpc_detail::backoff_factors(spec, rc, theta_v, pr.x_traj, pr.u_profile);
            for (int row = 0; row < h_nom.size(); ++row)
                res.min_tightened_margin =
                    std::min(res.min_tightened_margin, -(h_nom(row) + factors(row) * pr.eta));
        }

        std::vector<double> eps_norms;
        if (pr.eta > 1e-9) {
            eps_norms.reserve(static_cast<std::size_t>(draws));
            SplitRng state_rng = master.split(100).split(static_cast<std::uint64_t>(i));
            for (int d = 0; d < draws; ++d) {
                SplitRng stream = state_rng.split(static_cast<std::uint64_t>(d));
                const ExplorationSample es = sample_ball(1, pr.eta, stream);
                const ProjectionResult proj =
                    explore_and_project(projector, pr, s, theta, es.e_hat);
                eps_norms.push_back(proj.epsilon.norm());
            }
        }
        double mean = 0.0, mx = 0.0;
        for (double e : eps_norms) {
            mean += e;
            mx = std::max(mx, e);
        }
        res.eps_mean(i) = eps_norms.empty() ? 0.0 : mean / static_cast<double>(eps_norms.size());
        res.eps_p50(i) = experiments_detail::quantile(eps_norms, 0.5);
        res.eps_p90(i) = experiments_detail::quantile(eps_norms, 0.9);
        res.eps_max(i) = mx;
    }

    {
        CsvWriter w(out_dir + "/policies.csv", {"s", "pi_mpc", "pi_rmpc", "pi_optimal"});
        for (int i = 0; i < grid_n; ++i)
            w.row({format_real(res.s_grid(i)), format_real(res.pi_mpc(i)),
                   format_real(res.pi_rmpc(i)), format_real(res.pi_optimal(i))});
    }
    {
        CsvWriter w(out_dir + "/radius.csv", {"s", "eta"});
        for (int i = 0; i < grid_n; ++i)
            w.row({format_real(res.s_grid(i)), format_real(res.eta(i))});
    }
    {
        CsvWriter w(out_dir + "/eps.csv",
                    {"s", "eta", "eps_mean", "eps_p50", "eps_p90", "eps_max"});
        for (int i = 0; i < grid_n; ++i)
            w.row({format_real(res.s_grid(i)), format_real(res.eta(i)),
                   format_real(res.eps_mean(i)), format_real(res.eps_p50(i)),
                   format_real(res.eps_p90(i)), format_real(res.eps_max(i))});
    }
    return res;
}

// ---------------------------------------------------------------------------
// training figure: both gradient estimators against the differenced reference
// over the learning iterations of the second benchmark
// ---------------------------------------------------------------------------

inline TrainingTrace run_fig3(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto [mdp, spec] = example2();
    RmpcConfig rc = experiments_detail::rmpc_config_from(cfg, /*constant_backoff=*/true);
    rc.eta_bar = cfg.get_real("eta_bar");

    TrainOptions opt;
    opt.iterations = static_cast<int>(cfg.get_int("iterations"));
    opt.step_size = cfg.get_real("step_size");
    opt.batch_trajectories = static_cast<int>(cfg.get_int("batch_trajectories"));
    opt.trajectory_length = static_cast<int>(cfg.get_int("trajectory_length"));
    opt.samples_per_trajectory = static_cast<int>(cfg.get_int("samples_per_trajectory"));
    opt.q_rollouts = static_cast<int>(cfg.get_int("q_rollouts"));
    opt.rollout_horizon = static_cast<int>(cfg.get_int("rollout_horizon"));
    opt.oracle_delta = cfg.get_real("oracle_delta");
    opt.oracle_rollouts = static_cast<int>(cfg.get_int("oracle_rollouts"));
    const std::string kind = cfg.get_str("policy_kind");
    if (kind == "rmpc")
        opt.kind = PolicyKind::Rmpc;
    else if (kind == "mpc")
        opt.kind = PolicyKind::Mpc;
    else
        throw ConfigError("policy_kind must be 'mpc' or 'rmpc'");

    const TrainingTrace trace =
        train(mdp, spec, rc, Vec::Constant(1, cfg.get_real("theta0")), opt, SplitRng(cfg.seed()));

    CsvWriter w(out_dir + "/gradients.csv",
                {"iteration", "theta", "grad_mpc_est", "grad_rmpc_est", "grad_oracle",
                 "oracle_se"});
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const TrainingRecord& rec = trace.records[i];
        w.row({std::to_string(i), format_real(rec.theta(0)), format_real(rec.grad_mpc_est(0)),
               format_real(rec.grad_rmpc_est(0)), format_real(rec.grad_oracle(0)),
               format_real(rec.oracle_se)});
    }
    return trace;
}

// ---------------------------------------------------------------------------
// correction-scaling verification: max projection correction against the
// radius across a state grid
// ---------------------------------------------------------------------------

struct Lemma2Result {
    std::vector<double> radii;
    std::vector<double> max_eps;
    std::vector<double> alpha_hat;  // max |eps| / eta(s)^2 per radius bound
    double slope = 0.0;             // log-log fit of max_eps against the radius bound
};

inline Lemma2Result run_lemma2(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto [mdp, spec] = example1(experiments_detail::example1_options_from(cfg));
    (void)mdp;
    const Vec theta = Vec::Constant(1, cfg.get_real("theta"));
    const int grid_n = static_cast<int>(cfg.get_int("grid_points"));
    const int draws = static_cast<int>(cfg.get_int("draws"));
    const SplitRng master(cfg.seed());
    const Projector projector(spec);

    Lemma2Result res;
    res.radii = cfg.get_list("radii");
    for (std::size_t r = 0; r < res.radii.size(); ++r) {
        RmpcConfig rc = experiments_detail::rmpc_config_from(cfg);
        rc.eta_bar = res.radii[r];
        const RobustPolicy robust(spec, rc);
        double max_eps = 0.0, alpha = 0.0;
        std::optional<Vec> warm;
        for (int i = 0; i < grid_n; ++i) {
            const Vec s = Vec::Constant(1, -1.0 + 2.0 * i / (grid_n - 1.0));
            const PolicyEval pe = robust.eval(s, theta, warm, false);
            warm = pe.solution.u_star;
            if (pe.eta <= 1e-9) continue;
            SplitRng state_rng =
                master.split(200 + static_cast<std::uint64_t>(r)).split(static_cast<std::uint64_t>(i));
            for (int d = 0; d < draws; ++d) {
                SplitRng stream = state_rng.split(static_cast<std::uint64_t>(d));
                const ExplorationSample es = sample_ball(1, pe.eta, stream);
                const ProjectionResult proj = explore_and_project(projector, pe, s, theta, es.e_hat);
                const double eps = proj.epsilon.norm();
                max_eps = std::max(max_eps, eps);
                alpha = std::max(alpha, eps / (pe.eta * pe.eta));
            }
        }
        res.max_eps.push_back(max_eps);
        res.alpha_hat.push_back(alpha);
    }

    // log-log slope over the radii with nonzero corrections
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n_fit = 0;
    for (std::size_t r = 0; r < res.radii.size(); ++r) {
        if (res.max_eps[r] <= 0.0) continue;
        const double x = std::log(res.radii[r]);
        const double y = std::log(res.max_eps[r]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n_fit;
    }
    if (n_fit >= 2) res.slope = (n_fit * sxy - sx * sy) / (n_fit * sxx - sx * sx);

    CsvWriter w(out_dir + "/lemma2.csv", {"eta", "max_eps", "fitted_slope"});
    for (std::size_t r = 0; r < res.radii.size(); ++r)
        w.row({format_real(res.radii[r]), format_real(res.max_eps[r]), format_real(res.slope)});
    return res;
}

// ---------------------------------------------------------------------------
// projected-exploration moment verification at constraint-active states
// ---------------------------------------------------------------------------

struct Theorem2Row {
    double eta_bar = 0.0;
    double s = 0.0;
    double eta = 0.0;
    double mean_abs = 0.0, mean_se = 0.0;        // |mean(e_perp)| / eta
    double second_dev = 0.0, second_se = 0.0;    // |E[e_perp^2]/eta^2 - 1/3|
    double xi_abs = 0.0, xi_se = 0.0;            // |E[e_perp |e_perp|^2]| / eta^2
};

inline std::vector<Theorem2Row> run_theorem2(const ExperimentConfig& cfg,
                                             const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto [mdp, spec] = example1(experiments_detail::example1_options_from(cfg));
    (void)mdp;
    const Vec theta = Vec::Constant(1, cfg.get_real("theta"));
    const int draws = static_cast<int>(cfg.get_int("draws"));
    const std::vector<double> bars = cfg.get_list("eta_bars");
    const std::vector<double> states = cfg.get_list("states");
    const SplitRng master(cfg.seed());
    const Projector projector(spec);

    std::vector<Theorem2Row> rows;
    for (std::size_t b = 0; b < bars.size(); ++b) {
        RmpcConfig rc = experiments_detail::rmpc_config_from(cfg);
        rc.eta_bar = bars[b];
        const RobustPolicy robust(spec, rc);
        for (std::size_t j = 0; j < states.size(); ++j) {
            const Vec s = Vec::Constant(1, states[j]);
            const MomentReport rep =
                moment_report(robust, projector, s, theta, draws,
                              master.split(300 + static_cast<std::uint64_t>(b))
                                  .split(static_cast<std::uint64_t>(j)));
            Theorem2Row row;
            row.eta_bar = bars[b];
            row.s = states[j];
            row.eta = rep.eta;
            row.mean_abs = std::abs(rep.mean_over_eta(0));
            row.mean_se = rep.mean_se(0);
            row.second_dev = std::abs(rep.second_over_eta2(0, 0) - 1.0 / 3.0);
            row.second_se = rep.second_se(0, 0);
            row.xi_abs = std::abs(rep.xi_over_eta2(0));
            row.xi_se = rep.xi_se(0);
            rows.push_back(row);
        }
    }

    CsvWriter w(out_dir + "/theorem2.csv",
                {"eta_bar", "s", "eta", "mean_abs_over_eta", "mean_se", "second_dev", "second_se",
                 "xi_abs_over_eta2", "xi_se"});
    for (const auto& row : rows)
        w.row({format_real(row.eta_bar), format_real(row.s), format_real(row.eta),
               format_real(row.mean_abs), format_real(row.mean_se), format_real(row.second_dev),
               format_real(row.second_se), format_real(row.xi_abs), format_real(row.xi_se)});
    return rows;
}

// ---------------------------------------------------------------------------
// scheme-convergence verification: max policy gap against the radius bound
// ---------------------------------------------------------------------------

struct RmpcLimitResult {
    std::vector<double> eta_bars;
    std::vector<double> max_gap;
};

inline RmpcLimitResult run_rmpc_limit(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto [mdp, spec] = example1(experiments_detail::example1_options_from(cfg));
    (void)mdp;
    const Vec theta = Vec::Constant(1, cfg.get_real("theta"));
    const int grid_n = static_cast<int>(cfg.get_int("grid_points"));
    const MpcPolicy nominal(spec);

    std::vector<double> nominal_u(static_cast<std::size_t>(grid_n));
    {
        std::optional<Vec> warm;
        for (int i = 0; i < grid_n; ++i) {
            const Vec s = Vec::Constant(1, -1.0 + 2.0 * i / (grid_n - 1.0));
            const PolicyEval pe = nominal.eval(s, theta, warm, false);
            warm = pe.solution.u_star;
            nominal_u[static_cast<std::size_t>(i)] = pe.u0(0);
        }
    }

    RmpcLimitResult res;
    res.eta_bars = cfg.get_list("eta_bars");
    for (double bar : res.eta_bars) {
        RmpcConfig rc = experiments_detail::rmpc_config_from(cfg);
        rc.eta_bar = bar;
        const RobustPolicy robust(spec, rc);
        double gap = 0.0;
        std::optional<Vec> warm;
        for (int i = 0; i < grid_n; ++i) {
            const Vec s = Vec::Constant(1, -1.0 + 2.0 * i / (grid_n - 1.0));
            const PolicyEval pe = robust.eval(s, theta, warm, false);
            warm = pe.solution.u_star;
            gap = std::max(gap, std::abs(pe.u0(0) - nominal_u[static_cast<std::size_t>(i)]));
        }
        res.max_gap.push_back(gap);
    }

    CsvWriter w(out_dir + "/rmpc_limit.csv", {"eta_bar", "max_gap"});
    for (std::size_t i = 0; i < res.eta_bars.size(); ++i)
        w.row({format_real(res.eta_bars[i]), format_real(res.max_gap[i])});
    return res;
}

// ---------------------------------------------------------------------------
// solver benchmark corpus
// ---------------------------------------------------------------------------

inline std::vector<CorpusReport> run_solver_corpus_experiment(const ExperimentConfig&,
                                                              const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto reports = run_solver_corpus();
    CsvWriter w(out_dir + "/corpus.csv", {"problem", "status", "iterations", "kkt_residual",
                                          "primal_error", "sensitivity_error", "degenerate"});
    for (const auto& r : reports)
        w.row({r.name, std::to_string(static_cast<int>(r.status)), std::to_string(r.iterations),
               format_real(r.kkt_residual), format_real(r.primal_error),
               format_real(r.sensitivity_error), r.degenerate ? "1" : "0"});
    return reports;
}

/// Run one experiment into out_dir, writing its CSV artifacts and the
/// resolved configuration.
inline void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    cfg.write_resolved(out_dir + "/resolved.cfg");
    switch (cfg.kind()) {
        case ExperimentKind::Fig1: run_fig1(cfg, out_dir); break;
        case ExperimentKind::Fig3: run_fig3(cfg, out_dir); break;
        case ExperimentKind::Lemma2Scaling: run_lemma2(cfg, out_dir); break;
        case ExperimentKind::Theorem2Moments: run_theorem2(cfg, out_dir); break;
        case ExperimentKind::RmpcLimit: run_rmpc_limit(cfg, out_dir); break;
        case ExperimentKind::SolverCorpus: run_solver_corpus_experiment(cfg, out_dir); break;
    }
}

}  // namespace mpcgrad
