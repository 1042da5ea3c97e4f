#pragma once

#include "mpcgrad/projection.hpp"
#include "mpcgrad/rng.hpp"

namespace mpcgrad {

struct ExplorationSample {
    Vec e_hat;
    double eta = 0.0;
    std::uint64_t seed_path = 0;  // key of the stream this sample came from
};

/// Uniform draw on the closed ball B(0, eta). For m = 1 this is uniform on
/// [-eta, eta]; in general a normalized Gaussian direction is scaled by
/// eta * U^(1/m).
inline ExplorationSample sample_ball(int m, double eta, SplitRng& rng) {
    ExplorationSample out;
    out.eta = eta;
    out.seed_path = rng.key();
    if (m == 1) {
        out.e_hat = Vec::Constant(1, rng.uniform(-eta, eta));
        return out;
    }
    Vec dir(m);
    double norm = 0.0;
    do {
        for (int i = 0; i < m; ++i) dir(i) = rng.normal();
        norm = dir.norm();
    } while (norm < 1e-12);
    const double radius = eta * std::pow(rng.next_double(), 1.0 / m);
    out.e_hat = (radius / norm) * dir;
    return out;
}

/// Monte Carlo statistics of the projected exploration at one state:
/// mean(e_perp)/eta, second moment/eta^2 and the cubic term
/// E[e_perp |e_perp|^2]/eta^2, each with standard errors.
struct MomentReport {
    Vec mean_over_eta;
    Vec mean_se;
    Mat second_over_eta2;
    Mat second_se;
    Vec xi_over_eta2;
    Vec xi_se;
    double eta = 0.0;
    int n_samples = 0;
    int n_projected = 0;  // draws whose correction was active
};

/// Draw n samples on B(0, eta(s)), project each onto the nominal feasible
/// set, and report the moments. Sample i uses rng.split(i).
inline MomentReport moment_report(const RobustPolicy& robust, const Projector& projector,
                                  const Vec& s, const Vec& theta, int n_samples, SplitRng rng) {
    const PolicyEval pe = robust.eval(s, theta, std::nullopt, false);
    if (pe.eta <= 1e-6)
        throw ZeroEta("moment report undefined: solved exploration radius is zero");
    const int m = robust.spec().input_dim;
    const double eta = pe.eta;

    Vec sum_e = Vec::Zero(m), sum_e2 = Vec::Zero(m);
    Mat sum_outer = Mat::Zero(m, m), sum_outer2 = Mat::Zero(m, m);
    Vec sum_xi = Vec::Zero(m), sum_xi2 = Vec::Zero(m);
    int projected = 0;

    for (int i = 0; i < n_samples; ++i) {
        SplitRng stream = rng.split(static_cast<std::uint64_t>(i));
        const ExplorationSample es = sample_ball(m, eta, stream);
        const ProjectionResult pr = explore_and_project(projector, pe, s, theta, es.e_hat);
        if (pr.active) ++projected;
        const Vec& e = pr.e_perp;
        sum_e += e;
        sum_e2 += e.cwiseProduct(e);
        const Mat outer = e * e.transpose();
        sum_outer += outer;
        sum_outer2 += outer.cwiseProduct(outer);
        const Vec xi = e * e.squaredNorm();
        sum_xi += xi;
        sum_xi2 += xi.cwiseProduct(xi);
    }

    const double n = static_cast<double>(n_samples);
    auto se_of = [n](double sum, double sum_sq) {
        const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
        return std::sqrt(var / n);
    };

    MomentReport rep;
    rep.eta = eta;
    rep.n_samples = n_samples;
    rep.n_projected = projected;
    rep.mean_over_eta = sum_e / (n * eta);
    rep.mean_se = Vec(m);
    for (int i = 0; i < m; ++i) rep.mean_se(i) = se_of(sum_e(i), sum_e2(i)) / eta;
    rep.second_over_eta2 = sum_outer / (n * eta * eta);
    rep.second_se = Mat(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            rep.second_se(i, j) = se_of(sum_outer(i, j), sum_outer2(i, j)) / (eta * eta);
    rep.xi_over_eta2 = sum_xi / (n * eta * eta);
    rep.xi_se = Vec(m);
    for (int i = 0; i < m; ++i) rep.xi_se(i) = se_of(sum_xi(i), sum_xi2(i)) / (eta * eta);
    return rep;
}

/// Convenience form building the engines per call.
inline MomentReport moment_report(const MpcSpec& spec, const RmpcConfig& cfg, const Vec& s,
                                  const Vec& theta, int n_samples, SplitRng rng,
                                  const SqpSettings& settings = SqpSettings{}) {
    const RobustPolicy robust(spec, cfg, settings);
    const Projector projector(spec, settings);
    return moment_report(robust, projector, s, theta, n_samples, rng);
}

}  // namespace mpcgrad
