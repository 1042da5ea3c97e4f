#pragma once

// Test-only oracle: backward induction on dense grids for the scalar
// benchmark scheme
//     min  sum_k gamma^k (theta x_k^2 + u_k^2) + x_N^2
//     s.t. x_{k+1} = x_k + u_k,  x_k^2 + 5 u_k^2 <= 1,  x_N^2 <= 1.
// Entirely independent of the NLP solve path it is used to check.

#include <cmath>
#include <limits>
#include <vector>

namespace test_support {

class FiniteDpOracle {
public:
    FiniteDpOracle(int horizon, double theta, double gamma, int nx = 801, int nu = 1601)
        : N_(horizon), theta_(theta), gamma_(gamma), nx_(nx), nu_(nu) {
        build();
    }

    /// Optimal first input at state s, with parabolic refinement of the grid argmin.
    double best_first_input(double s) const {
        double best_u = 0.0, best_v = inf();
        std::vector<double> us, vs;
        scan_actions(s, 0, us, vs, best_u, best_v);
        // refine around the grid argmin when the neighbors are finite
        for (std::size_t j = 1; j + 1 < us.size(); ++j) {
            if (vs[j] <= vs[j - 1] && vs[j] <= vs[j + 1] && vs[j] == best_v &&
                std::isfinite(vs[j - 1]) && std::isfinite(vs[j + 1])) {
                const double denom = vs[j - 1] - 2.0 * vs[j] + vs[j + 1];
                if (denom > 1e-14) {
                    const double du = us[1] - us[0];
                    return us[j] + 0.5 * du * (vs[j - 1] - vs[j + 1]) / denom;
                }
            }
        }
        return best_u;
    }

private:
    static double inf() { return std::numeric_limits<double>::infinity(); }
    double x_at(int i) const { return -1.0 + 2.0 * i / (nx_ - 1); }

    double interp(const std::vector<double>& v, double x) const {
        if (x < -1.0 || x > 1.0) return inf();
        const double pos = (x + 1.0) * 0.5 * (nx_ - 1);
        const int i = std::min(nx_ - 2, static_cast<int>(pos));
        const double w = pos - i;
        const double a = v[static_cast<std::size_t>(i)];
        const double b = v[static_cast<std::size_t>(i) + 1];
        if (!std::isfinite(a) || !std::isfinite(b)) return inf();
        return (1.0 - w) * a + w * b;
    }

    void scan_actions(double x, int stage, std::vector<double>& us, std::vector<double>& vs,
                      double& best_u, double& best_v) const {
        const double cap = 1.0 - x * x;
        us.clear();
        vs.clear();
        best_v = inf();
        best_u = 0.0;
        if (cap < 0.0) return;
        const double u_max = std::sqrt(cap / 5.0);
        const double disc = std::pow(gamma_, stage);
        const std::vector<double>& next = W_[static_cast<std::size_t>(stage) + 1];
        for (int j = 0; j < nu_; ++j) {
            const double u = -u_max + 2.0 * u_max * j / (nu_ - 1);
            const double v = disc * (theta_ * x * x + u * u) + interp(next, x + u);
            us.push_back(u);
            vs.push_back(v);
            if (v < best_v) {
                best_v = v;
                best_u = u;
            }
        }
    }

    void build() {
        W_.assign(static_cast<std::size_t>(N_) + 1, std::vector<double>(static_cast<std::size_t>(nx_)));
        for (int i = 0; i < nx_; ++i) {
            const double x = x_at(i);
            W_[static_cast<std::size_t>(N_)][static_cast<std::size_t>(i)] = x * x;  // terminal cost, |x| <= 1 by grid
        }
        std::vector<double> us, vs;
        for (int k = N_ - 1; k >= 0; --k) {
            for (int i = 0; i < nx_; ++i) {
                double bu, bv;
                scan_actions(x_at(i), k, us, vs, bu, bv);
                W_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = bv;
            }
        }
    }

    int N_;
    double theta_, gamma_;
    int nx_, nu_;
    std::vector<std::vector<double>> W_;
};

}  // namespace test_support
