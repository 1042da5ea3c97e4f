#pragma once

#include <vector>

#include "mpcgrad/mpc.hpp"

namespace mpcgrad {

/// First-input sensitivities S_k = dx_k/du_0 along a nominal trajectory.
struct TrajectorySensitivities {
    std::vector<Mat> S;  // k = 0..N, each state_dim x input_dim
    std::vector<Vec> evaluated_x;
    Vec evaluated_u;
};

/// Linear recursion S_0 = 0, S_1 = f_u(x_0,u_0),
/// S_k = f_x(x_{k-1},u_{k-1}) S_{k-1} for k >= 2, propagated through k = N so
/// terminal tightening has S_N available.
inline TrajectorySensitivities propagate(const MpcSpec& spec, const std::vector<Vec>& x_traj,
                                         const Vec& u_profile, const Vec& theta) {
    const int n = spec.state_dim;
    const int m = spec.input_dim;
    const int N = spec.horizon;
    if (static_cast<int>(x_traj.size()) != N + 1 || u_profile.size() != N * m)
        throw std::invalid_argument("propagate: trajectory/profile dimensions do not match");

    TrajectorySensitivities out;
    out.S.resize(static_cast<std::size_t>(N) + 1);
    out.S[0] = Mat::Zero(n, m);
    if (N >= 1) out.S[1] = spec.f_u(x_traj[0], u_profile.head(m), theta);
    for (int k = 2; k <= N; ++k) {
        const Vec& x = x_traj[static_cast<std::size_t>(k) - 1];
        const Vec uk = u_profile.segment((k - 1) * m, m);
        out.S[static_cast<std::size_t>(k)] = spec.f_x(x, uk, theta) * out.S[static_cast<std::size_t>(k) - 1];
    }
    out.evaluated_x = x_traj;
    out.evaluated_u = u_profile;
    return out;
}

}  // namespace mpcgrad
