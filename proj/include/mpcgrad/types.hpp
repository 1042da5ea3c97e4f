#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mpcgrad {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Thrown when a policy, projection or rollout is requested at a state
/// for which the underlying NLP has no feasible point.
struct InfeasibleState : std::runtime_error {
    explicit InfeasibleState(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when an NLP solve fails for a reason other than infeasibility.
struct SolveFailure : std::runtime_error {
    explicit SolveFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown by moment reports at states whose solved exploration radius is zero.
struct ZeroEta : std::runtime_error {
    explicit ZeroEta(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown by the critic fit when the feature Gram matrix is numerically singular.
struct RankDeficient : std::runtime_error {
    explicit RankDeficient(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a gradient estimate is requested from an empty batch.
struct EmptyBatch : std::runtime_error {
    explicit EmptyBatch(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown on malformed or inconsistent experiment configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mpcgrad
