#pragma once

#include <stdexcept>
#include <string>

namespace mlblue {

/// A group covariance matrix is singular (or nearly so): one level in the
/// group is an affine combination of the others and should be removed.
class SingularGroupCovariance : public std::runtime_error {
public:
    SingularGroupCovariance(int group, const std::string& detail)
        : std::runtime_error("group " + std::to_string(group) +
                             " covariance is singular or ill-conditioned: " + detail),
          group_(group) {}

    [[nodiscard]] int group() const noexcept { return group_; }

private:
    int group_;
};

/// The phi matrix (sum of scattered group precisions) is rank deficient,
/// typically because the coupling groups do not cover the target levels.
class SingularPhi : public std::runtime_error {
public:
    explicit SingularPhi(const std::string& detail)
        : std::runtime_error("phi matrix is singular: " + detail) {}
};

class SingularSaddlePoint : public std::runtime_error {
public:
    explicit SingularSaddlePoint(const std::string& detail)
        : std::runtime_error("saddle-point system is singular: " + detail) {}
};

class DimensionMismatch : public std::invalid_argument {
public:
    explicit DimensionMismatch(const std::string& detail)
        : std::invalid_argument("dimension mismatch: " + detail) {}
};

/// Sample-allocation problem has no feasible point (e.g. the budget cannot
/// pay for a single coupled sample of any group containing the finest level).
class InfeasibleAllocation : public std::runtime_error {
public:
    explicit InfeasibleAllocation(const std::string& detail)
        : std::runtime_error("infeasible allocation problem: " + detail) {}
};

/// Target-accuracy allocation cannot reach the requested variance with the
/// given set of models.
class UnreachableTarget : public std::runtime_error {
public:
    explicit UnreachableTarget(const std::string& detail)
        : std::runtime_error("target variance unreachable: " + detail) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& detail)
        : std::runtime_error("config error: " + detail) {}
};

}  // namespace mlblue
