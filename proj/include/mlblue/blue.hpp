#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlblue/coupling.hpp"
#include "mlblue/errors.hpp"

namespace mlblue {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Vector<Scalar, Eigen::Dynamic>;

/// What the per-group matrices of a GroupMomentSet mean.
enum class MomentKind {
    /// C^(k): covariance of one coupled sample; the estimator covariance is
    /// C^(k)/m^(k).
    PerSampleCovariance,
    /// The covariance of the group's Monte Carlo estimator itself, with any
    /// sample-size dependence already baked in (covariance estimation).
    EstimatorCovariance,
};

/// One symmetric positive-definite matrix per coupling group, sized
/// p^(k) x p^(k), plus the flag saying how to read them.
template <typename Scalar = double>
struct GroupMomentSet {
    std::vector<MatrixX<Scalar>> cov;
    MomentKind kind = MomentKind::PerSampleCovariance;
};

/// Scalar-flavor multilevel weights: one beta vector per coupling group.
/// `biased` marks weights estimated from the same ensemble they are applied
/// to; everything computed from independent moments keeps the default.
template <typename Scalar = double>
struct WeightSet {
    std::vector<VectorX<Scalar>> beta;
    VectorX<Scalar> alpha;
    bool biased = false;
};

template <typename Scalar = double>
struct SolverOptions {
    Scalar condition_cap = Scalar(1e12);
};

/// KKT solve output: the weights plus the Lagrange multipliers of the
/// no-bias constraint, kept for diagnostics only.
template <typename Scalar = double>
struct KktSolution {
    WeightSet<Scalar> weights;
    VectorX<Scalar> multipliers;
};

namespace detail {

template <typename Scalar>
void check_moments(const CouplingStructure& s, const GroupMomentSet<Scalar>& mom) {
    if (static_cast<int>(mom.cov.size()) != s.group_count())
        throw DimensionMismatch("one covariance matrix per coupling group is required");
    for (int k = 0; k < s.group_count(); ++k) {
        const auto& c = mom.cov[static_cast<std::size_t>(k)];
        if (c.rows() != s.group_size(k) || c.cols() != s.group_size(k))
            throw DimensionMismatch("group " + std::to_string(k + 1) + " covariance has wrong size");
        const Scalar scale = c.template lpNorm<Eigen::Infinity>();
        const Scalar asym = (c - c.transpose()).template lpNorm<Eigen::Infinity>();
        if (asym > Scalar(1e-12) * std::max(scale, Scalar(1)))
            throw std::invalid_argument("group " + std::to_string(k + 1) +
                                        " covariance is not symmetric");
    }
    if (mom.kind == MomentKind::PerSampleCovariance) {
        if (static_cast<int>(s.m.size()) != s.group_count())
            throw std::invalid_argument("per-sample moments require sample counts m");
        for (int k = 0; k < s.group_count(); ++k)
            if (s.m[static_cast<std::size_t>(k)] < 1)
                throw std::invalid_argument("group " + std::to_string(k + 1) +
                                            " needs m >= 1 for per-sample moments");
    }
}

/// Estimator covariances: the per-group matrices the generic solver works
/// on. Identity for EstimatorCovariance, C^(k)/m^(k) for per-sample input.
template <typename Scalar>
std::vector<MatrixX<Scalar>> estimator_covariances(const CouplingStructure& s,
                                                   const GroupMomentSet<Scalar>& mom) {
    std::vector<MatrixX<Scalar>> chat(mom.cov.size());
    for (std::size_t k = 0; k < mom.cov.size(); ++k) {
        MatrixX<Scalar> c = (mom.cov[k] + mom.cov[k].transpose()) / Scalar(2);
        if (mom.kind == MomentKind::PerSampleCovariance) c /= Scalar(s.m[k]);
        chat[k] = std::move(c);
    }
    return chat;
}

template <typename Scalar>
struct FactoredGroup {
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig;
    Scalar condition = Scalar(0);

    [[nodiscard]] MatrixX<Scalar> solve(const MatrixX<Scalar>& rhs) const {
        return eig.eigenvectors() *
               (eig.eigenvalues().cwiseInverse().asDiagonal() * (eig.eigenvectors().transpose() * rhs));
    }
    [[nodiscard]] VectorX<Scalar> solve(const VectorX<Scalar>& rhs) const {
        return eig.eigenvectors() *
               (eig.eigenvalues().cwiseInverse().asDiagonal() * (eig.eigenvectors().transpose() * rhs));
    }
};

/// Factor one estimator covariance, rejecting matrices that are indefinite
/// or conditioned beyond the cap (a redundant level in the group).
template <typename Scalar>
FactoredGroup<Scalar> factor_group(const MatrixX<Scalar>& chat, int k,
                                   const SolverOptions<Scalar>& opt) {
    FactoredGroup<Scalar> f;
    f.eig.compute(chat);
    const Scalar lmin = f.eig.eigenvalues().minCoeff();
    const Scalar lmax = f.eig.eigenvalues().maxCoeff();
    if (!(lmin > Scalar(0)))
        throw SingularGroupCovariance(
            k + 1, "matrix is not positive definite; a level in this group carries no "
                   "information independent of the others and should be removed");
    f.condition = lmax / lmin;
    if (f.condition > opt.condition_cap)
        throw SingularGroupCovariance(
            k + 1, "condition number " + std::to_string(static_cast<double>(f.condition)) +
                   " exceeds cap; remove the redundant level from this group");
    return f;
}

/// phi = sum_k P^(k) (Chat^(k))^-1 R^(k), assembled by scatter-add.
template <typename Scalar>
MatrixX<Scalar> assemble_phi(const CouplingStructure& s,
                             const std::vector<FactoredGroup<Scalar>>& fac) {
    MatrixX<Scalar> phi = MatrixX<Scalar>::Zero(s.levels, s.levels);
    for (int k = 0; k < s.group_count(); ++k) {
        const auto& g = s.groups[static_cast<std::size_t>(k)];
        const MatrixX<Scalar> inv =
            fac[static_cast<std::size_t>(k)].solve(MatrixX<Scalar>::Identity(g.size(), g.size()));
        for (std::size_t a = 0; a < g.size(); ++a)
            for (std::size_t b = 0; b < g.size(); ++b)
                phi(g[a] - 1, g[b] - 1) += inv(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
    return phi;
}

template <typename Scalar>
Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> factor_phi(const MatrixX<Scalar>& phi,
                                                          const SolverOptions<Scalar>& opt) {
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(phi);
    const Scalar lmin = eig.eigenvalues().minCoeff();
    const Scalar lmax = eig.eigenvalues().maxCoeff();
    if (!(lmin > Scalar(0)) || lmax / lmin > opt.condition_cap)
        throw SingularPhi("rank-deficient level coverage (smallest eigenvalue " +
                          std::to_string(static_cast<double>(lmin)) + ")");
    return eig;
}

/// Restore the no-bias identity sum_k P^(k) beta^(k) = alpha exactly by
/// spreading the (tiny) residual of the solve evenly over the groups that
/// share each level.
template <typename Scalar>
void restore_no_bias(const CouplingStructure& s, WeightSet<Scalar>& w) {
    VectorX<Scalar> resid = -w.alpha;
    for (int k = 0; k < s.group_count(); ++k)
        resid += extend_from_group(w.beta[static_cast<std::size_t>(k)], s, k);
    VectorX<Scalar> mult(s.levels);
    for (int l = 1; l <= s.levels; ++l) mult[l - 1] = Scalar(s.level_multiplicity(l));
    const VectorX<Scalar> corr = resid.cwiseQuotient(mult);
    for (int k = 0; k < s.group_count(); ++k)
        w.beta[static_cast<std::size_t>(k)] -= restrict_to_group(corr, s, k);
}

}  // namespace detail

/// Worst no-bias violation of a weight set: || sum_k P^(k) beta^(k) - alpha ||_inf.
template <typename Scalar>
Scalar no_bias_residual(const CouplingStructure& s, const WeightSet<Scalar>& w) {
    VectorX<Scalar> acc = -w.alpha;
    for (int k = 0; k < s.group_count(); ++k)
        acc += extend_from_group(w.beta[static_cast<std::size_t>(k)], s, k);
    return acc.template lpNorm<Eigen::Infinity>();
}

/// Minimum-variance unbiased weights by the closed form
///   beta^(k) = (Chat^(k))^-1 R^(k) phi^-1 alpha,
///   phi      = sum_k P^(k) (Chat^(k))^-1 R^(k),
/// where Chat^(k) is the covariance of group k's Monte Carlo estimator
/// (C^(k)/m^(k) when the moments are per-sample covariances).
template <typename Scalar = double>
WeightSet<Scalar> optimal_scalar_weights(const CouplingStructure& s,
                                         const GroupMomentSet<Scalar>& mom,
                                         const VectorX<Scalar>& alpha,
                                         const SolverOptions<Scalar>& opt = {}) {
    require_valid(s);
    detail::check_moments(s, mom);
    if (alpha.size() != s.levels) throw DimensionMismatch("alpha must have one entry per level");

    const auto chat = detail::estimator_covariances(s, mom);
    std::vector<detail::FactoredGroup<Scalar>> fac;
    fac.reserve(chat.size());
    for (int k = 0; k < s.group_count(); ++k)
        fac.push_back(detail::factor_group(chat[static_cast<std::size_t>(k)], k, opt));

    const MatrixX<Scalar> phi = detail::assemble_phi(s, fac);
    const auto phi_eig = detail::factor_phi(phi, opt);
    const VectorX<Scalar> u = phi_eig.eigenvectors() *
                              (phi_eig.eigenvalues().cwiseInverse().asDiagonal() *
                               (phi_eig.eigenvectors().transpose() * alpha));

    WeightSet<Scalar> w;
    w.alpha = alpha;
    w.beta.resize(chat.size());
    for (int k = 0; k < s.group_count(); ++k)
        w.beta[static_cast<std::size_t>(k)] =
            fac[static_cast<std::size_t>(k)].solve(restrict_to_group(u, s, k));
    detail::restore_no_bias(s, w);
    return w;
}

/// Same optimum through the full (p+L) x (p+L) saddle-point system
///   [ Sigma  -P^T ] [beta  ]   [0    ]
///   [ P       0   ] [lambda] = [alpha].
/// Kept as an independent route for cross-checking the closed form.
template <typename Scalar = double>
KktSolution<Scalar> kkt_solve(const CouplingStructure& s, const GroupMomentSet<Scalar>& mom,
                              const VectorX<Scalar>& alpha, const SolverOptions<Scalar>& opt = {}) {
    require_valid(s);
    detail::check_moments(s, mom);
    if (alpha.size() != s.levels) throw DimensionMismatch("alpha must have one entry per level");
    (void)opt;

    const auto chat = detail::estimator_covariances(s, mom);
    const int p = s.total_size();
    const int n = p + s.levels;

    MatrixX<Scalar> a = MatrixX<Scalar>::Zero(n, n);
    for (int k = 0; k < s.group_count(); ++k) {
        const int off = s.group_offset(k);
        const int pk = s.group_size(k);
        a.block(off, off, pk, pk) = chat[static_cast<std::size_t>(k)];
        const MatrixX<Scalar> pmat = extension_matrix<Scalar>(s, k);
        a.block(off, p, pk, s.levels) = -pmat.transpose();
        a.block(p, off, s.levels, pk) = pmat;
    }

    VectorX<Scalar> rhs = VectorX<Scalar>::Zero(n);
    rhs.tail(s.levels) = alpha;

    Eigen::FullPivLU<MatrixX<Scalar>> lu(a);
    if (!lu.isInvertible()) throw SingularSaddlePoint("Lagrangian system has no unique solution");
    const VectorX<Scalar> sol = lu.solve(rhs);

    KktSolution<Scalar> out;
    out.weights.alpha = alpha;
    out.weights.beta.resize(static_cast<std::size_t>(s.group_count()));
    for (int k = 0; k < s.group_count(); ++k)
        out.weights.beta[static_cast<std::size_t>(k)] = sol.segment(s.group_offset(k), s.group_size(k));
    out.multipliers = sol.tail(s.levels);
    return out;
}

/// Minimum reachable variance alpha^T phi^-1 alpha for the given allocation.
template <typename Scalar = double>
Scalar mlblue_variance(const CouplingStructure& s, const GroupMomentSet<Scalar>& mom,
                       const VectorX<Scalar>& alpha, const SolverOptions<Scalar>& opt = {}) {
    require_valid(s);
    detail::check_moments(s, mom);
    if (alpha.size() != s.levels) throw DimensionMismatch("alpha must have one entry per level");

    const auto chat = detail::estimator_covariances(s, mom);
    std::vector<detail::FactoredGroup<Scalar>> fac;
    fac.reserve(chat.size());
    for (int k = 0; k < s.group_count(); ++k)
        fac.push_back(detail::factor_group(chat[static_cast<std::size_t>(k)], k, opt));
    const MatrixX<Scalar> phi = detail::assemble_phi(s, fac);
    const auto phi_eig = detail::factor_phi(phi, opt);
    const VectorX<Scalar> u = phi_eig.eigenvectors() *
                              (phi_eig.eigenvalues().cwiseInverse().asDiagonal() *
                               (phi_eig.eigenvectors().transpose() * alpha));
    return alpha.dot(u);
}

/// Variance of an arbitrary (not necessarily optimal) weight set:
/// sum_k beta^(k)T Chat^(k) beta^(k).
template <typename Scalar = double>
Scalar weight_variance(const CouplingStructure& s, const GroupMomentSet<Scalar>& mom,
                       const WeightSet<Scalar>& w) {
    detail::check_moments(s, mom);
    const auto chat = detail::estimator_covariances(s, mom);
    Scalar v = Scalar(0);
    for (int k = 0; k < s.group_count(); ++k) {
        const auto& b = w.beta[static_cast<std::size_t>(k)];
        if (b.size() != s.group_size(k)) throw DimensionMismatch("weight vector size");
        v += b.dot(chat[static_cast<std::size_t>(k)] * b);
    }
    return v;
}

/// Combine per-group Monte Carlo statistics: sum_k beta^(k) . v^(k).
template <typename Scalar = double>
Scalar apply_scalar_estimator(const WeightSet<Scalar>& w,
                              const std::vector<VectorX<Scalar>>& group_values) {
    if (group_values.size() != w.beta.size())
        throw DimensionMismatch("one value vector per coupling group is required");
    Scalar acc = Scalar(0);
    for (std::size_t k = 0; k < w.beta.size(); ++k) {
        if (group_values[k].size() != w.beta[k].size())
            throw DimensionMismatch("group " + std::to_string(k + 1) + " value vector size");
        acc += w.beta[k].dot(group_values[k]);
    }
    return acc;
}

}  // namespace mlblue
