#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlblue/errors.hpp"

namespace mlblue {

/// Coupling structure of a multilevel estimator: L fidelity levels and K
/// coupling groups. Group k couples the levels in `groups[k]` (1-based,
/// sorted), runs `m[k]` coupled simulations, each costing `costs[k]`.
struct CouplingStructure {
    int levels = 0;
    std::vector<std::vector<int>> groups;
    std::vector<std::int64_t> m;
    std::vector<double> costs;  // empty when costs are not specified

    [[nodiscard]] int group_count() const { return static_cast<int>(groups.size()); }

    /// p^(k): number of levels coupled in group k (0-based k).
    [[nodiscard]] int group_size(int k) const { return static_cast<int>(groups[k].size()); }

    /// p = sum of all group sizes.
    [[nodiscard]] int total_size() const {
        int p = 0;
        for (const auto& g : groups) p += static_cast<int>(g.size());
        return p;
    }

    /// Offset of group k inside a stacked length-p vector.
    [[nodiscard]] int group_offset(int k) const {
        int off = 0;
        for (int j = 0; j < k; ++j) off += group_size(j);
        return off;
    }

    [[nodiscard]] bool group_contains(int k, int level) const {
        const auto& g = groups[k];
        return std::binary_search(g.begin(), g.end(), level);
    }

    /// Number of groups coupling a given 1-based level.
    [[nodiscard]] int level_multiplicity(int level) const {
        int c = 0;
        for (int k = 0; k < group_count(); ++k) c += group_contains(k, level) ? 1 : 0;
        return c;
    }
};

/// Diagnose the structural invariants. Returns one message per violation;
/// empty means valid. Nothing is thrown: callers decide what is fatal.
inline std::vector<std::string> validate(const CouplingStructure& s) {
    std::vector<std::string> bad;
    if (s.levels < 1) bad.push_back("level count must be >= 1");
    if (s.groups.empty()) bad.push_back("at least one coupling group is required");

    for (std::size_t k = 0; k < s.groups.size(); ++k) {
        const auto& g = s.groups[k];
        if (g.empty()) bad.push_back("group " + std::to_string(k + 1) + " is empty");
        if (!std::is_sorted(g.begin(), g.end()))
            bad.push_back("group " + std::to_string(k + 1) + " levels are not sorted");
        if (std::adjacent_find(g.begin(), g.end()) != g.end())
            bad.push_back("group " + std::to_string(k + 1) + " repeats a level");
        for (int level : g)
            if (level < 1 || level > s.levels)
                bad.push_back("group " + std::to_string(k + 1) + " references level " +
                              std::to_string(level) + " outside 1.." + std::to_string(s.levels));
    }

    for (std::size_t k = 0; k < s.groups.size(); ++k)
        for (std::size_t j = k + 1; j < s.groups.size(); ++j)
            if (s.groups[k] == s.groups[j])
                bad.push_back("groups " + std::to_string(k + 1) + " and " + std::to_string(j + 1) +
                              " are identical (groups must be pairwise distinct)");

    std::vector<bool> covered(static_cast<std::size_t>(std::max(s.levels, 0)) + 1, false);
    for (const auto& g : s.groups)
        for (int level : g)
            if (level >= 1 && level <= s.levels) covered[static_cast<std::size_t>(level)] = true;
    for (int level = 1; level <= s.levels; ++level)
        if (!covered[static_cast<std::size_t>(level)])
            bad.push_back("level " + std::to_string(level) + " is not covered by any group");

    if (!s.m.empty() && s.m.size() != s.groups.size())
        bad.push_back("sample-count list length differs from group count");
    for (std::size_t k = 0; k < s.m.size(); ++k)
        if (s.m[k] < 0) bad.push_back("group " + std::to_string(k + 1) + " has negative sample count");

    if (!s.costs.empty() && s.costs.size() != s.groups.size())
        bad.push_back("cost list length differs from group count");
    for (std::size_t k = 0; k < s.costs.size(); ++k)
        if (!(s.costs[k] > 0.0)) bad.push_back("group " + std::to_string(k + 1) + " cost must be positive");

    return bad;
}

inline void require_valid(const CouplingStructure& s) {
    auto bad = validate(s);
    if (!bad.empty()) throw std::invalid_argument("invalid coupling structure: " + bad.front());
}

/// R^(k): keep the entries of a per-level vector at the levels of group k,
/// in sorted level order.
template <typename Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic>
restrict_to_group(const Eigen::MatrixBase<Derived>& x, const CouplingStructure& s, int k) {
    if (k < 0 || k >= s.group_count()) throw std::out_of_range("group index out of range");
    if (x.size() != s.levels) throw DimensionMismatch("expected a length-L vector");
    const auto& g = s.groups[k];
    Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> out(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) out[static_cast<Eigen::Index>(j)] = x[g[j] - 1];
    return out;
}

/// P^(k) = (R^(k))^T: scatter a per-group vector back to level space, zeros
/// elsewhere. restrict_to_group(extend_from_group(y)) == y.
template <typename Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic>
extend_from_group(const Eigen::MatrixBase<Derived>& y, const CouplingStructure& s, int k) {
    if (k < 0 || k >= s.group_count()) throw std::out_of_range("group index out of range");
    const auto& g = s.groups[k];
    if (static_cast<std::size_t>(y.size()) != g.size())
        throw DimensionMismatch("expected a length-p^(k) vector");
    Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> out =
        Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic>::Zero(s.levels);
    for (std::size_t j = 0; j < g.size(); ++j) out[g[j] - 1] = y[static_cast<Eigen::Index>(j)];
    return out;
}

/// Dense L x p^(k) extension matrix P^(k) (its transpose is the selection R^(k)).
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
extension_matrix(const CouplingStructure& s, int k) {
    const auto& g = s.groups[k];
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> p =
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(s.levels, g.size());
    for (std::size_t j = 0; j < g.size(); ++j) p(g[j] - 1, static_cast<Eigen::Index>(j)) = Scalar(1);
    return p;
}

/// The MLMC coupling pattern: groups {1}, {1,2}, ..., {L-1,L}.
inline CouplingStructure mlmc_structure(int levels) {
    CouplingStructure s;
    s.levels = levels;
    s.groups.push_back({1});
    for (int l = 2; l <= levels; ++l) s.groups.push_back({l - 1, l});
    s.m.assign(s.groups.size(), 0);
    return s;
}

inline bool is_mlmc_pattern(const CouplingStructure& s) {
    if (s.group_count() != s.levels) return false;
    if (s.groups[0] != std::vector<int>{1}) return false;
    for (int l = 2; l <= s.levels; ++l)
        if (s.groups[static_cast<std::size_t>(l) - 1] != std::vector<int>{l - 1, l}) return false;
    return true;
}

/// Telescoping MLMC weights on the MLMC pattern: +1 on the fine level of
/// each group, -1 on the coarse one.
template <typename Scalar = double>
std::vector<Eigen::Vector<Scalar, Eigen::Dynamic>> mlmc_weights(const CouplingStructure& s) {
    if (!is_mlmc_pattern(s)) throw std::invalid_argument("structure is not the MLMC pattern");
    std::vector<Eigen::Vector<Scalar, Eigen::Dynamic>> beta(s.groups.size());
    beta[0] = Eigen::Vector<Scalar, Eigen::Dynamic>::Constant(1, Scalar(1));
    for (std::size_t k = 1; k < s.groups.size(); ++k) {
        beta[k].resize(2);
        beta[k] << Scalar(-1), Scalar(1);
    }
    return beta;
}

}  // namespace mlblue
