#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "mlblue/blue.hpp"
#include "mlblue/coupling.hpp"
#include "mlblue/rng.hpp"
#include "oracles.hpp"

using mlblue::CouplingStructure;
using mlblue::GroupMomentSet;
using mlblue::MomentKind;
using mlblue::WeightSet;

namespace {

CouplingStructure fig1_structure() {
    CouplingStructure s;
    s.levels = 3;
    s.groups = {{1}, {1, 2}, {2, 3}};
    s.m = {4, 2, 8};
    return s;
}

GroupMomentSet<> fig1_moments() {
    GroupMomentSet<> mom;
    mom.kind = MomentKind::PerSampleCovariance;
    Eigen::MatrixXd c1(1, 1), c2(2, 2), c3(2, 2);
    c1 << 2.5;
    c2 << 1.2, 0.4, 0.4, 0.9;
    c3 << 0.8, -0.3, -0.3, 1.1;
    mom.cov = {c1, c2, c3};
    return mom;
}

Eigen::VectorXd unit_alpha(int levels) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(levels);
    a[levels - 1] = 1.0;
    return a;
}

GroupMomentSet<> random_moments(const CouplingStructure& s, mlblue::rng::Stream& stream) {
    GroupMomentSet<> mom;
    mom.kind = MomentKind::PerSampleCovariance;
    for (int k = 0; k < s.group_count(); ++k) mom.cov.push_back(oracles::random_spd(s.group_size(k), stream));
    return mom;
}

}  // namespace

TEST_CASE("frozen three-level instance matches the reference solve") {
    // Reference values from an independent dense solve of the stationarity
    // system for this exact instance.
    const auto s = fig1_structure();
    const auto mom = fig1_moments();
    const Eigen::VectorXd alpha = unit_alpha(3);

    const WeightSet<> w = mlblue::optimal_scalar_weights(s, mom, alpha);
    CHECK(w.beta[0][0] == doctest::Approx(-0.01183431952662722).epsilon(1e-12));
    CHECK(w.beta[1][0] == doctest::Approx(0.01183431952662722).epsilon(1e-12));
    CHECK(w.beta[1][1] == doctest::Approx(-0.07248520710059171).epsilon(1e-12));
    CHECK(w.beta[2][0] == doctest::Approx(0.07248520710059171).epsilon(1e-12));
    CHECK(w.beta[2][1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(!w.biased);

    const double var = mlblue::mlblue_variance(s, mom, alpha);
    CHECK(var == doctest::Approx(0.13478180473372783).epsilon(1e-12));

    const auto kkt = mlblue::kkt_solve(s, mom, alpha);
    CHECK(kkt.multipliers[0] == doctest::Approx(-0.00739644970414201).epsilon(1e-12));
    CHECK(kkt.multipliers[1] == doctest::Approx(-0.03025147928994083).epsilon(1e-12));
    CHECK(kkt.multipliers[2] == doctest::Approx(0.13478180473372783).epsilon(1e-12));
}

TEST_CASE("single full group forces beta = alpha") {
    CouplingStructure s;
    s.levels = 3;
    s.groups = {{1, 2, 3}};
    s.m = {5};
    mlblue::rng::Stream stream(11);
    GroupMomentSet<> mom;
    mom.cov = {oracles::random_spd(3, stream)};
    Eigen::VectorXd alpha(3);
    alpha << 0.25, -1.0, 2.0;

    const auto w = mlblue::optimal_scalar_weights(s, mom, alpha);
    CHECK((w.beta[0] - alpha).lpNorm<Eigen::Infinity>() == 0.0);  // exact restoration

    const auto kkt = mlblue::kkt_solve(s, mom, alpha);
    CHECK((kkt.weights.beta[0] - alpha).lpNorm<Eigen::Infinity>() < 1e-12);
    // lambda = phi^-1 alpha = (C/m) alpha for the single full group
    const Eigen::VectorXd expected_lambda = (mom.cov[0] / 5.0) * alpha;
    CHECK((kkt.multipliers - expected_lambda).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("plain Monte Carlo case") {
    CouplingStructure s;
    s.levels = 1;
    s.groups = {{1}};
    s.m = {16};
    GroupMomentSet<> mom;
    Eigen::MatrixXd c(1, 1);
    c << 3.7;
    mom.cov = {c};
    Eigen::VectorXd alpha(1);
    alpha << 1.0;

    const auto w = mlblue::optimal_scalar_weights(s, mom, alpha);
    CHECK(w.beta[0][0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(mlblue::mlblue_variance(s, mom, alpha) == doctest::Approx(3.7 / 16.0).epsilon(1e-14));
}

TEST_CASE("closed form agrees with the KKT route and the projection oracle") {
    mlblue::rng::Stream stream(2718);
    for (int rep = 0; rep < 50; ++rep) {
        const auto s = oracles::random_structure(4, 5, stream);
        const auto mom = random_moments(s, stream);
        const Eigen::VectorXd alpha = unit_alpha(s.levels);

        const auto w = mlblue::optimal_scalar_weights(s, mom, alpha);
        const auto kkt = mlblue::kkt_solve(s, mom, alpha);

        std::vector<Eigen::MatrixXd> chat;
        for (int k = 0; k < s.group_count(); ++k)
            chat.push_back(mom.cov[static_cast<std::size_t>(k)] / static_cast<double>(s.m[static_cast<std::size_t>(k)]));
        const Eigen::VectorXd ref = oracles::dense_projection_weights(s, chat, alpha);

        int off = 0;
        for (int k = 0; k < s.group_count(); ++k) {
            for (int j = 0; j < s.group_size(k); ++j) {
                const double scale = std::max(1.0, std::abs(ref[off + j]));
                CHECK(std::abs(w.beta[static_cast<std::size_t>(k)][j] - ref[off + j]) / scale < 1e-10);
                CHECK(std::abs(kkt.weights.beta[static_cast<std::size_t>(k)][j] - ref[off + j]) / scale < 1e-10);
            }
            off += s.group_size(k);
        }

        CHECK(mlblue::no_bias_residual(s, w) <= 1e-10);
        CHECK(mlblue::no_bias_residual(s, kkt.weights) <= 1e-10);
    }
}

TEST_CASE("variance forms agree at the optimum") {
    mlblue::rng::Stream stream(31);
    for (int rep = 0; rep < 20; ++rep) {
        const auto s = oracles::random_structure(4, 5, stream);
        const auto mom = random_moments(s, stream);
        const Eigen::VectorXd alpha = unit_alpha(s.levels);
        const auto w = mlblue::optimal_scalar_weights(s, mom, alpha);
        const double v_phi = mlblue::mlblue_variance(s, mom, alpha);
        const double v_beta = mlblue::weight_variance(s, mom, w);
        CHECK(std::abs(v_phi - v_beta) / std::max(1e-300, std::abs(v_phi)) < 1e-10);
    }
}

TEST_CASE("optimality against random unbiased perturbations") {
    mlblue::rng::Stream stream(57);
    const auto s = fig1_structure();
    const auto mom = fig1_moments();
    const Eigen::VectorXd alpha = unit_alpha(3);
    const auto w = mlblue::optimal_scalar_weights(s, mom, alpha);
    const double v_opt = mlblue::weight_variance(s, mom, w);

    for (int rep = 0; rep < 100; ++rep) {
        // random delta projected onto the null space of P
        Eigen::VectorXd delta = stream.normal_vector(s.total_size());
        Eigen::MatrixXd pmat = Eigen::MatrixXd::Zero(s.levels, s.total_size());
        int off = 0;
        for (int k = 0; k < s.group_count(); ++k) {
            for (int j = 0; j < s.group_size(k); ++j)
                pmat(s.groups[静_cast<std::size_t>(k)][static_cast<std::size_t>(j)] - 1, off + j) = 1.0;
            off += s.group_size(k);
        }
        delta -= pmat.transpose() * (pmat * pmat.transpose()).ldlt().solve(pmat * delta);

        WeightSet<> перturbed = w;
        off = 0;
        for (int k = 0; k < s.group_count(); ++k) {
            perturbed.beta[static_cast<std::size_t>(k)] += delta.segment(off, s.group_size(k));
            off += s.group_size(k);
        }
        CHECK(mlblue::weight_variance(s, mom, perturbed) >= v_opt - 1e-12);
    }
}

TEST_CASE("MLMC telescoping weights are admissible but not better") {
    const auto s = fig1_structure();
    const auto mom = fig1_moments();
    const Eigen::VectorXd alpha = unit_alpha(3);

    WeightSet<> mlmc;
    mlmc.alpha = alpha;
    mlmc.beta = mlblue::mlmc_weights(s);
    CHECK(mlblue::no_bias_residual(s, mlmc) == 0.0);

    const double v_mlmc = mlblue::weight_variance(s, mom, mlmc);
    const double v_blue = mlblue::mlblue_variance(s, mom, alpha);
    CHECK(v_blue <= v_mlmc + 1e-14);
}

TEST_CASE("doubling all sample counts halves the variance") {
    auto s = fig1_structure();
    const auto mom = fig1_moments();
    const Eigen::VectorXd alpha = unit_alpha(3);
    const double v1 = mlblue::mlblue_variance(s, mom, alpha);
    for (auto& mk : s.m) mk *= 2;
    const double v2 = mlblue::mlblue_variance(s, mom, alpha);
    CHECK(v2 == doctest::Approx(v1 / 2.0).epsilon(1e-12));
}

TEST_CASE("apply_scalar_estimator") {
    WeightSet<> w;
    w.alpha = Eigen::VectorXd::Ones(1);
    w.beta = {Eigen::VectorXd::Ones(1)};
    CHECK(mlblue::apply_scalar_estimator(w, {Eigen::VectorXd::Constant(1, 3.5)}) == 3.5);

    const auto s = mlblue::mlmc_structure(3);
    WeightSet<> mlmc;
    mlmc.alpha = unit_alpha(3);
    mlmc.beta = mlblue::mlmc_weights(s);
    Eigen::VectorXd v1(1), v2(2), v3(2);
    v1 << 1.0;
    v2 << 2.0, 4.0;
    v3 << 8.0, 16.0;
    // a - b + c - d + e
    CHECK(mlblue::apply_scalar_estimator(mlmc, {v1, v2, v3}) == doctest::Approx(1.0 - 2.0 + 4.0 - 8.0 + 16.0));

    CHECK(mlblue::apply_scalar_estimator(mlmc, {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(2),
                                                Eigen::VectorXd::Zero(2)}) == 0.0);
}

TEST_CASE("singular group covariance is rejected with the group index") {
    CouplingStructure s;
    s.levels = 2;
    s.groups = {{1, 2}};
    s.m = {4};
    GroupMomentSet<> mom;
    Eigen::MatrixXd c(2, 2);
    c << 1.0, 1.0, 1.0, 1.0;  // rank one: level 2 duplicates level 1
    mom.cov = {c};
    Eigen::VectorXd alpha(2);
    alpha << 0.0, 1.0;
    CHECK_THROWS_AS(mlblue::optimal_scalar_weights(s, mom, alpha), mlblue::SingularGroupCovariance);
    try {
        mlblue::optimal_scalar_weights(s, mom, alpha);
    } catch (const mlblue::SingularGroupCovariance& e) {
        CHECK(e.group() == 1);
    }
}

TEST_CASE("m = 0 is rejected for per-sample moments") {
    auto s = fig1_structure();
    s.m[1] = 0;
    CHECK_THROWS_AS(mlblue::optimal_scalar_weights(s, fig1_moments(), unit_alpha(3)),
                    std::invalid_argument);
}

TEST_CASE("estimator-covariance moments skip the 1/m scaling") {
    // Feeding C/m as estimator covariances must match the per-sample path.
    const auto s = fig1_structure();
    const auto mom = fig1_moments();
    GroupMomentSet<> pre;
    pre.kind = MomentKind::EstimatorCovariance;
    for (int k = 0; k < s.group_count(); ++k)
        pre.cov.push_back(mom.cov[static_cast<std::size_t>(k)] / static_cast<double>(s.m[static_cast<std::size_t>(k)]));
    const Eigen::VectorXd alpha = unit_alpha(3);
    const auto w1 = mlblue::optimal_scalar_weights(s, mom, alpha);
    const auto w2 = mlblue::optimal_scalar_weights(s, pre, alpha);
    for (int k = 0; k < s.group_count(); ++k)
        CHECK((w1.beta[static_cast<std::size_t>(k)] - w2.beta[static_cast<std::size_t>(k)]).lpNorm<Eigen::Infinity>() < 1e-13);
}

TEST_CASE("solver is generic over the scalar type") {
    CouplingStructure s;
    s.levels = 2;
    s.groups = {{1}, {1, 2}};
    s.m = {8, 4};
    GroupMomentSet<long double> mom;
    mom.kind = MomentKind::PerSampleCovariance;
    Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> c1(1, 1), c2(2, 2);
    c1 << 2.0L;
    c2 << 1.5L, 0.5L, 0.5L, 1.0L;
    mom.cov = {c1, c2};
    Eigen::Vector<long double, Eigen::Dynamic> alpha(2);
    alpha << 0.0L, 1.0L;
    const auto w = mlblue::optimal_scalar_weights<long double>(s, mom, alpha);
    CHECK(mlblue::no_bias_residual<long double>(s, w) <= 1e-15L);
}
