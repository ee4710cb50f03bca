#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dcn/objectives.hpp"

using namespace dcn;

namespace {

Matrix spd3() {
    Matrix A(3, 3);
    A << 4, 1, 0,
         1, 3, 1,
         0, 1, 2;
    return A;
}

Vector randn(std::mt19937_64& rng, Index n, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = nd(rng);
    return v;
}

// log(1 + exp(t)) written out directly, fine for moderate t
double naive_softplus(double t) { return std::log(1.0 + std::exp(t)); }

}  // namespace

TEST(Quadratic, ValueGradientHessianMatchClosedForm) {
    const Matrix A = spd3();
    const Vector b = Vector::LinSpaced(3, -1.0, 1.0);
    const auto q = LocalObjective::quadratic(A, b, 2.5);
    const Vector x = Vector::LinSpaced(3, 0.5, 1.5);
    double v = 2.5;
    for (int i = 0; i < 3; ++i) {
        v += b(i) * x(i);
        for (int j = 0; j < 3; ++j) v += 0.5 * x(i) * A(i, j) * x(j);
    }
    EXPECT_NEAR(q.value(x), v, 1e-13);
    EXPECT_LT((q.gradient(x) - (A * x + b)).norm(), 1e-13);
    EXPECT_EQ(q.hessian(x), A);
}

TEST(Quadratic, ConstantsAreExtremeEigenvalues) {
    const Matrix A = Vector(Vector::LinSpaced(4, 0.5, 8.0)).asDiagonal();
    const auto q = LocalObjective::quadratic(A, Vector::Zero(4));
    EXPECT_DOUBLE_EQ(q.constants().L1, 8.0);
    EXPECT_DOUBLE_EQ(q.constants().mu, 0.5);
    EXPECT_EQ(q.constants().L2, 0.0);
}

TEST(Quadratic, RejectsAsymmetricOrIndefiniteInput) {
    Matrix A = spd3();
    A(0, 2) = 1.0;
    EXPECT_THROW(LocalObjective::quadratic(A, Vector::Zero(3)), ArgumentError);
    EXPECT_THROW(LocalObjective::quadratic(-spd3(), Vector::Zero(3)), ArgumentError);
    EXPECT_THROW(LocalObjective::quadratic(spd3(), Vector::Zero(2)), ArgumentError);
}

TEST(Logistic, ValueAndGradientMatchDirectSums) {
    std::mt19937_64 rng(1);
    Matrix F(6, 3);
    for (Index j = 0; j < 6; ++j) F.row(j) = randn(rng, 3).transpose();
    Vector y(6);
    y << 1, -1, 1, 1, -1, -1;
    const double mu = 0.3;
    const auto obj = LocalObjective::logistic(F, y, mu);
    const Vector x = randn(rng, 3);
    double v = 0.5 * mu * x.squaredNorm();
    Vector g = mu * x;
    for (Index j = 0; j < 6; ++j) {
        const double t = -y(j) * F.row(j).dot(x);
        v += naive_softplus(t);
        g += -y(j) * (std::exp(t) / (1.0 + std::exp(t))) * F.row(j).transpose();
    }
    EXPECT_NEAR(obj.value(x), v, 1e-12);
    EXPECT_LT((obj.gradient(x) - g).norm(), 1e-12);
}

TEST(Logistic, HessianKeepsRelativeAccuracyAtLargeMargins) {
    Matrix F(1, 1);
    F << 40.0;
    const auto obj = LocalObjective::logistic(F, Vector::Ones(1), 0.0);
    const Vector x = Vector::Ones(1);
    const double e = std::exp(-40.0);
    const double expected = 1600.0 * e / ((1.0 + e) * (1.0 + e));
    EXPECT_NEAR(obj.hessian(x)(0, 0) / expected, 1.0, 1e-12);
    EXPECT_GT(obj.link_curvatures(x)(0), 0.0);
}

TEST(Logistic, ConstantsFollowFeatureNorms) {
    Matrix F(2, 2);
    F << 3, 4,
         0, 1;
    const auto obj = LocalObjective::logistic(F, Vector::Ones(2), 0.2);
    EXPECT_NEAR(obj.constants().L2, (125.0 + 1.0) / (6.0 * std::sqrt(3.0)), 1e-12);
    EXPECT_EQ(obj.constants().mu, 0.2);
    Eigen::SelfAdjointEigenSolver<Matrix> es(F.transpose() * F);
    EXPECT_NEAR(obj.constants().L1, 0.2 + 0.25 * es.eigenvalues().maxCoeff(), 1e-12);
}

TEST(Logistic, RejectsBadLabelsAndRegularizer) {
    Matrix F = Matrix::Ones(2, 2);
    Vector y(2);
    y << 1, 0;
    EXPECT_THROW(LocalObjective::logistic(F, y, 0.1), ArgumentError);
    EXPECT_THROW(LocalObjective::logistic(F, Vector::Ones(2), -1.0), ArgumentError);
    EXPECT_THROW(LocalObjective::logistic(F, Vector::Ones(3), 0.1), ArgumentError);
}

TEST(FiniteDifferences, AgreeForBothFamilies) {
    std::mt19937_64 rng(2);
    for (auto fam : {SuiteFamily::quadratic, SuiteFamily::logistic}) {
        SuiteSpec spec;
        spec.family = fam;
        spec.m = 3;
        spec.d = 4;
        const auto suite = make_suite(spec, 5);
        for (std::size_t i = 0; i < suite.size(); ++i) {
            const auto r = finite_difference_check(suite[i], randn(rng, 4), 1e-5);
            EXPECT_LT(r.grad_rel_err, 1e-6);
            EXPECT_LT(r.hess_rel_err, 1e-5);
        }
    }
}

TEST(Objective, DimensionMismatchThrows) {
    const auto q = LocalObjective::quadratic(spd3(), Vector::Zero(3));
    EXPECT_THROW(q.value(Vector::Zero(2)), ArgumentError);
}

TEST(Suite, AveragesAndExtremes) {
    const Matrix A1 = Vector(Vector::LinSpaced(2, 1.0, 2.0)).asDiagonal();
    const Matrix A2 = Vector(Vector::LinSpaced(2, 3.0, 6.0)).asDiagonal();
    const ProblemSuite s({LocalObjective::quadratic(A1, Vector::Ones(2)), LocalObjective::quadratic(A2, -Vector::Ones(2))});
    EXPECT_DOUBLE_EQ(s.L1_bar(), 4.0);
    EXPECT_DOUBLE_EQ(s.mu_bar(), 2.0);
    EXPECT_DOUBLE_EQ(s.L1_max(), 6.0);
    EXPECT_DOUBLE_EQ(s.mu_hat(), 1.0);
    const Vector x = Vector::Constant(2, 0.7);
    EXPECT_NEAR(s.value(x), 0.5 * (s[0].value(x) + s[1].value(x)), 1e-15);
    EXPECT_LT((s.hessian(x) - 0.5 * (A1 + A2)).norm(), 1e-15);
    EXPECT_FALSE(s.is_glm());
}

TEST(MakeSuite, QuadraticSpectrumHitsRequestedRange) {
    SuiteSpec spec;
    spec.m = 5;
    spec.d = 6;
    spec.mu = 0.1;
    spec.L1 = 100.0;
    const auto s = make_suite(spec, 3);
    for (std::size_t i = 0; i < s.size(); ++i) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(s[i].hessian(Vector::Zero(6)));
        EXPECT_NEAR(es.eigenvalues().minCoeff(), 0.1, 1e-9);
        EXPECT_NEAR(es.eigenvalues().maxCoeff(), 100.0, 1e-9);
    }
}

TEST(MakeSuite, ZeroHeterogeneityGivesIdenticalNodes) {
    SuiteSpec spec;
    spec.heterogeneity = 0.0;
    const auto s = make_suite(spec, 4);
    const Vector x = Vector::Ones(spec.d);
    for (std::size_t i = 1; i < s.size(); ++i) {
        EXPECT_LT((s[i].gradient(x) - s[0].gradient(x)).norm(), 1e-12);
    }
}

TEST(MakeSuite, SameSeedSameSuite) {
    SuiteSpec spec;
    spec.family = SuiteFamily::logistic;
    const auto a = make_suite(spec, 9), b = make_suite(spec, 9), c = make_suite(spec, 10);
    EXPECT_EQ(a[1].as_logistic()->features, b[1].as_logistic()->features);
    EXPECT_NE(a[1].as_logistic()->features, c[1].as_logistic()->features);
}

TEST(MakeSuite, RejectsSingleNode) {
    SuiteSpec spec;
    spec.m = 1;
    EXPECT_THROW(make_suite(spec, 1), ConfigError);
}

TEST(ReferenceSolve, QuadraticMatchesLinearSolve) {
    SuiteSpec spec;
    spec.m = 4;
    spec.d = 5;
    const auto s = make_suite(spec, 11);
    Matrix A = Matrix::Zero(5, 5);
    Vector b = Vector::Zero(5);
    for (std::size_t i = 0; i < s.size(); ++i) {
        A += s[i].as_quadratic()->A / 4.0;
        b += s[i].as_quadratic()->b / 4.0;
    }
    const Vector x_star = -A.ldlt().solve(b);
    const Vector x0 = Vector::Zero(5);
    const auto ref = reference_solve(s, 1e-12, x0);
    EXPECT_LT((ref.x_star - x_star).norm(), 1e-10);
    EXPECT_NEAR(ref.f_star, s.value(x_star), 1e-12);
    EXPECT_NEAR(ref.R, x_star.norm(), 1e-10);
    EXPECT_GE(ref.D, 2.0 * ref.R - 1e-12);
    double sg = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) sg += (s[i].as_quadratic()->A * x_star + s[i].as_quadratic()->b).squaredNorm();
    EXPECT_NEAR(ref.zeta_g, std::sqrt(sg / 4.0), 1e-9);
}

TEST(ReferenceSolve, ConvergesOnNearlySeparableData) {
    SuiteSpec spec;
    spec.family = SuiteFamily::logistic;
    spec.m = 4;
    spec.d = 5;
    spec.samples_per_node = 20;
    spec.mu_reg = 1e-4;
    spec.label_noise = 0.0;
    const auto s = make_suite(spec, 704);
    const auto ref = reference_solve(s, 1e-11, Vector::Zero(5));
    EXPECT_LE(s.gradient(ref.x_star).norm(), 1e-11);
    EXPECT_GT(ref.x_star.norm(), 10.0);
}

TEST(Serialization, SuiteRoundTripIsExact) {
    for (auto fam : {SuiteFamily::quadratic, SuiteFamily::logistic}) {
        SuiteSpec spec;
        spec.family = fam;
        const auto s = make_suite(spec, 21);
        const auto back = suite_from_json(nlohmann::json::parse(suite_to_json(s).dump()));
        ASSERT_EQ(back.size(), s.size());
        const Vector x = Vector::LinSpaced(spec.d, -1.0, 1.0);
        EXPECT_EQ(back.value(x), s.value(x));
        EXPECT_EQ(back.gradient(x), s.gradient(x));
        EXPECT_EQ(back.L2_bar(), s.L2_bar());
    }
}
