#include <gtest/gtest.h>

#include <cmath>

#include "dcn/dcn.hpp"

using namespace dcn;

namespace {

ProblemSuite scalar_pair() {
    return ProblemSuite({LocalObjective::quadratic(Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 2.0), 1.0),
                         LocalObjective::quadratic(Matrix::Constant(1, 1, 8.0), Vector::Constant(1, -4.0), 1.0)});
}

ProblemSuite logistic_suite(int m = 6, int d = 4, double mu_reg = 0.1) {
    SuiteSpec spec;
    spec.family = SuiteFamily::logistic;
    spec.m = m;
    spec.d = d;
    spec.mu_reg = mu_reg;
    return make_suite(spec, 41);
}

Matrix replicate(const Vector& x, std::size_t m) { return x.transpose().replicate(static_cast<Index>(m), 1); }

DcnParams exact_params(double L, int N) {
    DcnParams p;
    p.regime = Regime::strongly_convex;
    p.gamma = 1.0;
    p.Lreg = L;
    p.N = N;
    p.eps = 1e-10;
    p.rounds = RoundPlan{1, 1, 1};
    return p;
}

}  // namespace

TEST(DcnSchedule, StronglyConvexRateAndIterationCount) {
    const auto s = logistic_suite();
    const Vector x0 = Vector::Zero(4);
    const auto ref = reference_solve(s, 1e-12, x0);
    const double L = s.L2_bar(), eps = 1e-6;
    const auto p = schedule_strongly_convex(ref, s, eps, L);
    const double alpha = std::min(0.5, std::sqrt(3.0 * s.mu_bar() / (16.0 * 2.0 * L * ref.D)));
    EXPECT_NEAR(p.alpha, alpha, 1e-15);
    const double gap0 = s.value(x0) - ref.f_star;
    EXPECT_EQ(p.N, static_cast<int>(std::ceil(std::log(2.0 * gap0 / eps) / alpha)) - 1);
    EXPECT_EQ(p.steps(), p.N + 1);
    EXPECT_DOUBLE_EQ(p.gamma, 1.0 / ref.D);
    EXPECT_NO_THROW(validate(p, s));
}

TEST(DcnSchedule, ConvexIterationCount) {
    const auto s = logistic_suite(4, 3, 0.0);
    const auto ref = reference_solve(s, 1e-12, Vector::Zero(3));
    const double L = 2.0 * s.L2_bar(), eps = 1e-4;
    const auto p = schedule_convex(ref, s, eps, L);
    const double LL = L + s.L2_bar();
    const double D3 = ref.D * ref.D * ref.D;
    ASSERT_LE(eps, 12.0 * LL * D3);
    EXPECT_EQ(p.N, static_cast<int>(std::ceil(std::sqrt(108.0 * LL * D3 / eps))) - 2);
    EXPECT_NEAR(p.gamma, std::sqrt(double(p.N + 1) * (p.N + 2)) / (6.0 * ref.D), 1e-12);
    EXPECT_NO_THROW(validate(p, s));
}

TEST(DcnSchedule, SolvedStartAndInvalidInputs) {
    const auto s = scalar_pair();
    const auto at_opt = reference_solve(s, 1e-14, Vector::Constant(1, 0.2));
    EXPECT_TRUE(schedule_strongly_convex(at_opt, s, 1e-6, 1.0).solved);
    EXPECT_EQ(schedule_strongly_convex(at_opt, s, 1e-6, 1.0).steps(), 0);
    const auto ref = reference_solve(s, 1e-14, Vector::Constant(1, 3.0));
    EXPECT_THROW(schedule_convex(ref, s, 1e-3, 0.0), ConfigError);
    EXPECT_THROW(schedule_strongly_convex(ref, s, 0.0, 1.0), ArgumentError);
    const auto lg = logistic_suite();
    const auto lref = reference_solve(lg, 1e-12, Vector::Zero(4));
    EXPECT_THROW(schedule_strongly_convex(lref, lg, 1e-3, 0.5 * lg.L2_bar()), ConfigError);
}

TEST(DcnSchedule, ValidateRejectsSmallDeltas) {
    const auto s = logistic_suite();
    const auto ref = reference_solve(s, 1e-12, Vector::Zero(4));
    auto p = schedule_strongly_convex(ref, s, 1e-5, s.L2_bar());
    p.delta1 *= 0.5;
    EXPECT_THROW(validate(p, s), ConfigError);
    p.measured_deltas = true;
    EXPECT_NO_THROW(validate(p, s));
}

TEST(DcnRunner, ExactAveragingStepIsCentralizedCubicStep) {
    const auto s = scalar_pair();
    const Vector x0 = Vector::Constant(1, 3.0);
    const auto ref = reference_solve(s, 1e-14, x0);
    Communicator comm(TopologySchedule::static_graph(complete_graph(2)));
    DenseHessianBackend dense;
    const double L = 2.0;
    DcnRunner runner(s, ref, exact_params(L, 0), comm, dense);
    runner.start(replicate(x0, 2));
    runner.step();
    // averaged f = 2.5 x^2 - x + 1: g = 5 x - 1, h = 5
    const double g = 5.0 * 3.0 - 1.0, h = 5.0;
    const double t = (-h + std::sqrt(h * h + 2.0 * L * g)) / L;
    EXPECT_NEAR(runner.X()(0, 0), 3.0 - t, 1e-13);
    EXPECT_NEAR(runner.X()(1, 0), 3.0 - t, 1e-13);
}

TEST(DcnRunner, TraceLengthRoundsAndCost) {
    const auto s = logistic_suite();
    const Vector x0 = Vector::Zero(4);
    const auto ref = reference_solve(s, 1e-12, x0);
    Communicator comm(TopologySchedule::static_graph(ring_graph(6)));
    DenseHessianBackend dense;
    DcnParams p = exact_params(s.L2_bar(), 4);
    p.rounds = RoundPlan{2, 3, 5};
    const auto tr = DcnRunner(s, ref, p, comm, dense).run(replicate(x0, 6));
    ASSERT_EQ(tr.rows.size(), 6u);
    EXPECT_EQ(tr.algorithm, "dcn-sc");
    EXPECT_NEAR(tr.rows[0].gap, s.value(x0) - ref.f_star, 1e-14);
    const double per_iter = 6.0 * (2 * 4 + 3 * 4 + 5 * 16);
    for (std::size_t k = 0; k < tr.rows.size(); ++k) {
        EXPECT_EQ(tr.rows[k].iter, static_cast<int>(k));
        EXPECT_EQ(tr.rows[k].rounds_cum, 10 * static_cast<long long>(k));
        EXPECT_DOUBLE_EQ(tr.rows[k].cost_cum, per_iter * static_cast<double>(k));
        EXPECT_GE(tr.rows[k].node_avg_gap, tr.rows[k].gap - 1e-13);
    }
    EXPECT_EQ(tr.rows[1].rounds_point, 2);
    EXPECT_EQ(tr.rows[1].rounds_grad, 3);
    EXPECT_EQ(tr.rows[1].rounds_hess, 5);
    EXPECT_EQ(comm.total_rounds(), 50);
}

TEST(DcnRunner, AdaptiveModeMeetsTargetsAndRecordsMeasuredDeltas) {
    const auto s = logistic_suite();
    const Vector x0 = Vector::Zero(4);
    const auto ref = reference_solve(s, 1e-12, x0);
    auto p = schedule_strongly_convex(ref, s, 1e-6, s.L2_bar());
    p.measured_deltas = true;
    Communicator comm(TopologySchedule::static_graph(ring_graph(6)));
    DenseHessianBackend dense;
    // a start with disagreement between nodes
    Matrix X0 = replicate(x0, 6);
    for (Index i = 0; i < 6; ++i) X0(i, i % 4) = 0.1 * double(i);
    DriverOptions opt;
    opt.max_steps = 6;
    const auto tr = DcnRunner(s, ref, p, comm, dense, opt).run(X0);
    ASSERT_EQ(tr.rows.size(), 7u);
    for (std::size_t k = 1; k < tr.rows.size(); ++k) {
        const auto& r = tr.rows[k];
        EXPECT_LE(r.delta_point, p.target_x);
        EXPECT_LE(r.delta_grad, p.target_g);
        EXPECT_NEAR(r.delta1, r.delta_grad + 2.0 * s.L1_bar() * r.delta_point, 1e-15);
        EXPECT_NEAR(r.delta2, r.delta_hess + 2.0 * s.L2_bar() * r.delta_point, 1e-15);
        EXPECT_NEAR(r.sigma2, p.gamma * r.delta1 + r.delta2, 1e-15);
    }
    EXPECT_LT(tr.final_gap(), tr.rows[0].gap);
}

TEST(DcnRunner, StopBelowEndsEarly) {
    const auto s = logistic_suite();
    const Vector x0 = Vector::Zero(4);
    const auto ref = reference_solve(s, 1e-12, x0);
    auto p = schedule_strongly_convex(ref, s, 1e-8, s.L2_bar());
    Communicator comm(TopologySchedule::static_graph(complete_graph(6)));
    attach_planned_rounds(p, ref, s, comm.contraction());
    DenseHessianBackend dense;
    DriverOptions opt;
    opt.stop_below = 1e-3;
    const auto tr = DcnRunner(s, ref, p, comm, dense, opt).run(replicate(x0, 6));
    EXPECT_LE(tr.final_gap(), 1e-3);
    EXPECT_GT(tr.rows[tr.rows.size() - 2].gap, 1e-3);
    EXPECT_LT(static_cast<int>(tr.rows.size()), p.N + 2);
}

TEST(DcnRunner, WorkerCountDoesNotChangeResults) {
    const auto s = logistic_suite(8, 5);
    const Vector x0 = Vector::Zero(5);
    const auto ref = reference_solve(s, 1e-12, x0);
    auto p = schedule_strongly_convex(ref, s, 1e-6, s.L2_bar());
    p.measured_deltas = true;
    DenseHessianBackend dense;
    DriverOptions one, many;
    one.max_steps = many.max_steps = 5;
    many.workers = 4;
    Communicator c1(TopologySchedule::static_graph(ring_graph(8))), c2(TopologySchedule::static_graph(ring_graph(8)));
    DcnRunner r1(s, ref, p, c1, dense, one), r2(s, ref, p, c2, dense, many);
    r1.run(replicate(x0, 8));
    r2.run(replicate(x0, 8));
    EXPECT_EQ(r1.X(), r2.X());
}

TEST(DcnRunner, ErrorsCarryIterationContext) {
    const auto s = logistic_suite();
    const auto ref = reference_solve(s, 1e-12, Vector::Zero(4));
    Communicator comm(TopologySchedule::static_graph(complete_graph(6)));
    DenseHessianBackend dense;
    DriverOptions opt;
    opt.solver.tol = 0.0;
    opt.solver.max_iterations = 1;
    DcnRunner runner(s, ref, exact_params(s.L2_bar(), 3), comm, dense, opt);
    runner.start(replicate(Vector::Constant(4, 3.0), 6));
    try {
        runner.step();
        FAIL() << "expected a convergence failure";
    } catch (const ConvergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("dcn iteration 0"), std::string::npos);
    }
    EXPECT_THROW(runner.start(Matrix::Zero(5, 4)), ArgumentError);
}

TEST(DcnRunner, DescentErrorFormula) {
    DcnParams p;
    p.Lreg = 1.0;
    p.gamma = 2.0;
    const auto s = scalar_pair();
    EXPECT_DOUBLE_EQ(descent_error(p, s, 0.1, 0.3, 0.4), 2.0 / 3.0 * 1e-3 + 2.0 * (0.6 + 0.4) * 1e-2);
}
