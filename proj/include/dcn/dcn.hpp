#pragma once

// Decentralized Cubic Newton: schedulers for the convex and strongly convex
// regimes and the synchronous driver.

#include <chrono>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dcn/consensus.hpp"
#include "dcn/core.hpp"
#include "dcn/cubic.hpp"
#include "dcn/metrics.hpp"
#include "dcn/objectives.hpp"

namespace dcn {

/// analytic: round counts from the planners and delta from the schedule.
/// adaptive: rounds sized from measured radii, delta from measured errors.
enum class Mode { analytic, adaptive };

inline std::string to_string(Mode m) { return m == Mode::analytic ? "analytic" : "adaptive"; }

inline Mode parse_mode(const std::string& s) {
    if (s == "analytic") return Mode::analytic;
    if (s == "adaptive") return Mode::adaptive;
    throw ConfigError("unknown mode '" + s + "'");
}

enum class Regime { convex, strongly_convex };

inline std::string to_string(Regime r) { return r == Regime::convex ? "convex" : "strongly_convex"; }

struct DcnParams {
    Regime regime = Regime::convex;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double gamma = 1.0;
    double Lreg = 0.0;
    int N = 0;
    /// Start is already optimal (D = 0 or initial gap <= eps/2): no steps.
    bool solved = false;
    /// Outer contraction rate (strongly convex regime only).
    double alpha = 0.0;
    double eps = 0.0;
    double gap0 = 0.0;
    /// Consensus accuracy targets for points, gradients, Hessians.
    double target_x = 0.0;
    double target_g = 0.0;
    double target_H = 0.0;
    /// Fixed per-iteration rounds; empty means rounds sized from the targets.
    std::optional<RoundPlan> rounds;
    /// Set delta1, delta2 each iteration from measured consensus errors.
    bool measured_deltas = false;

    int steps() const { return solved ? 0 : N + 1; }
};

namespace detail {

/// a / b with a / 0 = +inf for a > 0.
inline double ratio(double a, double b) {
    if (b == 0.0) return a > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    return a / b;
}

}  // namespace detail

/// Convex regime. `L` is the cubic coefficient of the local model.
inline DcnParams schedule_convex(const ReferenceSolution& ref, const ProblemSuite& suite, double eps, double L) {
    if (!(eps > 0)) throw ArgumentError("schedule_convex: eps must be positive");
    DcnParams p;
    p.regime = Regime::convex;
    p.eps = eps;
    p.Lreg = L;
    p.gap0 = suite.value(ref.x0) - ref.f_star;
    if (L < suite.L2_bar() * (1 - 1e-12)) throw ConfigError("schedule_convex: L must be at least the mean L2");
    const double D = ref.D;
    if (D == 0.0) {
        p.solved = true;
        return p;
    }
    const double LL = L + suite.L2_bar();
    if (!(LL > 0)) throw ConfigError("schedule_convex: L + mean L2 must be positive; set L > 0");
    const double L1 = suite.L1_bar(), L2 = suite.L2_bar();
    const double x1 = detail::ratio(std::sqrt(2.0) * eps, 288.0 * L1 * D);
    const double x2 = detail::ratio(std::sqrt(3.0 * eps * LL), 144.0 * L2 * std::sqrt(D));
    if (eps <= 12.0 * LL * D * D * D) {
        p.N = std::max(0, static_cast<int>(std::ceil(std::sqrt(108.0 * LL * D * D * D / eps))) - 2);
        p.target_x = std::min({x1, x2, std::sqrt(eps) / (3.0 * std::sqrt(LL * D))});
    } else {
        p.N = 1;
        p.target_x = std::min({x1, x2, std::cbrt(eps / (6.0 * LL)), D});
    }
    p.target_g = std::sqrt(2.0) / 144.0 * eps / D;
    p.target_H = std::sqrt(3.0) / 72.0 * std::sqrt(eps * LL / D);
    p.delta1 = std::sqrt(2.0) / 72.0 * eps / D;
    p.delta2 = std::sqrt(3.0) / 36.0 * std::sqrt(eps * LL / D);
    p.gamma = std::sqrt(double(p.N + 1) * double(p.N + 2)) / (6.0 * D);
    return p;
}

/// Strongly convex regime.
inline DcnParams schedule_strongly_convex(const ReferenceSolution& ref, const ProblemSuite& suite, double eps,
                                          double L) {
    if (!(eps > 0)) throw ArgumentError("schedule_strongly_convex: eps must be positive");
    const double mu = suite.mu_bar();
    if (!(mu > 0)) throw ConfigError("schedule_strongly_convex: mean mu must be positive");
    if (L < suite.L2_bar() * (1 - 1e-12)) throw ConfigError("schedule_strongly_convex: L must be at least the mean L2");
    DcnParams p;
    p.regime = Regime::strongly_convex;
    p.eps = eps;
    p.Lreg = L;
    p.gap0 = suite.value(ref.x0) - ref.f_star;
    const double D = ref.D;
    if (D == 0.0 || p.gap0 <= eps / 2) {
        p.solved = true;
        return p;
    }
    const double LL = L + suite.L2_bar();
    const double L1 = suite.L1_bar(), L2 = suite.L2_bar();
    p.alpha = std::min(0.5, std::sqrt(detail::ratio(3.0 * mu, 16.0 * LL * D)));
    const double a = p.alpha;
    p.gamma = 1.0 / D;
    p.target_x = std::min({detail::ratio(a * eps, 24.0 * L1 * D), std::cbrt(detail::ratio(a * eps, 4.0 * LL)),
                           2.0 * D * std::sqrt(a * eps * L1 / (3.0 * mu * D * D * L1 + 4.0 * a * eps * (2.0 * L1 + D * L2))),
                           mu / (64.0 * (L1 / D + L2))});
    p.target_g = std::min(a * eps / (12.0 * D), mu * D / 32.0);
    p.target_H = mu / 16.0;
    p.delta1 = p.target_g + 2.0 * L1 * p.target_x;
    p.delta2 = p.target_H + 2.0 * L2 * p.target_x;
    p.N = std::max(0, static_cast<int>(std::ceil(std::log(2.0 * p.gap0 / eps) / a)) - 1);
    return p;
}

/// Fills the fixed round plan from the regime's planner.
inline void attach_planned_rounds(DcnParams& p, const ReferenceSolution& ref, const ProblemSuite& suite,
                                  ContractionParams c) {
    if (p.solved) {
        p.rounds = RoundPlan{};
        return;
    }
    p.rounds = p.regime == Regime::convex ? plan_rounds_convex(ref, suite, p.Lreg, p.eps, c)
                                          : plan_rounds_sc(ref, suite, p.Lreg, p.alpha, p.eps, c);
}

/// Consistency requirements on a parameter set with analytic deltas.
inline void validate(const DcnParams& p, const ProblemSuite& suite) {
    if (!(p.gamma > 0)) throw ConfigError("dcn: gamma must be positive");
    if (p.delta1 < 0 || p.delta2 < 0) throw ConfigError("dcn: deltas must be nonnegative");
    if (p.Lreg < suite.L2_bar() * (1 - 1e-12)) throw ConfigError("dcn: L must be at least the mean L2");
    if (p.measured_deltas || p.solved) return;
    const double tol = 1e-12;
    if (p.delta1 < (p.target_g + 2.0 * suite.L1_bar() * p.target_x) * (1 - tol))
        throw ConfigError("dcn: delta1 below the aggregated gradient error budget");
    if (p.delta2 < (p.target_H + 2.0 * suite.L2_bar() * p.target_x) * (1 - tol))
        throw ConfigError("dcn: delta2 below the aggregated Hessian error budget");
}

struct DriverOptions {
    std::size_t workers = 1;
    CubicSolveOptions solver;
    /// Stop early once the gap is at or below this value.
    std::optional<double> stop_below;
    /// Upper bound on outer steps (negative: none).
    int max_steps = -1;
    bool record_wall_time = false;
};

namespace detail {

inline double max_hessian_deviation(const std::vector<Matrix>& H, const Matrix& mean) {
    double worst = 0.0;
    for (const auto& Hi : H) worst = std::max(worst, sym_op_norm(Hi - mean));
    return worst;
}

inline double max_distance(const Matrix& X, const Vector& p) {
    double worst = 0.0;
    for (Index i = 0; i < X.rows(); ++i) worst = std::max(worst, (X.row(i).transpose() - p).norm());
    return worst;
}

inline double disagreement(const Matrix& X) {
    return max_row_deviation(X, X.colwise().mean());
}

inline double node_average_value(const ProblemSuite& suite, const Matrix& X, std::size_t workers) {
    std::vector<double> vals(static_cast<std::size_t>(X.rows()));
    parallel_for(vals.size(), workers,
                 [&](std::size_t i) { vals[i] = suite.value(X.row(static_cast<Index>(i)).transpose()); });
    double s = 0.0;
    for (double v : vals) s += v;
    return s / static_cast<double>(vals.size());
}

inline Matrix gradient_stack(const ProblemSuite& suite, const Matrix& X, std::size_t workers) {
    Matrix G(X.rows(), X.cols());
    parallel_for(static_cast<std::size_t>(X.rows()), workers, [&](std::size_t i) {
        const Index r = static_cast<Index>(i);
        G.row(r) = suite[i].gradient(X.row(r).transpose()).transpose();
    });
    return G;
}

inline int rounds_or_adaptive(const std::optional<int>& fixed, const Matrix& stack, double target,
                              const Communicator& comm) {
    if (fixed) return *fixed;
    const auto c = comm.contraction();
    return rounds_for(frob_deviation(stack), target, c.tau, c.lambda);
}

/// x_i = center_i + argmin of the cubic model, one solve per node.
inline Matrix cubic_steps(const Matrix& centers, const Matrix& G, const std::vector<Matrix>& H, double sigma2,
                          double Lreg, const CubicSolveOptions& opt, std::size_t workers) {
    Matrix X(centers.rows(), centers.cols());
    parallel_for(static_cast<std::size_t>(centers.rows()), workers, [&](std::size_t i) {
        const Index r = static_cast<Index>(i);
        CubicModel model{G.row(r).transpose(), H[i], sigma2, Lreg, centers.row(r).transpose()};
        X.row(r) = (model.center + solve_cubic(model, opt)).transpose();
    });
    return X;
}

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace detail

/// Algorithm driver. Each step consumes consensus rounds from the shared
/// communicator and appends one trace row.
class DcnRunner {
public:
    DcnRunner(const ProblemSuite& suite, const ReferenceSolution& ref, DcnParams params, Communicator& comm,
              HessianBackend& backend, DriverOptions options = {})
        : suite_(suite), ref_(ref), p_(std::move(params)), comm_(comm), backend_(backend), opt_(options) {
        validate(p_, suite_);
    }

    const Matrix& X() const noexcept { return X_; }
    const MetricsTrace& trace() const noexcept { return trace_; }
    const DcnParams& params() const noexcept { return p_; }
    int iteration() const noexcept { return k_; }

    /// Resets to the given per-node start points and records row 0.
    void start(const Matrix& X0) {
        if (X0.rows() != static_cast<Index>(suite_.size()) || X0.cols() != suite_.dim())
            throw ArgumentError("dcn: start matrix must be m x d");
        X_ = X0;
        k_ = 0;
        trace_ = MetricsTrace{};
        trace_.algorithm = p_.regime == Regime::convex ? "dcn-convex" : "dcn-sc";
        trace_.eps = p_.eps;
        t0_ = detail::Clock::now();
        MetricsRow r;
        r.iter = 0;
        r.gap = suite_.value(row_mean(X_)) - ref_.f_star;
        r.node_avg_gap = detail::node_average_value(suite_, X_, opt_.workers) - ref_.f_star;
        r.rounds_cum = comm_.total_rounds();
        r.cost_cum = comm_.total_scalars();
        r.alpha = p_.alpha;
        r.disagreement = detail::disagreement(X_);
        r.max_radius = detail::max_distance(X_, ref_.x_star);
        trace_.rows.push_back(r);
    }

    void step() {
        with_context("dcn iteration " + std::to_string(k_), [&] { step_impl(); });
    }

    MetricsTrace run(const Matrix& X0) {
        start(X0);
        int steps = p_.steps();
        if (opt_.max_steps >= 0) steps = std::min(steps, opt_.max_steps);
        for (int s = 0; s < steps; ++s) {
            if (opt_.stop_below && trace_.rows.back().gap <= *opt_.stop_below) break;
            step();
        }
        return trace_;
    }

private:
    void step_impl() {
        const std::size_t w = opt_.workers;
        MetricsRow r;
        r.iter = k_ + 1;

        // consensus on points
        ConsensusReport rep_x;
        const int Tx = detail::rounds_or_adaptive(p_.rounds ? std::optional<int>(p_.rounds->Tx) : std::nullopt, X_,
                                                  p_.target_x, comm_);
        const Matrix Xh = comm_.mix(X_, Tx, &rep_x);
        r.delta_point = rep_x.max_row_deviation;
        r.rounds_point = Tx;

        // consensus on gradients
        const Matrix G = detail::gradient_stack(suite_, Xh, w);
        ConsensusReport rep_g;
        const int Tg = detail::rounds_or_adaptive(p_.rounds ? std::optional<int>(p_.rounds->Tg) : std::nullopt, G,
                                                  p_.target_g, comm_);
        const Matrix Gh = comm_.mix(G, Tg, &rep_g);
        r.delta_grad = rep_g.max_row_deviation;
        r.rounds_grad = Tg;

        // consensus on Hessians
        HessianRounds hr;
        if (p_.rounds) hr.fixed = p_.rounds->TH;
        hr.target = p_.target_H;
        const auto hx = backend_.exchange(suite_, Xh, comm_, hr, w);
        r.delta_hess = detail::max_hessian_deviation(hx.H, hx.exact_mean);
        r.rounds_hess = hx.report.rounds_used;

        double d1 = p_.delta1, d2 = p_.delta2;
        if (p_.measured_deltas) {
            d1 = r.delta_grad + 2.0 * suite_.L1_bar() * r.delta_point;
            d2 = r.delta_hess + 2.0 * suite_.L2_bar() * r.delta_point;
        }
        const double sigma2 = p_.gamma * d1 + d2;
        X_ = detail::cubic_steps(Xh, Gh, hx.H, sigma2, p_.Lreg, opt_.solver, w);
        ++k_;

        r.gap = suite_.value(row_mean(X_)) - ref_.f_star;
        r.node_avg_gap = detail::node_average_value(suite_, X_, w) - ref_.f_star;
        r.rounds_cum = comm_.total_rounds();
        r.cost_cum = comm_.total_scalars();
        r.sigma2 = sigma2;
        r.delta1 = d1;
        r.delta2 = d2;
        r.alpha = p_.alpha;
        r.disagreement = detail::disagreement(X_);
        r.max_radius = detail::max_distance(X_, ref_.x_star);
        if (opt_.record_wall_time) r.wall_ms = detail::elapsed_ms(t0_);
        trace_.rows.push_back(r);
    }

    const ProblemSuite& suite_;
    const ReferenceSolution& ref_;
    DcnParams p_;
    Communicator& comm_;
    HessianBackend& backend_;
    DriverOptions opt_;
    Matrix X_;
    int k_ = 0;
    MetricsTrace trace_;
    detail::Clock::time_point t0_{};
};

/// Per-step error term of the descent recursion for a measured point error.
inline double descent_error(const DcnParams& p, const ProblemSuite& suite, double delta_x, double delta1,
                            double delta2) {
    const double LL = p.Lreg + suite.L2_bar();
    return 2.0 * LL / 3.0 * delta_x * delta_x * delta_x + 2.0 * (p.gamma * delta1 + delta2) * delta_x * delta_x;
}

}  // namespace dcn
