#pragma once

// Multi-round mixing on stacked node data, measured consensus errors, and
// the round-count planners derived from the contraction property.

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dcn/core.hpp"
#include "dcn/network.hpp"
#include "dcn/objectives.hpp"

namespace dcn {

enum class StackLabel { point, gradient, hessian, glm_weights };

/// One row per node.
struct StackedState {
    Matrix U;
    StackLabel label = StackLabel::point;
};

struct ConsensusReport {
    /// Communication rounds actually performed (K per Chebyshev super-round).
    int rounds_used = 0;
    /// max_i |u_i - u_bar|
    double max_row_deviation = 0.0;
    /// |U - U_bar|_F
    double frob_deviation = 0.0;
    /// sum over rounds of (active edges) x (stack width)
    double scalars_sent = 0.0;
};

inline double frob_deviation(const Matrix& U) {
    return (U.rowwise() - U.colwise().mean()).norm();
}

inline double max_row_deviation(const Matrix& U, const Eigen::RowVectorXd& mean) {
    double worst = 0.0;
    for (Index i = 0; i < U.rows(); ++i) worst = std::max(worst, (U.row(i) - mean).norm());
    return worst;
}

/// Owns the network clock and cumulative accounting for one experiment.
/// Every call to mix() consumes the next T steps of the schedule.
class Communicator {
public:
    explicit Communicator(TopologySchedule schedule, std::optional<int> chebyshev_degree = std::nullopt)
        : schedule_(std::move(schedule)) {
        if (chebyshev_degree) {
            if (!schedule_.is_static()) throw ConfigError("chebyshev mixing requires a static graph");
            cheb_.emplace(schedule_.mixing(0), *chebyshev_degree);
        }
    }

    const TopologySchedule& schedule() const noexcept { return schedule_; }
    bool accelerated() const noexcept { return cheb_.has_value(); }
    const std::optional<ChebyshevOperator>& chebyshev() const noexcept { return cheb_; }
    std::int64_t clock() const noexcept { return clock_; }
    std::int64_t total_rounds() const noexcept { return total_rounds_; }
    double total_scalars() const noexcept { return total_scalars_; }

    /// Extra cost charged outside of mix() (e.g. one-time dataset replication).
    void charge(double scalars) { total_scalars_ += scalars; }

    /// (tau, lambda) for planners. With Chebyshev mixing, one super-round is
    /// the planning unit and lambda is the measured polynomial contraction.
    /// Computed once and cached.
    ContractionParams contraction(int trials = 20) const {
        if (!contraction_) {
            contraction_ = cheb_ ? ContractionParams{1, cheb_->contraction()} : contraction_for(schedule_, trials);
        }
        return *contraction_;
    }

    /// Overrides the estimate (e.g. a known analytic value).
    void set_contraction(ContractionParams c) { contraction_ = c; }

    /// T rounds (or T Chebyshev super-rounds) of U <- W^k U.
    Matrix mix(const Matrix& U, int T, ConsensusReport* report = nullptr) {
        if (U.rows() != schedule_.nodes()) throw ArgumentError("consensus: stack row count differs from node count");
        if (T < 0) throw ArgumentError("consensus: negative round count");
        Matrix out = U;
        double sent = 0.0;
        int rounds = 0;
        const double width = static_cast<double>(U.cols());
        for (int t = 0; t < T; ++t) {
            if (cheb_) {
                out = cheb_->apply(out);
                const double edges = static_cast<double>(schedule_.edge_count(0));
                sent += edges * width * cheb_->degree();
                rounds += cheb_->degree();
                clock_ += cheb_->degree();
            } else {
                out = schedule_.mixing(clock_) * out;
                sent += static_cast<double>(schedule_.edge_count(clock_)) * width;
                ++rounds;
                ++clock_;
            }
        }
        total_rounds_ += rounds;
        total_scalars_ += sent;
        if (report) {
            const Eigen::RowVectorXd mean = U.colwise().mean();
            report->rounds_used = rounds;
            report->max_row_deviation = max_row_deviation(out, mean);
            report->frob_deviation = (out.rowwise() - mean).norm();
            report->scalars_sent = sent;
        }
        return out;
    }

private:
    TopologySchedule schedule_;
    std::optional<ChebyshevOperator> cheb_;
    mutable std::optional<ContractionParams> contraction_;
    std::int64_t clock_ = 0;
    std::int64_t total_rounds_ = 0;
    double total_scalars_ = 0.0;
};

/// Applies W^{s+T-1} ... W^{s} to the stack.
inline std::pair<StackedState, ConsensusReport> run(const StackedState& state, const TopologySchedule& schedule,
                                                    std::int64_t start_step, int T) {
    if (T < 0) throw ArgumentError("consensus: negative round count");
    if (state.U.rows() != schedule.nodes()) throw ArgumentError("consensus: stack row count differs from node count");
    ConsensusReport rep;
    Matrix out = state.U;
    const double width = static_cast<double>(state.U.cols());
    for (int t = 0; t < T; ++t) {
        out = schedule.mixing(start_step + t) * out;
        rep.scalars_sent += static_cast<double>(schedule.edge_count(start_step + t)) * width;
    }
    const Eigen::RowVectorXd mean = state.U.colwise().mean();
    rep.rounds_used = T;
    rep.max_row_deviation = max_row_deviation(out, mean);
    rep.frob_deviation = (out.rowwise() - mean).norm();
    return {StackedState{std::move(out), state.label}, rep};
}

namespace detail {

inline void require_contraction(int tau, double lambda) {
    if (tau < 1) throw ContractionError("planner: tau must be >= 1");
    if (!(lambda > 0.0 && lambda <= 1.0))
        throw ContractionError("planner: lambda must lie in (0, 1], got " + std::to_string(lambda));
}

/// (tau / lambda) * ln(arg); -inf for arg == 0, +inf for an unbounded argument.
inline double log_rounds(double arg, int tau, double lambda) {
    if (std::isnan(arg)) throw ConfigError("planner: undefined log argument (check constants)");
    if (arg <= 0) return -std::numeric_limits<double>::infinity();
    return (static_cast<double>(tau) / lambda) * std::log(arg);
}

inline int ceil_rounds(double real) {
    if (std::isinf(real) && real > 0) throw ConfigError("planner: accuracy target is zero; rounds are unbounded");
    if (!(real > 0)) return 0;
    if (real > 1e9) throw ConfigError("planner: round count overflow");
    return static_cast<int>(std::ceil(real));
}

}  // namespace detail

/// T = max(0, ceil((tau / lambda) ln(radius / target))): enough rounds for a
/// Frobenius radius to shrink below `target`.
inline int rounds_for(double radius, double target, int tau, double lambda) {
    detail::require_contraction(tau, lambda);
    if (!(radius > 0) || target >= radius) return 0;
    if (!(target > 0)) throw ArgumentError("rounds_for: target must be positive");
    return detail::ceil_rounds(detail::log_rounds(radius / target, tau, lambda));
}

/// Per-iteration round counts for points, gradients, Hessians. The *_real
/// members are the values before the ceiling.
struct RoundPlan {
    int Tx = 0, Tg = 0, TH = 0;
    double Tx_real = 0, Tg_real = 0, TH_real = 0;
};

/// Round counts for the accelerated method: v-points, gradients and
/// Hessians at v-hat, gradients at the new x.
struct AccRoundPlan {
    int Tv = 0, Tg_v = 0, TH_v = 0, Tg_x = 0;
    double Tv_real = 0, Tg_v_real = 0, TH_v_real = 0, Tg_x_real = 0;
};

/// Convex-regime planner. `L` is the cubic coefficient of the local model.
inline RoundPlan plan_rounds_convex(const ReferenceSolution& ref, const ProblemSuite& suite, double L, double eps,
                                    ContractionParams c) {
    detail::require_contraction(c.tau, c.lambda);
    if (!(eps > 0)) throw ArgumentError("planner: eps must be positive");
    const double m = static_cast<double>(suite.size());
    const double d = static_cast<double>(suite.dim());
    const double D = ref.D;
    const double LL = L + suite.L2_bar();
    if (!(LL > 0)) throw ConfigError("convex planner: L + mean L2 must be positive");
    const double L1 = suite.L1_bar(), L2 = suite.L2_bar();
    const double x_scale = std::max({288.0 * L1 * D / (std::sqrt(2.0) * eps),
                                     144.0 * L2 * std::sqrt(D) / std::sqrt(3.0 * eps * LL),
                                     3.0 * std::sqrt(LL * D) / std::sqrt(eps)});
    RoundPlan p;
    p.Tx_real = detail::log_rounds(2.0 * D * std::sqrt(m) * x_scale, c.tau, c.lambda);
    p.Tg_real = detail::log_rounds(144.0 * D * std::sqrt(m) * (ref.zeta_g + 2.0 * suite.L1_max() * D) /
                                       (std::sqrt(2.0) * eps),
                                   c.tau, c.lambda);
    p.TH_real = detail::log_rounds(72.0 * std::sqrt(m * D) * (ref.zeta_H + 2.0 * suite.L2_max() * std::sqrt(d) * D) /
                                       std::sqrt(3.0 * eps * LL),
                                   c.tau, c.lambda);
    p.Tx = detail::ceil_rounds(p.Tx_real);
    p.Tg = detail::ceil_rounds(p.Tg_real);
    p.TH = detail::ceil_rounds(p.TH_real);
    return p;
}

/// Strongly convex planner; `alpha` is the contraction rate of the outer loop.
inline RoundPlan plan_rounds_sc(const ReferenceSolution& ref, const ProblemSuite& suite, double L, double alpha,
                                double eps, ContractionParams c) {
    detail::require_contraction(c.tau, c.lambda);
    if (!(eps > 0)) throw ArgumentError("planner: eps must be positive");
    if (!(alpha > 0)) throw ArgumentError("planner: alpha must be positive");
    const double m = static_cast<double>(suite.size());
    const double d = static_cast<double>(suite.dim());
    const double D = ref.D;
    const double LL = L + suite.L2_bar();
    const double L1 = suite.L1_bar(), L2 = suite.L2_bar(), mu = suite.mu_bar();
    if (!(mu > 0)) throw ConfigError("strongly convex planner: mean mu must be positive");
    const double x_scale = std::max({24.0 * L1 * D / (alpha * eps), std::cbrt(4.0 * LL / (alpha * eps)),
                                     std::sqrt(3.0 * mu / (4.0 * alpha * eps) + (2.0 / D + L2 / L1) / D)});
    RoundPlan p;
    p.Tx_real = detail::log_rounds(2.0 * D * std::sqrt(m) * x_scale, c.tau, c.lambda);
    p.Tg_real = detail::log_rounds(12.0 * D * std::sqrt(m) * (ref.zeta_g + 2.0 * suite.L1_max() * D) / (alpha * eps),
                                   c.tau, c.lambda);
    p.TH_real = detail::log_rounds(16.0 * std::sqrt(m) * (ref.zeta_H + 2.0 * suite.L2_max() * std::sqrt(d) * D) / mu,
                                   c.tau, c.lambda);
    p.Tx = detail::ceil_rounds(p.Tx_real);
    p.Tg = detail::ceil_rounds(p.Tg_real);
    p.TH = detail::ceil_rounds(p.TH_real);
    return p;
}

/// Accelerated-method planner (radii use R_bar).
inline AccRoundPlan plan_rounds_acc(const ReferenceSolution& ref, const ProblemSuite& suite, double alpha, double eps,
                                    ContractionParams c) {
    detail::require_contraction(c.tau, c.lambda);
    if (!(eps > 0)) throw ArgumentError("planner: eps must be positive");
    if (!(alpha > 0)) throw ArgumentError("planner: alpha must be positive");
    const double m = static_cast<double>(suite.size());
    const double d = static_cast<double>(suite.dim());
    const double R = ref.R_bar;
    const double L1 = suite.L1_bar(), L2 = suite.L2_bar(), mu = suite.mu_bar(), mu_hat = suite.mu_hat();
    if (!(mu > 0) || !(mu_hat > 0)) throw ConfigError("accelerated planner: every mu_i must be positive");
    const double s5 = std::sqrt(5.0);
    const double rm = std::sqrt(m);
    const double grad_radius = rm * (ref.zeta_g + 2.0 * suite.L1_max() * R);
    const double hess_radius = rm * (ref.zeta_H + 2.0 * suite.L2_max() * std::sqrt(d) * R);
    AccRoundPlan p;
    p.Tv_real = detail::log_rounds(
        2.0 * R * rm * std::max(120.0 * s5 * alpha * alpha * L2 / mu, 320.0 * L1 * R / (alpha * eps)), c.tau,
        c.lambda);
    p.Tg_v_real = detail::log_rounds(
        grad_radius * std::max(160.0 * L1 * R / (alpha * mu_hat * eps), 160.0 * R / (alpha * eps)), c.tau, c.lambda);
    p.TH_v_real = detail::log_rounds(
        hess_radius * std::max(60.0 * s5 * alpha * alpha / mu, 320.0 * L1 * R * R / (alpha * mu_hat * eps)), c.tau,
        c.lambda);
    p.Tg_x_real = detail::log_rounds(8.0 * R * grad_radius / eps, c.tau, c.lambda);
    p.Tv = detail::ceil_rounds(p.Tv_real);
    p.Tg_v = detail::ceil_rounds(p.Tg_v_real);
    p.TH_v = detail::ceil_rounds(p.TH_v_real);
    p.Tg_x = detail::ceil_rounds(p.Tg_x_real);
    return p;
}

// ---------------------------------------------------------------------------
// Hessian exchange backends.

/// How many rounds a Hessian exchange should run: a fixed count, or enough
/// to push the operator-norm error below a target (adaptive).
struct HessianRounds {
    std::optional<int> fixed;
    double target = 0.0;
};

struct HessianExchangeResult {
    std::vector<Matrix> H;  // one symmetric d x d estimate per node
    /// (1/m) sum_j of the exact local Hessians at the given points.
    Matrix exact_mean;
    ConsensusReport report;
};

/// Produces per-node estimates of the network-average Hessian at the given
/// per-node points.
class HessianBackend {
public:
    virtual ~HessianBackend() = default;
    virtual std::string name() const = 0;
    virtual HessianExchangeResult exchange(const ProblemSuite& suite, const Matrix& points, Communicator& comm,
                                           const HessianRounds& rounds, std::size_t workers) = 0;
};

/// Mixes flattened d^2-wide Hessian rows.
class DenseHessianBackend final : public HessianBackend {
public:
    std::string name() const override { return "dense"; }

    HessianExchangeResult exchange(const ProblemSuite& suite, const Matrix& points, Communicator& comm,
                                   const HessianRounds& rounds, std::size_t workers) override {
        const Index m = static_cast<Index>(suite.size());
        const Index d = suite.dim();
        Matrix stack(m, d * d);
        parallel_for(static_cast<std::size_t>(m), workers, [&](std::size_t i) {
            stack.row(static_cast<Index>(i)) = flatten(suite[i].hessian(points.row(static_cast<Index>(i)).transpose()));
        });
        int T = rounds.fixed ? *rounds.fixed : 0;
        if (!rounds.fixed) {
            const auto c = comm.contraction();
            T = rounds_for(frob_deviation(stack), rounds.target, c.tau, c.lambda);
        }
        HessianExchangeResult out;
        const Matrix mixed = comm.mix(stack, T, &out.report);
        out.exact_mean = unflatten(stack.colwise().mean(), d);
        out.H.resize(static_cast<std::size_t>(m));
        for (Index i = 0; i < m; ++i) {
            Matrix H = unflatten(mixed.row(i), d);
            out.H[static_cast<std::size_t>(i)] = 0.5 * (H + H.transpose());
        }
        return out;
    }
};

}  // namespace dcn
