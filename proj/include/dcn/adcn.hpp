#pragma once

// Accelerated Decentralized Cubic Newton: scheduler and driver maintaining
// the x, y, v sequences and a per-node estimating function.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dcn/consensus.hpp"
#include "dcn/cubic.hpp"
#include "dcn/dcn.hpp"
#include "dcn/metrics.hpp"
#include "dcn/objectives.hpp"

namespace dcn {

struct AdcnParams {
    double alpha = 0.0;
    double kappa2 = 0.0;
    double kappa3 = 0.0;
    double Lreg = 0.0;
    /// delta2 used in analytic mode (3 x the budgeted aggregated Hessian error).
    double delta2 = 0.0;
    int N = 0;
    double C = 0.0;
    double eps = 0.0;
    double gap0 = 0.0;
    double mu_bar = 0.0;
    double R_bar = 0.0;
    /// Start is already optimal (R = 0): no steps.
    bool solved = false;
    /// Targets for v-hat, gradients at v-hat, Hessians at v-hat, gradients at x.
    double target_v = 0.0;
    double target_g_v = 0.0;
    double target_H_v = 0.0;
    double target_g_x = 0.0;
    std::optional<AccRoundPlan> rounds;
    /// delta2_k = 3 x measured aggregated Hessian error.
    bool measured_deltas = false;
    /// alpha_k = min(alpha, sqrt(mu_bar / (30 sqrt5 max measured Delta2))).
    bool adaptive_alpha = false;

    /// Precomputation plus N steps.
    int steps() const { return solved ? 0 : N + 1; }
};

inline AdcnParams schedule_accelerated(const ReferenceSolution& ref, const ProblemSuite& suite, double eps) {
    if (!(eps > 0)) throw ArgumentError("schedule_accelerated: eps must be positive");
    const double mu = suite.mu_bar(), mu_hat = suite.mu_hat();
    if (!(mu > 0) || !(mu_hat > 0)) throw ConfigError("schedule_accelerated: every mu_i must be positive");
    AdcnParams p;
    p.eps = eps;
    p.mu_bar = mu;
    p.R_bar = ref.R_bar;
    p.gap0 = suite.value(ref.x0) - ref.f_star;
    const double L1 = suite.L1_bar(), L2 = suite.L2_bar();
    p.Lreg = 3.0 * L2;
    if (ref.R == 0.0 || ref.R_bar == 0.0) {
        p.solved = true;
        return p;
    }
    const double Rb = ref.R_bar, R = ref.R;
    const double s5 = std::sqrt(5.0);
    p.alpha = std::min(0.8, std::cbrt(detail::ratio(3.0 * mu / Rb, 160.0 * L2)));
    const double a = p.alpha;
    p.kappa2 = mu / 2.0;
    p.kappa3 = 1.5 * mu / Rb;
    p.target_H_v = std::min(mu / (60.0 * s5 * a * a), a * mu_hat * eps / (320.0 * L1 * Rb * Rb));
    p.target_g_v = std::min(a * mu_hat * eps / (160.0 * L1 * Rb), a * eps / (160.0 * Rb));
    p.target_v = std::min(detail::ratio(mu, 120.0 * s5 * a * a * L2), a * eps / (320.0 * L1 * Rb));
    p.target_g_x = eps / (8.0 * Rb);
    const double Delta1 = p.target_g_v + 2.0 * L1 * p.target_v;
    const double Delta2 = p.target_H_v + 2.0 * L2 * p.target_v;
    p.delta2 = 3.0 * Delta2;
    p.C = 4.0 * Delta1 / (mu * R) + 4.0 * Delta1 * Rb / (mu * R * R) + 4.0 * Delta2 / mu + 0.5 +
          (8.0 * L2 + 3.0 * mu / Rb) / (6.0 * mu) * R;
    if (p.gap0 <= 0) {
        p.N = 0;
    } else {
        const double n = std::log(2.0 * p.C * p.gap0 / eps) / std::log(1.0 / (1.0 - a));
        p.N = std::max(0, static_cast<int>(std::ceil(n)));
    }
    return p;
}

inline void attach_planned_rounds(AdcnParams& p, const ReferenceSolution& ref, const ProblemSuite& suite,
                                  ContractionParams c) {
    if (p.solved) {
        p.rounds = AccRoundPlan{};
        return;
    }
    p.rounds = plan_rounds_acc(ref, suite, p.alpha, p.eps, c);
}

/// Geometric rate bound (1 - alpha)^k C gap0 for row k of an exact run.
inline double acceleration_bound(const AdcnParams& p, int k) { return std::pow(1.0 - p.alpha, k) * p.C * p.gap0; }

class AdcnRunner {
public:
    AdcnRunner(const ProblemSuite& suite, const ReferenceSolution& ref, AdcnParams params, Communicator& comm,
               HessianBackend& backend, DriverOptions options = {})
        : suite_(suite), ref_(ref), p_(std::move(params)), comm_(comm), backend_(backend), opt_(options) {
        if (!p_.solved) {
            if (!(p_.alpha >= 0 && p_.alpha < 1)) throw ConfigError("adcn: alpha must lie in [0, 1)");
            if (p_.Lreg < 0 || p_.delta2 < 0) throw ConfigError("adcn: L and delta2 must be nonnegative");
            if (!(p_.kappa2 > 0) && !(p_.kappa3 > 0)) throw ConfigError("adcn: kappa2 or kappa3 must be positive");
        }
    }

    const Matrix& X() const noexcept { return X_; }
    const Matrix& Y() const noexcept { return Y_; }
    const Matrix& V() const noexcept { return V_; }
    const std::vector<PsiState>& psi() const noexcept { return psi_; }
    const MetricsTrace& trace() const noexcept { return trace_; }
    const AdcnParams& params() const noexcept { return p_; }
    int iteration() const noexcept { return k_; }
    double A() const noexcept { return A_; }
    /// alpha_k used by each update so far (index 0: step k = 1).
    const std::vector<double>& alphas() const noexcept { return alphas_; }

    /// Records row 0 at the given start points.
    void start(const Matrix& X0) {
        if (X0.rows() != static_cast<Index>(suite_.size()) || X0.cols() != suite_.dim())
            throw ArgumentError("adcn: start matrix must be m x d");
        X_ = X0;
        Y_ = X0;
        V_ = X0;
        Vh_ = X0;
        psi_.clear();
        alphas_.clear();
        A_ = 1.0;
        k_ = 0;
        delta2_max_ = 0.0;
        trace_ = MetricsTrace{};
        trace_.algorithm = "adcn";
        trace_.eps = p_.eps;
        t0_ = detail::Clock::now();
        MetricsRow r;
        r.iter = 0;
        r.alpha = p_.alpha;
        finish_row(r);
    }

    /// Precomputation: produces x^1, psi^1 and y^1.
    void precompute() {
        with_context("adcn precomputation", [&] {
            if (k_ != 0) throw ArgumentError("precompute must run once, right after start");
            V_ = X_;
            MetricsRow r;
            r.iter = 1;
            r.alpha = p_.alpha;
            local_step(r);
            for (Index i = 0; i < X_.rows(); ++i)
                psi_.push_back(psi_init(Vh_.row(i).transpose(), p_.kappa2, p_.kappa3));
            for (Index i = 0; i < X_.rows(); ++i) Y_.row(i) = psi_argmin(psi_[static_cast<std::size_t>(i)]).transpose();
            k_ = 1;
            finish_row(r);
        });
    }

    /// One iteration k >= 1.
    void step() {
        with_context("adcn iteration " + std::to_string(k_), [&] {
            if (k_ < 1) throw ArgumentError("adcn: step requires precompute first");
            double a = p_.alpha;
            if (p_.adaptive_alpha && delta2_max_ > 0)
                a = std::min(a, std::sqrt(p_.mu_bar / (30.0 * std::sqrt(5.0) * delta2_max_)));
            const double A_next = (1.0 - a) * A_;
            V_ = (1.0 - a) * X_ + a * Y_;
            MetricsRow r;
            r.iter = k_ + 1;
            r.alpha = a;
            const Matrix ghat_x = local_step(r);
            for (Index i = 0; i < X_.rows(); ++i) {
                auto& ps = psi_[static_cast<std::size_t>(i)];
                ps = psi_update(ps, a, A_next, p_.kappa2, p_.kappa3, p_.mu_bar, ghat_x.row(i).transpose(),
                                X_.row(i).transpose());
                Y_.row(i) = psi_argmin(ps).transpose();
            }
            A_ = A_next;
            alphas_.push_back(a);
            const double tele = 1.0 / A_ - 1.0;
            if (!psi_.empty() && std::abs(psi_.front().weight_sum - tele) > 1e-9 * std::max(1.0, tele))
                trace_.warnings.push_back("iteration " + std::to_string(k_) + ": weight sum differs from 1/A_k - 1");
            ++k_;
            finish_row(r);
        });
    }

    MetricsTrace run(const Matrix& X0) {
        start(X0);
        int steps = p_.steps();
        if (opt_.max_steps >= 0) steps = std::min(steps, opt_.max_steps);
        for (int s = 0; s < steps; ++s) {
            if (opt_.stop_below && trace_.rows.back().gap <= *opt_.stop_below) break;
            if (s == 0)
                precompute();
            else
                step();
        }
        return trace_;
    }

private:
    /// Consensus on V, derivatives at v-hat, cubic step into X, then
    /// consensus on the gradients at the new X (returned).
    Matrix local_step(MetricsRow& r) {
        const std::size_t w = opt_.workers;
        const auto fixed = [&](int AccRoundPlan::*f) {
            return p_.rounds ? std::optional<int>((*p_.rounds).*f) : std::nullopt;
        };
        ConsensusReport rep_v;
        const int Tv = detail::rounds_or_adaptive(fixed(&AccRoundPlan::Tv), V_, p_.target_v, comm_);
        Vh_ = comm_.mix(V_, Tv, &rep_v);
        r.delta_point = rep_v.max_row_deviation;
        r.rounds_point = Tv;

        const Matrix G = detail::gradient_stack(suite_, Vh_, w);
        ConsensusReport rep_g;
        const int Tg = detail::rounds_or_adaptive(fixed(&AccRoundPlan::Tg_v), G, p_.target_g_v, comm_);
        const Matrix Gh = comm_.mix(G, Tg, &rep_g);
        r.delta_grad = rep_g.max_row_deviation;
        r.rounds_grad = Tg;

        HessianRounds hr;
        hr.fixed = fixed(&AccRoundPlan::TH_v);
        hr.target = p_.target_H_v;
        const auto hx = backend_.exchange(suite_, Vh_, comm_, hr, w);
        r.delta_hess = detail::max_hessian_deviation(hx.H, hx.exact_mean);
        r.rounds_hess = hx.report.rounds_used;

        const double Delta2 = r.delta_hess + 2.0 * suite_.L2_bar() * r.delta_point;
        delta2_max_ = std::max(delta2_max_, Delta2);
        const double d2 = p_.measured_deltas ? 3.0 * Delta2 : p_.delta2;
        X_ = detail::cubic_steps(Vh_, Gh, hx.H, d2, p_.Lreg, opt_.solver, w);
        r.sigma2 = d2;
        r.delta1 = r.delta_grad + 2.0 * suite_.L1_bar() * r.delta_point;
        r.delta2 = d2;

        const Matrix Gx = detail::gradient_stack(suite_, X_, w);
        ConsensusReport rep_gx;
        const int Tgx = detail::rounds_or_adaptive(fixed(&AccRoundPlan::Tg_x), Gx, p_.target_g_x, comm_);
        Matrix Ghx = comm_.mix(Gx, Tgx, &rep_gx);
        r.delta_grad_x = rep_gx.max_row_deviation;
        r.rounds_grad_x = Tgx;
        return Ghx;
    }

    void finish_row(MetricsRow& r) {
        const Vector& xs = ref_.x_star;
        r.gap = suite_.value(row_mean(X_)) - ref_.f_star;
        r.node_avg_gap = detail::node_average_value(suite_, X_, opt_.workers) - ref_.f_star;
        r.rounds_cum = comm_.total_rounds();
        r.cost_cum = comm_.total_scalars();
        r.disagreement = detail::disagreement(X_);
        r.max_radius = detail::max_distance(X_, xs);
        r.max_radius_y = detail::max_distance(Y_, xs);
        r.max_radius_v = detail::max_distance(V_, xs);
        r.max_radius_vhat = detail::max_distance(Vh_, xs);
        const double Rb = p_.R_bar * (1 + 1e-12);
        r.assumption_ok = r.max_radius <= Rb && r.max_radius_y <= Rb && r.max_radius_v <= Rb && r.max_radius_vhat <= Rb;
        if (!r.assumption_ok)
            trace_.warnings.push_back("iteration " + std::to_string(r.iter) + ": iterates leave the R_bar ball");
        if (opt_.record_wall_time) r.wall_ms = detail::elapsed_ms(t0_);
        trace_.rows.push_back(r);
    }

    const ProblemSuite& suite_;
    const ReferenceSolution& ref_;
    AdcnParams p_;
    Communicator& comm_;
    HessianBackend& backend_;
    DriverOptions opt_;
    Matrix X_, Y_, V_, Vh_;
    std::vector<PsiState> psi_;
    std::vector<double> alphas_;
    double A_ = 1.0;
    double delta2_max_ = 0.0;
    int k_ = 0;
    MetricsTrace trace_;
    detail::Clock::time_point t0_{};
};

}  // namespace dcn
