#pragma once

// Local subproblems of the two methods:
//   * the regularized cubic model  <g,s> + 1/2 <Hs,s> + sigma2/2 |s|^2 + L/6 |s|^3
//   * the aggregated estimating function of the accelerated method.

#include <limits>
#include <string>

#include "dcn/core.hpp"

namespace dcn {

/// Cubic model around `center`; s is the displacement from it. The constant
/// term of the smoothed model is not stored since it does not move the
/// minimizer.
struct CubicModel {
    Vector g;
    Matrix H;
    double sigma2 = 0.0;
    double Lreg = 0.0;
    Vector center;
};

inline double model_value(const CubicModel& model, const Vector& s) {
    const double n = s.norm();
    return model.g.dot(s) + 0.5 * s.dot(model.H * s) + 0.5 * model.sigma2 * n * n + model.Lreg / 6.0 * n * n * n;
}

inline Vector model_grad(const CubicModel& model, const Vector& s) {
    return model.g + model.H * s + (model.sigma2 + 0.5 * model.Lreg * s.norm()) * s;
}

/// |(H + sigma2 I + L/2 |s| I) s + g|
inline double stationarity_residual(const CubicModel& model, const Vector& s) { return model_grad(model, s).norm(); }

struct CubicSolveOptions {
    double tol = 1e-10;
    int max_iterations = 200;
    /// Dimensions above this use the Cholesky-based secular iteration.
    Index eigen_max_dim = 64;
};

namespace detail {

// Root of phi(r) = n(r) - r on (lo, hi) where n(r) = |s(r)| is decreasing,
// using safeguarded Newton on 1/n(r) - 1/r. `eval(r)` returns {n, dn/dr}.
template <class Eval>
double secular_root(double lo, double hi, int max_iterations, Eval&& eval) {
    double r = hi;
    for (int it = 0; it < max_iterations; ++it) {
        const auto [n, dn] = eval(r);
        const double phi = n - r;
        if (std::abs(phi) <= 1e-15 * std::max(1.0, r)) return r;
        if (phi > 0)
            lo = r;
        else
            hi = r;
        if (hi - lo <= 1e-16 * std::max(1.0, hi)) return hi;
        // psi(r) = 1/n - 1/r, psi' = -dn/n^2 + 1/r^2
        double next = std::numeric_limits<double>::quiet_NaN();
        if (n > 0 && r > 0) {
            const double psi = 1.0 / n - 1.0 / r;
            const double dpsi = -dn / (n * n) + 1.0 / (r * r);
            if (dpsi > 0) next = r - psi / dpsi;
        }
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        r = next;
    }
    return r;
}

inline Vector solve_cubic_eigen(const Matrix& B, const Vector& g, double L, int max_iterations) {
    const Index d = g.size();
    Eigen::SelfAdjointEigenSolver<Matrix> es(B);
    const Vector& lam = es.eigenvalues();
    const Matrix& Q = es.eigenvectors();
    const Vector c = Q.transpose() * g;
    const double gnorm = g.norm();
    const double lmin = lam(0);
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());

    if (L == 0.0) {
        if (!(lmin > 1e-14 * scale))
            throw ArgumentError("solve_cubic: Lreg = 0 requires H + sigma2 I positive definite");
        return -(Q * c.cwiseQuotient(lam));
    }
    if (lmin >= 0 && gnorm == 0.0) return Vector::Zero(d);

    const double r_lo = std::max(0.0, -2.0 * lmin / L);
    auto norms = [&](double r) {
        double n2 = 0.0, dn2 = 0.0;
        for (Index i = 0; i < d; ++i) {
            const double den = lam(i) + 0.5 * L * r;
            if (c(i) == 0.0) continue;
            n2 += c(i) * c(i) / (den * den);
            dn2 -= L * c(i) * c(i) / (den * den * den);
        }
        const double n = std::sqrt(n2);
        return std::pair<double, double>{n, n > 0 ? dn2 / (2 * n) : 0.0};
    };

    // Hard case: g has (numerically) no component along the bottom
    // eigenspace and the remaining step is too short to reach r_lo.
    if (lmin < 0) {
        const double tol_bottom = 1e-12 * std::max(1.0, gnorm);
        const double bottom_thresh = lmin + 1e-10 * scale;
        bool bottom_empty = true;
        for (Index i = 0; i < d && lam(i) <= bottom_thresh; ++i)
            if (std::abs(c(i)) > tol_bottom) bottom_empty = false;
        if (bottom_empty) {
            Vector coef = Vector::Zero(d);
            for (Index i = 0; i < d; ++i) {
                if (lam(i) <= bottom_thresh) continue;
                coef(i) = -c(i) / (lam(i) + 0.5 * L * r_lo);
            }
            const double partial = coef.norm();
            if (partial <= r_lo) {
                coef(0) += std::sqrt(std::max(0.0, r_lo * r_lo - partial * partial));
                return Q * coef;
            }
        }
    }

    const double hi = r_lo + std::sqrt(2.0 * gnorm / L) * (1.0 + 1e-12) + 1e-300;
    const double r = secular_root(r_lo, hi, max_iterations, norms);
    Vector coef(d);
    for (Index i = 0; i < d; ++i) coef(i) = -c(i) / (lam(i) + 0.5 * L * r);
    return Q * coef;
}

// Requires B positive definite and L > 0.
inline Vector solve_cubic_cholesky(const Matrix& B, const Vector& g, double L, int max_iterations) {
    const Index d = g.size();
    const double gnorm = g.norm();
    if (gnorm == 0.0) return Vector::Zero(d);
    Vector s_last;
    auto norms = [&](double r) {
        Matrix M = B;
        M.diagonal().array() += 0.5 * L * r;
        Eigen::LLT<Matrix> llt(M);
        s_last = -llt.solve(g);
        const Vector w = llt.matrixL().solve(s_last);
        const double n = s_last.norm();
        // d|s|^2/dr = -L s'(M^{-1})s
        const double dn2 = -L * w.squaredNorm();
        return std::pair<double, double>{n, n > 0 ? dn2 / (2 * n) : 0.0};
    };
    const double hi = std::sqrt(2.0 * gnorm / L) * (1.0 + 1e-12);
    const double r = secular_root(0.0, hi, max_iterations, norms);
    norms(r);
    return s_last;
}

}  // namespace detail

/// Global minimizer of the cubic model. Eigendecomposition for small d or
/// indefinite H + sigma2 I (including the hard case); Cholesky-based
/// secular iteration otherwise. Guarantees
/// |model_grad(s)| <= tol * max(1, |g|) or throws ConvergenceError.
inline Vector solve_cubic(const CubicModel& model, const CubicSolveOptions& opt = {}) {
    const Index d = model.g.size();
    if (model.H.rows() != d || model.H.cols() != d) throw ArgumentError("solve_cubic: H must be d x d");
    if (model.Lreg < 0) throw ArgumentError("solve_cubic: Lreg must be nonnegative");
    if (!model.g.allFinite() || !model.H.allFinite() || !std::isfinite(model.sigma2))
        throw DomainError("solve_cubic: non-finite model");
    const double hscale = std::max(1.0, model.H.cwiseAbs().maxCoeff());
    if ((model.H - model.H.transpose()).cwiseAbs().maxCoeff() > 1e-10 * hscale)
        throw ArgumentError("solve_cubic: H is not symmetric");
    Matrix B = 0.5 * (model.H + model.H.transpose());
    B.diagonal().array() += model.sigma2;

    Vector s;
    bool done = false;
    if (d > opt.eigen_max_dim && model.Lreg > 0) {
        Eigen::LLT<Matrix> llt(B);
        if (llt.info() == Eigen::Success) {
            s = detail::solve_cubic_cholesky(B, model.g, model.Lreg, opt.max_iterations);
            done = true;
        }
    }
    if (!done) s = detail::solve_cubic_eigen(B, model.g, model.Lreg, opt.max_iterations);

    const double bound = opt.tol * std::max(1.0, model.g.norm());
    double res = stationarity_residual(model, s);
    // polish with Newton steps on the stationarity system
    for (int k = 0; k < 3 && res > bound; ++k) {
        const double n = s.norm();
        Matrix J = B;
        if (n > 0) {
            J.diagonal().array() += 0.5 * model.Lreg * n;
            J += (0.5 * model.Lreg / n) * s * s.transpose();
        }
        const Vector step = J.ldlt().solve(model_grad(model, s));
        if (!step.allFinite()) break;
        const Vector trial = s - step;
        const double tres = stationarity_residual(model, trial);
        if (tres >= res) break;
        s = trial;
        res = tres;
    }
    if (!(res <= bound)) throw ConvergenceError("solve_cubic: stationarity tolerance not reached", res);
    return s;
}

// ---------------------------------------------------------------------------
// Estimating function
//   psi(x) = kappa2/2 |x - c0|^2 + kappa3/6 |x - c0|^3
//          + sum_j w_j ( <g_j, x - x_j> + mu_j/2 |x - x_j|^2 ) + const,
// w_j = alpha_j / A_j, stored as aggregated coefficients.

struct PsiState {
    Vector center0;
    double kappa2 = 0.0;
    double kappa3 = 0.0;
    /// sum_j alpha_j / A_j
    double weight_sum = 0.0;
    /// sum_j (alpha_j / A_j) mu_j
    double mu_weight = 0.0;
    /// sum_j (alpha_j / A_j) (g_j - mu_j x_j)
    Vector lin_acc;
    /// A_k of the last update (A_0 = 1).
    double A = 1.0;
    int updates = 0;

    /// Coefficient of |x - c0|^2 / 2.
    double quad_coeff() const { return kappa2 + mu_weight; }
    /// Linear coefficient in z = x - c0.
    Vector linear_term() const { return lin_acc + mu_weight * center0; }
};

inline PsiState psi_init(const Vector& center0, double kappa2, double kappa3) {
    PsiState s;
    s.center0 = center0;
    s.kappa2 = kappa2;
    s.kappa3 = kappa3;
    s.lin_acc = Vector::Zero(center0.size());
    return s;
}

/// Adds (alpha_k / A_k)(<g, x - x_next> + mu_bar/2 |x - x_next|^2) and
/// replaces the kappa coefficients. A_k must equal (1 - alpha_k) A_{k-1}.
inline PsiState psi_update(PsiState state, double alpha_k, double A_k, double kappa2_k, double kappa3_k,
                           double mu_bar, const Vector& g_hat_x, const Vector& x_next) {
    if (g_hat_x.size() != state.center0.size() || x_next.size() != state.center0.size())
        throw ArgumentError("psi_update: dimension mismatch");
    if (alpha_k < 0 || alpha_k >= 1) throw ArgumentError("psi_update: alpha must lie in [0, 1)");
    const double expected = (1.0 - alpha_k) * state.A;
    if (std::abs(A_k - expected) > 1e-12 * std::max(1e-300, expected))
        throw ArgumentError("psi_update: A_k inconsistent with (1 - alpha_k) A_{k-1}");
    const double w = alpha_k / A_k;
    state.weight_sum += w;
    state.mu_weight += w * mu_bar;
    state.lin_acc += w * (g_hat_x - mu_bar * x_next);
    state.kappa2 = kappa2_k;
    state.kappa3 = kappa3_k;
    state.A = A_k;
    ++state.updates;
    return state;
}

/// psi(x) up to an additive constant.
inline double psi_value(const PsiState& s, const Vector& x) {
    const Vector z = x - s.center0;
    const double n = z.norm();
    return s.linear_term().dot(z) + 0.5 * s.quad_coeff() * n * n + s.kappa3 / 6.0 * n * n * n;
}

inline Vector psi_gradient(const PsiState& s, const Vector& x) {
    const Vector z = x - s.center0;
    return s.linear_term() + (s.quad_coeff() + 0.5 * s.kappa3 * z.norm()) * z;
}

/// Closed-form minimizer: z = -t b/|b| with Q t + kappa3/2 t^2 = |b|.
inline Vector psi_argmin(const PsiState& s) {
    const double Q = s.quad_coeff();
    const double k3 = s.kappa3;
    if (!(Q > 0) && !(k3 > 0)) throw UnboundedModelError("psi_argmin: no positive quadratic or cubic term");
    if (!(Q >= 0) && !(k3 > 0)) throw UnboundedModelError("psi_argmin: negative curvature without cubic term");
    const Vector b = s.linear_term();
    const double nb = b.norm();
    if (nb == 0.0) {
        if (Q >= 0) return s.center0;
        Vector z = Vector::Zero(s.center0.size());
        z(0) = -2.0 * Q / k3;
        return s.center0 + z;
    }
    double t = 0.0;
    if (k3 == 0.0)
        t = nb / Q;
    else if (Q >= 0)
        t = 2.0 * nb / (Q + std::sqrt(Q * Q + 2.0 * k3 * nb));
    else
        t = (-Q + std::sqrt(Q * Q + 2.0 * k3 * nb)) / k3;
    return s.center0 - (t / nb) * b;
}

}  // namespace dcn
