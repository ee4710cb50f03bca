#pragma once

// Local objective families, the averaged problem they define, and the
// centralized reference solve that supplies x*, f*, D and the
// heterogeneity measures consumed by the schedules.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcn/core.hpp"

namespace dcn {

enum class ObjectiveKind { quadratic, glm_logistic };

inline std::string to_string(ObjectiveKind k) {
    return k == ObjectiveKind::quadratic ? "quadratic" : "glm-logistic";
}

/// f(x) = 1/2 x'Ax + b'x + c
struct QuadraticData {
    Matrix A;
    Vector b;
    double c = 0.0;
};

/// f(x) = sum_j log(1 + exp(-y_j a_j'x)) + mu_reg/2 |x|^2, labels in {-1, +1}.
struct LogisticData {
    Matrix features;  // one sample per row
    Vector labels;
    double mu_reg = 0.0;
};

/// Lipschitz moduli of gradient / Hessian and strong convexity modulus.
struct Constants {
    double L1 = 0.0;
    double L2 = 0.0;
    double mu = 0.0;
};

namespace detail {

inline double sigmoid(double u) {
    if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

// log(1 + exp(u)) without overflow
inline double softplus(double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); }

inline void require_dim(Index expected, const Vector& x) {
    if (x.size() != expected)
        throw ArgumentError("dimension mismatch: expected " + std::to_string(expected) + ", got " +
                            std::to_string(x.size()));
}

inline void require_finite(const Vector& x) {
    if (!x.allFinite()) throw DomainError("non-finite input to oracle");
}

}  // namespace detail

class LocalObjective {
public:
    static LocalObjective quadratic(Matrix A, Vector b, double c = 0.0) {
        if (A.rows() != A.cols() || A.rows() != b.size() || A.rows() < 1)
            throw ArgumentError("quadratic: A must be d x d and b length d");
        const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
        if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw ArgumentError("quadratic: A is not symmetric");
        A = 0.5 * (A + A.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        if (lo < -1e-12 * scale) throw ArgumentError("quadratic: A is not positive semidefinite");
        LocalObjective obj;
        obj.dim_ = A.rows();
        obj.constants_ = Constants{std::max(hi, 0.0), 0.0, lo > 1e-12 * scale ? lo : 0.0};
        obj.data_ = QuadraticData{std::move(A), std::move(b), c};
        return obj;
    }

    static LocalObjective logistic(Matrix features, Vector labels, double mu_reg) {
        if (features.rows() != labels.size() || features.cols() < 1)
            throw ArgumentError("logistic: one label per feature row required");
        if (mu_reg < 0) throw ArgumentError("logistic: mu_reg must be nonnegative");
        for (Index j = 0; j < labels.size(); ++j)
            if (labels(j) != 1.0 && labels(j) != -1.0) throw ArgumentError("logistic: labels must be +-1");
        LocalObjective obj;
        obj.dim_ = features.cols();
        double gram_max = 0.0;
        if (features.rows() > 0) {
            Matrix gram = features.transpose() * features;
            Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
            gram_max = std::max(0.0, es.eigenvalues().maxCoeff());
        }
        double cubic_sum = 0.0;
        for (Index j = 0; j < features.rows(); ++j) cubic_sum += std::pow(features.row(j).norm(), 3);
        // sigma'' <= 1/4 and |sigma'''| <= 1/(6 sqrt 3)
        obj.constants_ = Constants{mu_reg + 0.25 * gram_max, cubic_sum / (6.0 * std::sqrt(3.0)), mu_reg};
        obj.data_ = LogisticData{std::move(features), std::move(labels), mu_reg};
        return obj;
    }

    Index dim() const noexcept { return dim_; }
    ObjectiveKind kind() const noexcept {
        return std::holds_alternative<QuadraticData>(data_) ? ObjectiveKind::quadratic : ObjectiveKind::glm_logistic;
    }
    const Constants& constants() const noexcept { return constants_; }
    const QuadraticData* as_quadratic() const noexcept { return std::get_if<QuadraticData>(&data_); }
    const LogisticData* as_logistic() const noexcept { return std::get_if<LogisticData>(&data_); }

    double value(const Vector& x) const {
        check(x);
        if (auto q = as_quadratic()) return 0.5 * x.dot(q->A * x) + q->b.dot(x) + q->c;
        const auto& g = *as_logistic();
        const Vector margins = g.features * x;
        double v = 0.5 * g.mu_reg * x.squaredNorm();
        for (Index j = 0; j < margins.size(); ++j) v += detail::softplus(-g.labels(j) * margins(j));
        return v;
    }

    Vector gradient(const Vector& x) const {
        check(x);
        if (auto q = as_quadratic()) return q->A * x + q->b;
        const auto& g = *as_logistic();
        const Vector margins = g.features * x;
        Vector w(margins.size());
        for (Index j = 0; j < margins.size(); ++j)
            w(j) = -g.labels(j) * detail::sigmoid(-g.labels(j) * margins(j));
        return g.features.transpose() * w + g.mu_reg * x;
    }

    /// Per-sample link curvature phi''(a_j'x); GLM objectives only.
    Vector link_curvatures(const Vector& x) const {
        check(x);
        const auto* g = as_logistic();
        if (!g) throw ArgumentError("link_curvatures: objective is not a GLM");
        const Vector margins = g->features * x;
        Vector h(margins.size());
        for (Index j = 0; j < margins.size(); ++j) {
            h(j) = detail::sigmoid(margins(j)) * detail::sigmoid(-margins(j));
        }
        return h;
    }

    Matrix hessian(const Vector& x) const {
        check(x);
        if (auto q = as_quadratic()) return q->A;
        const auto& g = *as_logistic();
        const Vector h = link_curvatures(x);
        Matrix H = g.features.transpose() * h.asDiagonal() * g.features;
        H.diagonal().array() += g.mu_reg;
        return 0.5 * (H + H.transpose());
    }

private:
    LocalObjective() = default;

    void check(const Vector& x) const {
        detail::require_dim(dim_, x);
        detail::require_finite(x);
    }

    Index dim_ = 0;
    Constants constants_;
    std::variant<QuadraticData, LogisticData> data_;
};

struct EvalResult {
    double value = 0.0;
    std::optional<Vector> grad;
    std::optional<Matrix> hess;
};

/// Oracle access up to the requested derivative order (0, 1 or 2).
inline EvalResult eval(const LocalObjective& obj, const Vector& x, int order) {
    if (order < 0 || order > 2) throw ArgumentError("eval: order must be 0, 1 or 2");
    EvalResult r;
    r.value = obj.value(x);
    if (order >= 1) r.grad = obj.gradient(x);
    if (order >= 2) r.hess = obj.hessian(x);
    return r;
}

/// The m local objectives and the aggregates the theory is stated in.
class ProblemSuite {
public:
    ProblemSuite() = default;

    explicit ProblemSuite(std::vector<LocalObjective> objectives) : objectives_(std::move(objectives)) {
        if (objectives_.empty()) throw ArgumentError("suite: at least one objective required");
        const Index d = objectives_.front().dim();
        L1_max_ = L2_max_ = 0.0;
        mu_hat_ = std::numeric_limits<double>::infinity();
        double s1 = 0, s2 = 0, sm = 0;
        for (const auto& o : objectives_) {
            if (o.dim() != d) throw ArgumentError("suite: objectives must share a dimension");
            const auto& c = o.constants();
            s1 += c.L1;
            s2 += c.L2;
            sm += c.mu;
            L1_max_ = std::max(L1_max_, c.L1);
            L2_max_ = std::max(L2_max_, c.L2);
            mu_hat_ = std::min(mu_hat_, c.mu);
        }
        const double m = static_cast<double>(objectives_.size());
        L1_bar_ = s1 / m;
        L2_bar_ = s2 / m;
        mu_bar_ = sm / m;
    }

    std::size_t size() const noexcept { return objectives_.size(); }
    Index dim() const { return objectives_.empty() ? 0 : objectives_.front().dim(); }
    const LocalObjective& operator[](std::size_t i) const { return objectives_.at(i); }
    const std::vector<LocalObjective>& objectives() const noexcept { return objectives_; }

    double L1_bar() const noexcept { return L1_bar_; }
    double L2_bar() const noexcept { return L2_bar_; }
    double mu_bar() const noexcept { return mu_bar_; }
    double L1_max() const noexcept { return L1_max_; }
    double L2_max() const noexcept { return L2_max_; }
    double mu_hat() const noexcept { return mu_hat_; }

    bool is_glm() const {
        for (const auto& o : objectives_)
            if (o.kind() != ObjectiveKind::glm_logistic) return false;
        return !objectives_.empty();
    }

    double value(const Vector& x) const {
        double v = 0;
        for (const auto& o : objectives_) v += o.value(x);
        return v / static_cast<double>(size());
    }
    Vector gradient(const Vector& x) const {
        Vector g = Vector::Zero(dim());
        for (const auto& o : objectives_) g += o.gradient(x);
        return g / static_cast<double>(size());
    }
    Matrix hessian(const Vector& x) const {
        Matrix H = Matrix::Zero(dim(), dim());
        for (const auto& o : objectives_) H += o.hessian(x);
        return H / static_cast<double>(size());
    }

private:
    std::vector<LocalObjective> objectives_;
    double L1_bar_ = 0, L2_bar_ = 0, mu_bar_ = 0, L1_max_ = 0, L2_max_ = 0, mu_hat_ = 0;
};

enum class SuiteFamily { quadratic, logistic };

/// Generator settings for a synthetic suite.
struct SuiteSpec {
    SuiteFamily family = SuiteFamily::quadratic;
    int m = 4;
    int d = 5;
    /// 0 gives identical nodes; larger values spread the local problems apart.
    double heterogeneity = 0.5;
    // quadratic: spectrum of every A_i is log-spaced in [mu, L1]
    double mu = 1.0;
    double L1 = 10.0;
    // logistic
    int samples_per_node = 10;
    double mu_reg = 0.1;
    double label_noise = 0.1;
    double feature_scale = 1.0;
};

namespace detail {

inline Matrix gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix M(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) M(i, j) = n(rng);
    return M;
}

inline Matrix orthonormal_from(const Matrix& G) {
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(G.rows(), G.cols());
    const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < Q.cols(); ++j)
        if (R(j, j) < 0) Q.col(j) *= -1.0;
    return Q;
}

}  // namespace detail

/// Deterministic synthetic suite for a fixed seed.
inline ProblemSuite make_suite(const SuiteSpec& spec, std::uint64_t seed) {
    if (spec.m < 2) throw ConfigError("make_suite: m must be at least 2");
    if (spec.d < 1) throw ConfigError("make_suite: d must be at least 1");
    if (spec.heterogeneity < 0) throw ConfigError("make_suite: heterogeneity must be nonnegative");
    std::mt19937_64 rng(seed);
    std::vector<LocalObjective> objs;
    objs.reserve(spec.m);
    const Index d = spec.d;

    if (spec.family == SuiteFamily::quadratic) {
        if (spec.mu < 0 || spec.L1 <= 0) throw ConfigError("make_suite: need mu >= 0 and L1 > 0");
        if (spec.mu > spec.L1) throw ConfigError("make_suite: requested mu exceeds requested L1");
        Vector spectrum(d);
        if (d == 1) {
            if (spec.mu != spec.L1) throw ConfigError("make_suite: d = 1 requires mu == L1");
            spectrum(0) = spec.L1;
        } else if (spec.mu == 0) {
            spectrum(0) = 0.0;
            for (Index k = 1; k < d; ++k) spectrum(k) = spec.L1 * static_cast<double>(k) / static_cast<double>(d - 1);
        } else {
            const double lo = std::log(spec.mu), hi = std::log(spec.L1);
            for (Index k = 0; k < d; ++k)
                spectrum(k) = std::exp(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(d - 1));
            spectrum(0) = spec.mu;
            spectrum(d - 1) = spec.L1;
        }
        const Matrix Q0 = detail::orthonormal_from(detail::gaussian_matrix(rng, d, d));
        const Vector center = detail::gaussian_matrix(rng, d, 1).col(0);
        for (int i = 0; i < spec.m; ++i) {
            const Matrix G = detail::gaussian_matrix(rng, d, d);
            const Vector shift = detail::gaussian_matrix(rng, d, 1).col(0);
            const Matrix Qi = spec.heterogeneity == 0
                                  ? Q0
                                  : detail::orthonormal_from(Q0 + spec.heterogeneity * G / std::sqrt(double(d)));
            Matrix A = Qi * spectrum.asDiagonal() * Qi.transpose();
            A = 0.5 * (A + A.transpose());
            const Vector local_min = center + spec.heterogeneity * shift;
            Vector b = -(A * local_min);
            objs.push_back(LocalObjective::quadratic(std::move(A), std::move(b)));
        }
    } else {
        if (spec.samples_per_node < 1) throw ConfigError("make_suite: samples_per_node must be positive");
        if (spec.mu_reg < 0) throw ConfigError("make_suite: mu_reg must be nonnegative");
        if (spec.label_noise < 0 || spec.label_noise >= 0.5) throw ConfigError("make_suite: label_noise in [0, 0.5)");
        const double rd = std::sqrt(double(d));
        const Vector w_true = 2.0 * detail::gaussian_matrix(rng, d, 1).col(0) / rd;
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int i = 0; i < spec.m; ++i) {
            const Vector node_center = spec.heterogeneity * detail::gaussian_matrix(rng, d, 1).col(0) / rd;
            Matrix F = detail::gaussian_matrix(rng, spec.samples_per_node, d) / rd;
            F.rowwise() += node_center.transpose();
            F *= spec.feature_scale;
            Vector y(spec.samples_per_node);
            for (int j = 0; j < spec.samples_per_node; ++j) {
                double label = F.row(j).dot(w_true) >= 0 ? 1.0 : -1.0;
                if (unif(rng) < spec.label_noise) label = -label;
                y(j) = label;
            }
            objs.push_back(LocalObjective::logistic(std::move(F), std::move(y), spec.mu_reg));
        }
    }
    return ProblemSuite(std::move(objs));
}

/// Centralized ground truth for one suite and start point.
struct ReferenceSolution {
    Vector x_star;
    double f_star = 0.0;
    /// Level-set diameter proxy: 2 * max distance to x* along the centralized
    /// trajectory (start included).
    double D = 0.0;
    double zeta_g = 0.0;
    double zeta_H = 0.0;
    /// Boundedness radius for the accelerated method, same construction as D.
    double R_bar = 0.0;
    /// |x0 - x*|
    double R = 0.0;
    Vector x0;
    int iterations = 0;
    double grad_norm = 0.0;
};

/// Damped Newton on the exact average objective, then the derived constants.
inline ReferenceSolution reference_solve(const ProblemSuite& suite, double eps_ref, const Vector& x0,
                                         int max_iterations = 500) {
    if (eps_ref <= 0) throw ArgumentError("reference_solve: eps_ref must be positive");
    detail::require_dim(suite.dim(), x0);
    Vector x = x0;
    std::vector<Vector> trajectory{x};
    double fx = suite.value(x);
    Vector g = suite.gradient(x);
    int it = 0;
    for (; it < max_iterations && g.norm() > eps_ref; ++it) {
        const Matrix H = suite.hessian(x);
        const double hscale = std::max(1.0, H.cwiseAbs().maxCoeff());
        double reg = 0.0;
        Vector p;
        for (int attempt = 0; attempt < 60; ++attempt) {
            Eigen::LLT<Matrix> llt(H + reg * Matrix::Identity(H.rows(), H.cols()));
            if (llt.info() == Eigen::Success) {
                p = -llt.solve(g);
                if (p.allFinite()) break;
            }
            reg = reg == 0.0 ? 1e-12 * hscale : reg * 10.0;
        }
        if (p.size() == 0) throw OracleFailure("reference_solve: Newton system could not be factored");
        const double slope = g.dot(p);
        double t = 1.0;
        bool accepted = false;
        // predicted decrease below the roundoff of f: value tests are meaningless
        const bool roundoff = -slope <= 1e-13 * std::max(1.0, std::abs(fx));
        for (int ls = 0; ls < 60 && !roundoff; ++ls) {
            const Vector trial = x + t * p;
            const double ft = suite.value(trial);
            if (ft <= fx + 1e-4 * t * slope) {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // roundoff floor near the optimum: take the full step if it shrinks the gradient
            const Vector trial = x + p;
            if (suite.gradient(trial).norm() < g.norm()) {
                x = trial;
                fx = suite.value(x);
            } else {
                throw OracleFailure("reference_solve: line search stalled at |grad| = " + detail::sci(g.norm()));
            }
        }
        trajectory.push_back(x);
        g = suite.gradient(x);
    }
    if (g.norm() > eps_ref)
        throw OracleFailure("reference_solve: no convergence within " + std::to_string(max_iterations) +
                            " iterations (|grad| = " + detail::sci(g.norm()) + ")");

    ReferenceSolution ref;
    ref.x_star = x;
    ref.f_star = fx;
    ref.x0 = x0;
    ref.iterations = it;
    ref.grad_norm = g.norm();
    double radius = 0.0;
    for (const auto& p : trajectory) radius = std::max(radius, (p - x).norm());
    ref.D = 2.0 * radius;
    ref.R_bar = 2.0 * radius;
    ref.R = (x0 - x).norm();

    const double m = static_cast<double>(suite.size());
    const Matrix H_star = suite.hessian(x);
    double sg = 0.0, sh = 0.0;
    for (const auto& o : suite.objectives()) {
        sg += o.gradient(x).squaredNorm();
        sh += (o.hessian(x) - H_star).squaredNorm();
    }
    ref.zeta_g = std::sqrt(sg / m);
    ref.zeta_H = std::sqrt(sh / m);
    return ref;
}

struct FiniteDifferenceReport {
    /// |g_fd - g|_2 / max(1, |g|_2)
    double grad_rel_err = 0.0;
    /// |H_fd - H|_F / max(1, |H|_F)
    double hess_rel_err = 0.0;
};

/// Central differences of value (against grad) and of grad (against hess).
inline FiniteDifferenceReport finite_difference_check(const LocalObjective& obj, const Vector& x, double h) {
    const Index d = obj.dim();
    detail::require_dim(d, x);
    const Vector g = obj.gradient(x);
    const Matrix H = obj.hessian(x);
    Vector g_fd(d);
    Matrix H_fd(d, d);
    for (Index k = 0; k < d; ++k) {
        Vector xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        g_fd(k) = (obj.value(xp) - obj.value(xm)) / (2 * h);
        H_fd.col(k) = (obj.gradient(xp) - obj.gradient(xm)) / (2 * h);
    }
    FiniteDifferenceReport r;
    r.grad_rel_err = (g_fd - g).norm() / std::max(1.0, g.norm());
    r.hess_rel_err = (H_fd - H).norm() / std::max(1.0, H.norm());
    return r;
}

// ---------------------------------------------------------------------------
// Serialization: self-describing JSON container, bit-exact for doubles.

namespace detail {

inline nlohmann::json to_json(const Matrix& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < M.rows(); ++i) {
        nlohmann::json r = nlohmann::json::array();
        for (Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline nlohmann::json to_json(const Vector& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Index cols_if_empty = 0) {
    const Index rows = static_cast<Index>(j.size());
    const Index cols = rows ? static_cast<Index>(j.at(0).size()) : cols_if_empty;
    Matrix M(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        if (static_cast<Index>(j.at(i).size()) != cols) throw ConfigError("suite file: ragged matrix");
        for (Index c = 0; c < cols; ++c) M(i, c) = j.at(i).at(c).get<double>();
    }
    return M;
}

inline Vector vector_from_json(const nlohmann::json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
    return v;
}

}  // namespace detail

inline nlohmann::json suite_to_json(const ProblemSuite& suite) {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : suite.objectives()) {
        nlohmann::json j;
        j["kind"] = to_string(o.kind());
        j["dim"] = o.dim();
        if (auto q = o.as_quadratic()) {
            j["A"] = detail::to_json(q->A);
            j["b"] = detail::to_json(q->b);
            j["c"] = q->c;
        } else {
            const auto& g = *o.as_logistic();
            j["features"] = detail::to_json(g.features);
            j["labels"] = detail::to_json(g.labels);
            j["mu_reg"] = g.mu_reg;
        }
        objs.push_back(std::move(j));
    }
    return {{"format", "dcn-suite"}, {"version", 1}, {"objectives", std::move(objs)}};
}

inline ProblemSuite suite_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "dcn-suite" || j.value("version", 0) != 1)
        throw ConfigError("suite file: unrecognized format header");
    std::vector<LocalObjective> objs;
    for (const auto& o : j.at("objectives")) {
        const auto kind = o.at("kind").get<std::string>();
        const Index dim = o.at("dim").get<Index>();
        if (kind == "quadratic") {
            objs.push_back(LocalObjective::quadratic(detail::matrix_from_json(o.at("A")),
                                                     detail::vector_from_json(o.at("b")), o.value("c", 0.0)));
        } else if (kind == "glm-logistic") {
            objs.push_back(LocalObjective::logistic(detail::matrix_from_json(o.at("features"), dim),
                                                    detail::vector_from_json(o.at("labels")),
                                                    o.at("mu_reg").get<double>()));
        } else {
            throw ConfigError("suite file: unknown objective kind '" + kind + "'");
        }
    }
    return ProblemSuite(std::move(objs));
}

}  // namespace dcn
