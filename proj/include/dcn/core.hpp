#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace dcn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Bad shapes, bad indices, violated preconditions.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite inputs to an oracle.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Infeasible or inconsistent configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mixing sequence does not contract (lambda <= 0).
class ContractionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative solver missed its tolerance; carries the final residual.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"), message_(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    double residual_;
};

/// Reference solve failed; schedules cannot be built without it.
class OracleFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Estimating function has no minimizer.
class UnboundedModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Runs fn() and rethrows library errors with `ctx` prepended, keeping the type.
template <class Fn>
decltype(auto) with_context(const std::string& ctx, Fn&& fn) {
    try {
        return fn();
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(ctx + ": " + e.message(), e.residual());
    } catch (const ArgumentError& e) {
        throw ArgumentError(ctx + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(ctx + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(ctx + ": " + e.what());
    } catch (const ContractionError& e) {
        throw ContractionError(ctx + ": " + e.what());
    } catch (const UnboundedModelError& e) {
        throw UnboundedModelError(ctx + ": " + e.what());
    }
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// Row-wise average of a stacked matrix, as a column vector.
inline Vector row_mean(const Matrix& U) { return U.colwise().mean().transpose(); }

/// Largest singular value of a symmetric matrix (spectral norm).
inline double sym_op_norm(const Matrix& A) {
    if (A.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Spectral norm of a general matrix.
inline double op_norm(const Matrix& A) {
    if (A.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(A);
    return svd.singularValues()(0);
}

/// Flatten a d x d matrix row-major into a length d^2 row.
inline Eigen::RowVectorXd flatten(const Matrix& H) {
    Eigen::RowVectorXd r(H.size());
    const Index d = H.cols();
    for (Index i = 0; i < H.rows(); ++i)
        for (Index j = 0; j < d; ++j) r(i * d + j) = H(i, j);
    return r;
}

inline Matrix unflatten(const Eigen::Ref<const Eigen::RowVectorXd>& r, Index d) {
    if (r.size() != d * d) throw ArgumentError("unflatten: row length is not d^2");
    Matrix H(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) H(i, j) = r(i * d + j);
    return H;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// handled by exactly one thread, so results written per index are
/// independent of the worker count.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    workers = std::min(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace dcn
