#pragma once

// Hessian exchange for generalized linear models: datasets are flooded to
// every node once, after which nodes mix per-sample link curvatures instead
// of d x d matrices. Optional top-k sparsification of the local block.

#include <cstdint>
#include <cstring>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dcn/consensus.hpp"
#include "dcn/core.hpp"
#include "dcn/network.hpp"
#include "dcn/objectives.hpp"

namespace dcn {

struct GlmWeights {
    Vector h;
    int owner = 0;
};

/// Per-sample link curvatures at x (the l2 term is added at reconstruction).
inline GlmWeights glm_weights(const LocalObjective& obj, const Vector& x, int owner = 0) {
    return GlmWeights{obj.link_curvatures(x), owner};
}

/// Keeps the k largest-magnitude entries; ties go to the lower index.
inline GlmWeights topk_compress(const GlmWeights& w, int k) {
    const Index l = w.h.size();
    if (k < 1 || k > l) throw ArgumentError("topk_compress: k must lie in [1, l]");
    std::vector<Index> idx(static_cast<std::size_t>(l));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Index a, Index b) { return std::abs(w.h(a)) > std::abs(w.h(b)); });
    GlmWeights out{Vector::Zero(l), w.owner};
    for (int j = 0; j < k; ++j) out.h(idx[static_cast<std::size_t>(j)]) = w.h(idx[static_cast<std::size_t>(j)]);
    return out;
}

namespace detail {

inline void fnv1a(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
}

}  // namespace detail

/// Every node's feature rows, labels and regularizer, as held after flooding.
struct ReplicatedData {
    std::vector<Matrix> features;
    std::vector<Vector> labels;
    std::vector<double> mu_reg;
    /// holds[i][j]: node i has dataset j.
    std::vector<std::vector<bool>> holds;
    int steps = 0;
    double cost = 0.0;

    std::size_t nodes() const noexcept { return features.size(); }

    bool complete() const {
        for (const auto& row : holds)
            for (bool b : row)
                if (!b) return false;
        return !holds.empty();
    }

    std::uint64_t fingerprint() const {
        std::uint64_t h = 1469598103934665603ULL;
        for (std::size_t j = 0; j < features.size(); ++j) {
            const Index r = features[j].rows(), c = features[j].cols();
            detail::fnv1a(h, &r, sizeof r);
            detail::fnv1a(h, &c, sizeof c);
            detail::fnv1a(h, features[j].data(), sizeof(double) * static_cast<std::size_t>(features[j].size()));
            detail::fnv1a(h, labels[j].data(), sizeof(double) * static_cast<std::size_t>(labels[j].size()));
            detail::fnv1a(h, &mu_reg[j], sizeof(double));
        }
        return h;
    }
};

/// Local datasets only; nothing exchanged yet.
inline ReplicatedData local_datasets(const ProblemSuite& suite) {
    if (!suite.is_glm()) throw ArgumentError("glm: suite is not a GLM suite");
    ReplicatedData r;
    const std::size_t m = suite.size();
    r.holds.assign(m, std::vector<bool>(m, false));
    for (std::size_t j = 0; j < m; ++j) {
        const auto* g = suite[j].as_logistic();
        r.features.push_back(g->features);
        r.labels.push_back(g->labels);
        r.mu_reg.push_back(g->mu_reg);
        r.holds[j][j] = true;
    }
    return r;
}

/// Synchronous flooding over schedule steps 0, 1, ...: at every step each
/// node forwards the datasets it held at the start of the step to its
/// neighbours. Each new dataset delivery costs l_j x d scalars. Returns the
/// completed state with the steps used and the added cost (0 when `data`
/// is already complete).
inline ReplicatedData replicate_datasets(ReplicatedData data, const TopologySchedule& schedule,
                                         int horizon_cap = -1) {
    const std::size_t m = data.nodes();
    if (static_cast<int>(m) != schedule.nodes()) throw ArgumentError("replicate_datasets: node count mismatch");
    if (horizon_cap < 0) horizon_cap = 4 * static_cast<int>(m) * std::max(1, schedule.tau()) + 16;
    data.steps = 0;
    data.cost = 0.0;
    int step = 0;
    while (!data.complete()) {
        if (step >= horizon_cap) throw ConfigError("replicate_datasets: schedule did not connect all nodes in time");
        const auto before = data.holds;
        const auto graph = schedule.graph(step);
        for (const auto& [a, b] : graph.edges()) {
            for (std::size_t j = 0; j < m; ++j) {
                const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
                const double size = static_cast<double>(data.features[j].size());
                if (before[ia][j] && !data.holds[ib][j]) {
                    data.holds[ib][j] = true;
                    data.cost += size;
                }
                if (before[ib][j] && !data.holds[ia][j]) {
                    data.holds[ia][j] = true;
                    data.cost += size;
                }
            }
        }
        ++step;
    }
    data.steps = step;
    return data;
}

inline ReplicatedData replicate_datasets(const ProblemSuite& suite, const TopologySchedule& schedule,
                                         int horizon_cap = -1) {
    return replicate_datasets(local_datasets(suite), schedule, horizon_cap);
}

/// Column layout of the mixed weight stack: every node carries all m
/// blocks (plus one regularizer slot per block when regularizers differ).
struct WeightLayout {
    std::vector<Index> offset;  // start of block j
    std::vector<Index> length;  // l_j
    bool mu_slots = false;
    Index width = 0;

    Index mu_index(std::size_t j) const { return offset[j] + length[j]; }
};

inline WeightLayout weight_layout(const ReplicatedData& data) {
    WeightLayout L;
    const std::size_t m = data.nodes();
    for (std::size_t j = 1; j < m; ++j)
        if (data.mu_reg[j] != data.mu_reg[0]) L.mu_slots = true;
    Index pos = 0;
    for (std::size_t j = 0; j < m; ++j) {
        L.offset.push_back(pos);
        L.length.push_back(data.features[j].rows());
        pos += data.features[j].rows() + (L.mu_slots ? 1 : 0);
    }
    L.width = pos;
    return L;
}

/// Row i holds m * h_i in block i and zeros elsewhere, so the row average
/// is the concatenation of all h_j.
inline Matrix weight_stack(const std::vector<GlmWeights>& w, const WeightLayout& L, const ReplicatedData& data) {
    const std::size_t m = w.size();
    if (m != L.offset.size()) throw ArgumentError("glm: layout mismatch");
    Matrix S = Matrix::Zero(static_cast<Index>(m), L.width);
    for (std::size_t i = 0; i < m; ++i) {
        const auto owner = static_cast<std::size_t>(w[i].owner);
        if (owner != i || w[i].h.size() != L.length[i]) throw ArgumentError("glm: layout mismatch");
        S.row(static_cast<Index>(i)).segment(L.offset[i], L.length[i]) = static_cast<double>(m) * w[i].h.transpose();
        if (L.mu_slots) S(static_cast<Index>(i), L.mu_index(i)) = static_cast<double>(m) * data.mu_reg[i];
    }
    return S;
}

/// Mixes weight stacks (thin wrapper over the communicator).
inline Matrix consensus_weights(const Matrix& stack, Communicator& comm, int T, ConsensusReport* report = nullptr) {
    return comm.mix(stack, T, report);
}

/// (1/m) sum_j sum_l w_jl a_jl a_jl' + regularizer, from one mixed row.
inline Matrix reconstruct_hessian(const Eigen::Ref<const Eigen::RowVectorXd>& row, const WeightLayout& L,
                                  const ReplicatedData& data) {
    if (row.size() != L.width) throw ArgumentError("glm: weight row has the wrong width");
    const std::size_t m = data.nodes();
    const Index d = data.features.front().cols();
    Matrix H = Matrix::Zero(d, d);
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const Matrix& F = data.features[j];
        const Vector wj = row.segment(L.offset[j], L.length[j]).transpose();
        H.noalias() += F.transpose() * wj.asDiagonal() * F;
        mu += L.mu_slots ? row(L.mu_index(j)) : data.mu_reg[j];
    }
    H /= static_cast<double>(m);
    H.diagonal().array() += mu / static_cast<double>(m);
    return 0.5 * (H + H.transpose());
}

/// sqrt(sum_jl |a_jl|^4) plus one per regularizer slot: converts a weight
/// error into an operator-norm Hessian error bound (times 1/m).
inline double weight_error_gain(const ReplicatedData& data, const WeightLayout& L) {
    double s = 0.0;
    for (const auto& F : data.features)
        for (Index r = 0; r < F.rows(); ++r) s += std::pow(F.row(r).squaredNorm(), 2);
    if (L.mu_slots) s += static_cast<double>(data.nodes());
    return std::sqrt(s);
}

class GlmHessianBackend final : public HessianBackend {
public:
    /// `data` must be fully replicated.
    GlmHessianBackend(ReplicatedData data, std::optional<int> topk = std::nullopt)
        : data_(std::move(data)), layout_(weight_layout(data_)), topk_(topk) {
        if (!data_.complete()) throw ArgumentError("glm backend: datasets are not replicated");
        gain_ = weight_error_gain(data_, layout_);
    }

    std::string name() const override { return topk_ ? "glm-topk:" + std::to_string(*topk_) : "glm"; }
    const ReplicatedData& data() const noexcept { return data_; }
    const WeightLayout& layout() const noexcept { return layout_; }

    HessianExchangeResult exchange(const ProblemSuite& suite, const Matrix& points, Communicator& comm,
                                   const HessianRounds& rounds, std::size_t workers) override {
        const std::size_t m = suite.size();
        if (m != data_.nodes()) throw ArgumentError("glm backend: node count mismatch");
        std::vector<GlmWeights> exact(m), sent(m);
        parallel_for(m, workers, [&](std::size_t i) {
            exact[i] = glm_weights(suite[i], points.row(static_cast<Index>(i)).transpose(), static_cast<int>(i));
            sent[i] = topk_ ? topk_compress(exact[i], std::min<int>(*topk_, static_cast<int>(exact[i].h.size())))
                            : exact[i];
        });
        const Matrix stack = weight_stack(sent, layout_, data_);
        int T = rounds.fixed ? *rounds.fixed : 0;
        if (!rounds.fixed) {
            const auto c = comm.contraction();
            const double target = rounds.target * static_cast<double>(m) / gain_;
            T = rounds_for(frob_deviation(stack), target, c.tau, c.lambda);
        }
        HessianExchangeResult out;
        const Matrix mixed = consensus_weights(stack, comm, T, &out.report);
        out.H.resize(m);
        parallel_for(m, workers,
                     [&](std::size_t i) { out.H[i] = reconstruct_hessian(mixed.row(static_cast<Index>(i)), layout_, data_); });
        out.exact_mean = reconstruct_hessian(weight_stack(exact, layout_, data_).colwise().mean(), layout_, data_);
        return out;
    }

private:
    ReplicatedData data_;
    WeightLayout layout_;
    std::optional<int> topk_;
    double gain_ = 1.0;
};

}  // namespace dcn
