#pragma once

// Communication graphs, Metropolis mixing matrices, time-varying schedules
// and their contraction parameters, and Chebyshev-accelerated mixing for
// static graphs.

#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dcn/core.hpp"

namespace dcn {

using Edge = std::pair<int, int>;

/// Undirected simple graph on nodes [0, m).
class GraphSnapshot {
public:
    GraphSnapshot() = default;

    /// Validates and normalizes: i < j, sorted, duplicates removed.
    GraphSnapshot(int m, std::vector<Edge> edges) : m_(m) {
        if (m < 1) throw ArgumentError("graph: need at least one node");
        for (auto& [i, j] : edges) {
            if (i < 0 || j < 0 || i >= m || j >= m) throw ArgumentError("graph: node index out of range");
            if (i == j) throw ArgumentError("graph: self-loops are not allowed");
            if (i > j) std::swap(i, j);
        }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        edges_ = std::move(edges);
    }

    int nodes() const noexcept { return m_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    std::size_t edge_count() const noexcept { return edges_.size(); }

    std::vector<int> degrees() const {
        std::vector<int> q(m_, 0);
        for (auto [i, j] : edges_) {
            ++q[i];
            ++q[j];
        }
        return q;
    }

    /// Hop distances from `source` (-1 when unreachable).
    std::vector<int> bfs(int source) const {
        std::vector<std::vector<int>> adj(m_);
        for (auto [i, j] : edges_) {
            adj[i].push_back(j);
            adj[j].push_back(i);
        }
        std::vector<int> dist(m_, -1);
        std::queue<int> q;
        dist[source] = 0;
        q.push(source);
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int v : adj[u])
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    q.push(v);
                }
        }
        return dist;
    }

    bool connected() const {
        const auto d = bfs(0);
        return std::none_of(d.begin(), d.end(), [](int x) { return x < 0; });
    }

    friend bool operator==(const GraphSnapshot& a, const GraphSnapshot& b) {
        return a.m_ == b.m_ && a.edges_ == b.edges_;
    }

private:
    int m_ = 0;
    std::vector<Edge> edges_;
};

inline GraphSnapshot union_of(const std::vector<GraphSnapshot>& graphs) {
    if (graphs.empty()) throw ArgumentError("union_of: empty list");
    std::vector<Edge> all;
    for (const auto& g : graphs) all.insert(all.end(), g.edges().begin(), g.edges().end());
    return GraphSnapshot(graphs.front().nodes(), std::move(all));
}

inline GraphSnapshot ring_graph(int m) {
    std::vector<Edge> e;
    if (m == 2) e.emplace_back(0, 1);
    if (m > 2)
        for (int i = 0; i < m; ++i) e.emplace_back(i, (i + 1) % m);
    return GraphSnapshot(m, std::move(e));
}

inline GraphSnapshot path_graph(int m) {
    std::vector<Edge> e;
    for (int i = 0; i + 1 < m; ++i) e.emplace_back(i, i + 1);
    return GraphSnapshot(m, std::move(e));
}

inline GraphSnapshot complete_graph(int m) {
    std::vector<Edge> e;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) e.emplace_back(i, j);
    return GraphSnapshot(m, std::move(e));
}

/// Unit-square geometric graph; resampled until connected (at most 100 draws).
inline GraphSnapshot random_geometric_graph(int m, double radius, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<std::pair<double, double>> pts(m);
        for (auto& p : pts) p = {u(rng), u(rng)};
        std::vector<Edge> e;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                const double dx = pts[i].first - pts[j].first, dy = pts[i].second - pts[j].second;
                if (dx * dx + dy * dy <= radius * radius) e.emplace_back(i, j);
            }
        GraphSnapshot g(m, std::move(e));
        if (g.connected()) return g;
    }
    throw ConfigError("random-geometric graph stayed disconnected after 100 draws; increase the radius");
}

/// W_ij = 1 / (1 + max(q_i, q_j)) on edges, diagonal completes the row.
inline Matrix metropolis(const GraphSnapshot& g) {
    const int m = g.nodes();
    const auto q = g.degrees();
    Matrix W = Matrix::Zero(m, m);
    for (auto [i, j] : g.edges()) {
        const double w = 1.0 / (1.0 + std::max(q[i], q[j]));
        W(i, j) = w;
        W(j, i) = w;
    }
    for (int i = 0; i < m; ++i) W(i, i) = 1.0 - (W.row(i).sum() - W(i, i));
    return W;
}

inline bool is_doubly_stochastic(const Matrix& W, double tol = 1e-12) {
    if (W.rows() != W.cols()) return false;
    if ((W.array() < -tol).any()) return false;
    const Vector rows = W.rowwise().sum();
    const Vector cols = W.colwise().sum().transpose();
    return (rows.array() - 1.0).abs().maxCoeff() <= tol && (cols.array() - 1.0).abs().maxCoeff() <= tol;
}

/// Off-diagonal support of W lies inside the edge set of g.
inline bool is_compatible(const Matrix& W, const GraphSnapshot& g, double tol = 1e-12) {
    const int m = g.nodes();
    if (W.rows() != m || W.cols() != m) return false;
    std::vector<std::vector<bool>> adj(m, std::vector<bool>(m, false));
    for (auto [i, j] : g.edges()) adj[i][j] = adj[j][i] = true;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j && !adj[i][j] && std::abs(W(i, j)) > tol) return false;
    return true;
}

/// sigma_max(W - J/m): the second singular value of a doubly stochastic W.
inline double deviation_gain(const Matrix& W) {
    const Index m = W.rows();
    Matrix P = W;
    P.array() -= 1.0 / static_cast<double>(m);
    return op_norm(P);
}

enum class ScheduleKind { static_graph, per_step_connected, tau_connected, explicit_sequence };

enum class BaseGraph { ring, complete, path, random_geometric };

inline std::string to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::static_graph: return "static";
        case ScheduleKind::per_step_connected: return "per-step-connected";
        case ScheduleKind::tau_connected: return "tau-connected";
        case ScheduleKind::explicit_sequence: return "explicit";
    }
    return "?";
}

inline std::string to_string(BaseGraph b) {
    switch (b) {
        case BaseGraph::ring: return "ring";
        case BaseGraph::complete: return "complete";
        case BaseGraph::path: return "path";
        case BaseGraph::random_geometric: return "random-geometric";
    }
    return "?";
}

struct TopologyParams {
    int m = 8;
    BaseGraph base = BaseGraph::ring;
    /// Period for tau-connected sequences.
    int tau = 1;
    /// Connection radius for random-geometric graphs.
    double radius = 0.5;
    /// Extra-edge probability on top of the random spanning tree (per-step-connected).
    double edge_prob = 0.1;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace detail

/// An infinite sequence of graphs G^0, G^1, ... with Metropolis mixing.
/// Snapshots are a pure function of (parameters, seed, step).
class TopologySchedule {
public:
    TopologySchedule() = default;

    static TopologySchedule static_graph(GraphSnapshot g) {
        TopologySchedule s;
        s.kind_ = ScheduleKind::static_graph;
        s.m_ = g.nodes();
        s.tau_ = 1;
        s.static_W_ = metropolis(g);
        s.sequence_ = {std::move(g)};
        return s;
    }

    /// Round-robin partition of the base graph's edges into tau groups; step k
    /// uses group k mod tau, so any tau consecutive steps cover the base graph.
    static TopologySchedule tau_connected(const GraphSnapshot& base, int tau) {
        if (tau < 1) throw ConfigError("tau-connected: tau must be >= 1");
        if (!base.connected()) throw ConfigError("tau-connected: base graph must be connected");
        if (static_cast<std::size_t>(tau) > std::max<std::size_t>(1, base.edge_count()))
            throw ConfigError("tau-connected: tau exceeds the number of base edges");
        std::vector<std::vector<Edge>> groups(tau);
        for (std::size_t e = 0; e < base.edge_count(); ++e) groups[e % tau].push_back(base.edges()[e]);
        TopologySchedule s;
        s.kind_ = ScheduleKind::tau_connected;
        s.m_ = base.nodes();
        s.tau_ = tau;
        for (auto& grp : groups) s.sequence_.emplace_back(s.m_, std::move(grp));
        return s;
    }

    /// Each step draws a fresh connected graph: random spanning tree plus
    /// independent extra edges.
    static TopologySchedule per_step_connected(int m, double edge_prob, std::uint64_t seed) {
        if (m < 1) throw ConfigError("per-step-connected: m must be positive");
        if (edge_prob < 0 || edge_prob > 1) throw ConfigError("per-step-connected: edge_prob in [0, 1]");
        TopologySchedule s;
        s.kind_ = ScheduleKind::per_step_connected;
        s.m_ = m;
        s.tau_ = 1;
        s.seed_ = seed;
        s.edge_prob_ = edge_prob;
        return s;
    }

    /// Cycles through the given graphs.
    static TopologySchedule explicit_sequence(std::vector<GraphSnapshot> graphs, int tau = 1) {
        if (graphs.empty()) throw ConfigError("explicit schedule: no steps");
        const int m = graphs.front().nodes();
        for (const auto& g : graphs)
            if (g.nodes() != m) throw ConfigError("explicit schedule: node count differs between steps");
        TopologySchedule s;
        s.kind_ = ScheduleKind::explicit_sequence;
        s.m_ = m;
        s.tau_ = std::max(1, tau);
        s.sequence_ = std::move(graphs);
        return s;
    }

    ScheduleKind kind() const noexcept { return kind_; }
    int nodes() const noexcept { return m_; }
    /// Nominal window length (period for tau-connected sequences).
    int tau() const noexcept { return tau_; }
    bool is_static() const noexcept { return kind_ == ScheduleKind::static_graph; }

    GraphSnapshot graph(std::int64_t k) const {
        if (k < 0) throw ArgumentError("schedule: negative step");
        if (kind_ == ScheduleKind::per_step_connected) return random_connected(k);
        if (sequence_.empty()) throw ArgumentError("schedule: empty");
        return sequence_[static_cast<std::size_t>(k) % sequence_.size()];
    }

    Matrix mixing(std::int64_t k) const {
        if (kind_ == ScheduleKind::static_graph) return static_W_;
        return metropolis(graph(k));
    }

    std::size_t edge_count(std::int64_t k) const {
        if (kind_ == ScheduleKind::static_graph) return sequence_.front().edge_count();
        return graph(k).edge_count();
    }

    /// W^k W^{k-1} ... W^{k-tau+1}
    Matrix window_product(std::int64_t k, int tau) const {
        Matrix P = Matrix::Identity(m_, m_);
        for (int t = 0; t < tau; ++t) P = P * mixing(k - t);
        return P;
    }

private:
    GraphSnapshot random_connected(std::int64_t k) const {
        std::mt19937_64 rng(detail::splitmix64(seed_ ^ detail::splitmix64(static_cast<std::uint64_t>(k))));
        std::vector<int> perm(m_);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<Edge> e;
        for (int t = 1; t < m_; ++t) {
            std::uniform_int_distribution<int> pick(0, t - 1);
            e.emplace_back(perm[t], perm[pick(rng)]);
        }
        std::bernoulli_distribution extra(edge_prob_);
        for (int i = 0; i < m_; ++i)
            for (int j = i + 1; j < m_; ++j)
                if (extra(rng)) e.emplace_back(i, j);
        return GraphSnapshot(m_, std::move(e));
    }

    ScheduleKind kind_ = ScheduleKind::static_graph;
    int m_ = 0;
    int tau_ = 1;
    std::uint64_t seed_ = 0;
    double edge_prob_ = 0.0;
    std::vector<GraphSnapshot> sequence_;
    Matrix static_W_;
};

/// Builds a schedule of the requested kind; deterministic for a fixed seed.
inline TopologySchedule generate(ScheduleKind kind, const TopologyParams& p, std::uint64_t seed) {
    if (p.m < 1) throw ConfigError("topology: m must be positive");
    auto base_graph = [&]() {
        std::mt19937_64 rng(seed);
        switch (p.base) {
            case BaseGraph::ring: return ring_graph(p.m);
            case BaseGraph::complete: return complete_graph(p.m);
            case BaseGraph::path: return path_graph(p.m);
            case BaseGraph::random_geometric: return random_geometric_graph(p.m, p.radius, rng);
        }
        throw ConfigError("topology: unknown base graph");
    };
    switch (kind) {
        case ScheduleKind::static_graph: return TopologySchedule::static_graph(base_graph());
        case ScheduleKind::tau_connected: return TopologySchedule::tau_connected(base_graph(), p.tau);
        case ScheduleKind::per_step_connected: return TopologySchedule::per_step_connected(p.m, p.edge_prob, seed);
        case ScheduleKind::explicit_sequence: break;
    }
    throw ConfigError("topology: explicit schedules are loaded from a file, not generated");
}

/// The (tau, lambda) pair used by the round planners.
struct ContractionParams {
    int tau = 1;
    double lambda = 1.0;
};

/// Contraction lambda of a schedule. Static graphs: 1 - sigma_2(W) exactly.
/// Sequences: 1 - max over `trials` consecutive windows of
/// sigma_max(W^k_tau - J/m). Throws ContractionError when lambda <= 0.
inline double estimate_contraction(const TopologySchedule& s, int tau, int trials) {
    if (tau < 1 || trials < 1) throw ArgumentError("estimate_contraction: tau and trials must be >= 1");
    double worst = 0.0;
    if (s.is_static()) {
        worst = deviation_gain(s.mixing(0));
    } else {
        for (int t = 0; t < trials; ++t) {
            const std::int64_t k = tau - 1 + t;
            worst = std::max(worst, deviation_gain(s.window_product(k, tau)));
        }
    }
    const double lambda = 1.0 - worst;
    if (!(lambda > 1e-12))
        throw ContractionError("mixing sequence does not contract over windows of " + std::to_string(tau) +
                               " steps (lambda = " + std::to_string(lambda) + ")");
    return std::min(lambda, 1.0);
}

/// Planner-ready contraction: exact for static graphs, 0.9 * estimate for
/// sampled sequences.
inline ContractionParams contraction_for(const TopologySchedule& s, int trials = 20) {
    const int tau = s.tau();
    const double est = estimate_contraction(s, tau, trials);
    return {tau, s.is_static() ? est : 0.9 * est};
}

/// Degree-K Chebyshev polynomial of a symmetric mixing matrix, normalized so
/// P_K(1) = 1 and scaled to the non-consensus spectrum [-sigma_2, sigma_2].
/// One application costs K communication rounds.
class ChebyshevOperator {
public:
    ChebyshevOperator(Matrix W, int K) : W_(std::move(W)), K_(K) {
        if (K < 1) throw ConfigError("chebyshev: degree must be >= 1");
        if (W_.rows() != W_.cols()) throw ConfigError("chebyshev: W must be square");
        if ((W_ - W_.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw ConfigError("chebyshev: W must be symmetric");
        sigma2_ = deviation_gain(W_);
        if (sigma2_ >= 1.0 - 1e-12) throw ConfigError("chebyshev: graph is disconnected (sigma_2 = 1)");
        // a_k = T_k(1 / sigma_2)
        a_.assign(K_ + 1, 1.0);
        if (sigma2_ > 0) {
            const double y = 1.0 / sigma2_;
            a_[1] = y;
            for (int k = 1; k < K_; ++k) a_[k + 1] = 2 * y * a_[k] - a_[k - 1];
        }
    }

    int degree() const noexcept { return K_; }
    double sigma2() const noexcept { return sigma2_; }
    const Matrix& base() const noexcept { return W_; }

    /// P_K(W) U via the three-term recurrence; every step is an affine
    /// combination, so row means are preserved.
    Matrix apply(const Matrix& U) const {
        if (sigma2_ == 0.0) return W_ * U;
        Matrix prev = U;
        Matrix cur = W_ * U;
        for (int k = 1; k < K_; ++k) {
            const double c1 = 2.0 * a_[k] / (sigma2_ * a_[k + 1]);
            const double c0 = a_[k - 1] / a_[k + 1];
            Matrix next = c1 * (W_ * cur) - c0 * prev;
            prev = std::move(cur);
            cur = std::move(next);
        }
        return cur;
    }

    Matrix as_matrix() const { return apply(Matrix::Identity(W_.rows(), W_.cols())); }

    /// 1 - sigma_2(P_K(W)), measured.
    double contraction() const { return 1.0 - deviation_gain(as_matrix()); }

private:
    Matrix W_;
    int K_;
    double sigma2_ = 0.0;
    std::vector<double> a_;
};

inline ChebyshevOperator chebyshev_operator(const Matrix& W, int K) { return ChebyshevOperator(W, K); }

/// K = ceil(sqrt(chi)) with chi = 1 / lambda.
inline int chebyshev_degree(double lambda) {
    if (!(lambda > 0)) throw ConfigError("chebyshev_degree: lambda must be positive");
    return std::max(1, static_cast<int>(std::ceil(std::sqrt(1.0 / lambda) - 1e-12)));
}

// ---------------------------------------------------------------------------
// Edge-list text format:
//   # nodes <m>
//   step <k>
//   <i> <j>
//   ...
// Lines starting with '#' are comments; the node-count comment is optional
// (defaults to the largest index + 1).

inline void write_schedule(std::ostream& os, const TopologySchedule& s, std::int64_t steps) {
    os << "# nodes " << s.nodes() << "\n";
    for (std::int64_t k = 0; k < steps; ++k) {
        os << "step " << k << "\n";
        const auto g = s.graph(k);
        for (auto [i, j] : g.edges()) os << i << " " << j << "\n";
    }
}

inline TopologySchedule read_schedule(std::istream& is, int tau = 1) {
    std::string line;
    int m = -1;
    int max_index = -1;
    std::vector<std::vector<Edge>> steps;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        if (line[0] == '#') {
            std::string hash, key;
            ls >> hash >> key;
            if (key == "nodes") ls >> m;
            continue;
        }
        if (line.rfind("step", 0) == 0) {
            steps.emplace_back();
            continue;
        }
        int i = 0, j = 0;
        if (!(ls >> i >> j)) throw ConfigError("schedule file: malformed edge line '" + line + "'");
        if (steps.empty()) throw ConfigError("schedule file: edge before the first 'step' header");
        steps.back().emplace_back(i, j);
        max_index = std::max({max_index, i, j});
    }
    if (steps.empty()) throw ConfigError("schedule file: no steps");
    if (m < 0) m = max_index + 1;
    std::vector<GraphSnapshot> graphs;
    for (auto& e : steps) graphs.emplace_back(m, std::move(e));
    return TopologySchedule::explicit_sequence(std::move(graphs), tau);
}

}  // namespace dcn
