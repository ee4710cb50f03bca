#pragma once

// Per-iteration trace shared by both drivers, with a frozen CSV layout.

#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dcn/core.hpp"

namespace dcn {

/// Row k describes the state after k outer steps (row 0: the start).
/// Consensus-error columns hold the measured values of the step that
/// produced the row. For the accelerated method the point/grad/hess columns
/// refer to v-hat and grad_x to the gradients at the new x.
struct MetricsRow {
    int iter = 0;
    double gap = 0.0;          // f(x_bar) - f*
    double node_avg_gap = 0.0;  // (1/m) sum_i f(x_i) - f*
    double delta_point = 0.0;
    double delta_grad = 0.0;
    double delta_hess = 0.0;  // operator norm
    double delta_grad_x = 0.0;
    int rounds_point = 0;
    int rounds_grad = 0;
    int rounds_hess = 0;
    int rounds_grad_x = 0;
    long long rounds_cum = 0;
    double cost_cum = 0.0;  // cumulative scalars sent
    double sigma2 = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double alpha = 0.0;
    double disagreement = 0.0;  // max_i |x_i - x_bar|
    double max_radius = 0.0;    // max_i |x_i - x*|
    double max_radius_y = 0.0;
    double max_radius_v = 0.0;
    double max_radius_vhat = 0.0;
    bool assumption_ok = true;  // all radii within R_bar (accelerated runs)
    double wall_ms = 0.0;       // 0 unless wall-time recording is enabled
};

inline const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols = {
        "iter",          "gap",          "node_avg_gap",   "delta_point",  "delta_grad",      "delta_hess",
        "delta_grad_x",  "rounds_point", "rounds_grad",   "rounds_hess",  "rounds_grad_x",   "rounds_cum",
        "cost_cum",      "sigma2",       "delta1",        "delta2",       "alpha",           "disagreement",
        "max_radius",    "max_radius_y", "max_radius_v",  "max_radius_vhat", "assumption_ok", "wall_ms"};
    return cols;
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

struct MetricsTrace {
    std::string algorithm;
    double eps = 0.0;
    std::vector<MetricsRow> rows;
    std::vector<std::string> warnings;

    bool empty() const noexcept { return rows.empty(); }
    double final_gap() const { return rows.empty() ? 0.0 : rows.back().gap; }
    bool target_reached() const { return !rows.empty() && rows.back().gap <= eps; }
    /// First iteration whose gap is <= target.
    std::optional<int> first_below(double target) const {
        for (const auto& r : rows)
            if (r.gap <= target) return r.iter;
        return std::nullopt;
    }
    /// Cumulative cost at the first row whose gap is <= target.
    std::optional<double> cost_to(double target) const {
        for (const auto& r : rows)
            if (r.gap <= target) return r.cost_cum;
        return std::nullopt;
    }
};

inline void write_csv(std::ostream& os, const MetricsTrace& trace) {
    const auto& cols = csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    using detail::fmt_double;
    for (const auto& r : trace.rows) {
        os << r.iter << ',' << fmt_double(r.gap) << ',' << fmt_double(r.node_avg_gap) << ','
           << fmt_double(r.delta_point) << ',' << fmt_double(r.delta_grad) << ',' << fmt_double(r.delta_hess) << ','
           << fmt_double(r.delta_grad_x) << ',' << r.rounds_point << ',' << r.rounds_grad << ',' << r.rounds_hess
           << ',' << r.rounds_grad_x << ',' << r.rounds_cum << ',' << fmt_double(r.cost_cum) << ','
           << fmt_double(r.sigma2) << ',' << fmt_double(r.delta1) << ',' << fmt_double(r.delta2) << ','
           << fmt_double(r.alpha) << ',' << fmt_double(r.disagreement) << ',' << fmt_double(r.max_radius) << ','
           << fmt_double(r.max_radius_y) << ',' << fmt_double(r.max_radius_v) << ','
           << fmt_double(r.max_radius_vhat) << ',' << (r.assumption_ok ? 1 : 0) << ',' << fmt_double(r.wall_ms)
           << '\n';
    }
}

/// Parses a trace written by write_csv. Throws ArgumentError on a header
/// mismatch or malformed row.
inline MetricsTrace read_csv(std::istream& is) {
    MetricsTrace t;
    std::string line;
    if (!std::getline(is, line)) return t;
    {
        std::string expect;
        const auto& cols = csv_columns();
        for (std::size_t i = 0; i < cols.size(); ++i) expect += (i ? "," : "") + cols[i];
        if (line != expect) throw ArgumentError("read_csv: unexpected header");
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != csv_columns().size()) throw ArgumentError("read_csv: wrong field count");
        try {
            MetricsRow r;
            std::size_t k = 0;
            r.iter = std::stoi(f[k++]);
            r.gap = std::stod(f[k++]);
            r.node_avg_gap = std::stod(f[k++]);
            r.delta_point = std::stod(f[k++]);
            r.delta_grad = std::stod(f[k++]);
            r.delta_hess = std::stod(f[k++]);
            r.delta_grad_x = std::stod(f[k++]);
            r.rounds_point = std::stoi(f[k++]);
            r.rounds_grad = std::stoi(f[k++]);
            r.rounds_hess = std::stoi(f[k++]);
            r.rounds_grad_x = std::stoi(f[k++]);
            r.rounds_cum = std::stoll(f[k++]);
            r.cost_cum = std::stod(f[k++]);
            r.sigma2 = std::stod(f[k++]);
            r.delta1 = std::stod(f[k++]);
            r.delta2 = std::stod(f[k++]);
            r.alpha = std::stod(f[k++]);
            r.disagreement = std::stod(f[k++]);
            r.max_radius = std::stod(f[k++]);
            r.max_radius_y = std::stod(f[k++]);
            r.max_radius_v = std::stod(f[k++]);
            r.max_radius_vhat = std::stod(f[k++]);
            r.assumption_ok = std::stoi(f[k++]) != 0;
            r.wall_ms = std::stod(f[k++]);
            t.rows.push_back(r);
        } catch (const std::logic_error&) {
            throw ArgumentError("read_csv: malformed row: " + line);
        }
    }
    return t;
}

}  // namespace dcn
