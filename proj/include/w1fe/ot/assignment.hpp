#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

#include "w1fe/error.hpp"

namespace w1fe::ot {

struct Assignment {
    std::vector<std::size_t> row_to_col;
    std::vector<double> u; // row duals
    std::vector<double> v; // column duals, u_i + v_j <= c_ij with equality on matched pairs
    double cost = 0.0;
};

/// Shortest-augmenting-path assignment on a dense n x n cost matrix, O(n^3)
/// worst case. Row and column potentials double as LP duals.
inline Assignment solve_assignment(std::span<const double> cost, std::size_t n)
{
    if (cost.size() != n * n) throw ShapeError("assignment: cost matrix is not n x n");
    constexpr double inf = std::numeric_limits<double>::infinity();
    constexpr std::size_t none = static_cast<std::size_t>(-1);
    std::vector<double> u(n, 0.0), v(n, inf), shortest(n);
    std::vector<std::size_t> col4row(n, none), row4col(n, none), path(n), remaining(n), visited_rows;
    std::vector<char> col_done(n);

    // Feasible starting duals from a column then a row reduction, and a greedy
    // matching on the tight entries. Only rows left unmatched are augmented.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j] = std::min(v[j], cost[i * n + j]);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = cost.data() + i * n;
        double m = inf;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (row[j] - v[j] < m) m = row[j] - v[j], arg = j;
        u[i] = m;
        if (row4col[arg] == none) row4col[arg] = i, col4row[i] = arg;
    }

    for (std::size_t start = 0; start < n; ++start) {
        if (col4row[start] != none) continue;
        // Dijkstra over reduced costs from `start`; distances are kept lazily
        // and the duals are settled once the sink is found.
        std::fill(shortest.begin(), shortest.end(), inf);
        std::fill(col_done.begin(), col_done.end(), 0);
        for (std::size_t j = 0; j < n; ++j) remaining[j] = n - 1 - j;
        std::size_t left = n, sink = none, i = start;
        double min_val = 0.0;
        visited_rows.clear();
        while (sink == none) {
            visited_rows.push_back(i);
            const double* row = cost.data() + i * n;
            const double base = min_val - u[i];
            double lowest = inf;
            std::size_t index = none;
            for (std::size_t it = 0; it < left; ++it) {
                const std::size_t j = remaining[it];
                const double r = base + row[j] - v[j];
                if (r < shortest[j]) path[j] = i, shortest[j] = r;
                if (shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == none))
                    lowest = shortest[j], index = it;
            }
            if (index == none) throw Error("assignment: infeasible cost matrix");
            min_val = lowest;
            const std::size_t j = remaining[index];
            col_done[j] = 1;
            remaining[index] = remaining[--left];
            if (row4col[j] == none) sink = j;
            else i = row4col[j];
        }
        u[start] += min_val;
        for (std::size_t r : visited_rows)
            if (r != start) u[r] += min_val - shortest[col4row[r]];
        for (std::size_t j = 0; j < n; ++j)
            if (col_done[j]) v[j] -= min_val - shortest[j];
        for (std::size_t j = sink;;) {
            const std::size_t r = path[j];
            row4col[j] = r;
            std::swap(col4row[r], j);
            if (r == start) break;
        }
    }

    Assignment result;
    result.row_to_col = std::move(col4row);
    result.u = std::move(u);
    result.v = std::move(v);
    for (std::size_t i = 0; i < n; ++i) result.cost += cost[i * n + result.row_to_col[i]];
    return result;
}

} // namespace w1fe::ot
