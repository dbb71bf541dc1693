#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "w1fe/error.hpp"

namespace w1fe::ot {

struct TransportSolution {
    std::vector<double> flow; // n x m row-major coupling
    std::vector<double> f;    // source duals
    std::vector<double> g;    // sink duals, f_i + g_j <= c_ij
    double cost = 0.0;
    std::size_t pivots = 0;
};

/// Primal network simplex for the uncapacitated transportation problem
/// between supplies a (n) and demands b (m) with dense costs c (n x m).
///
/// Starts from the artificial big-M tree rooted at an extra node and keeps a
/// strongly feasible spanning tree (leaving-arc tie rule as in LEMON), which
/// rules out cycling on the heavily degenerate assignment-like instances.
inline TransportSolution solve_transport(std::span<const double> a, std::span<const double> b,
                                         std::span<const double> c)
{
    const std::size_t n = a.size(), m = b.size();
    if (n == 0 || m == 0) throw ShapeError("transport: empty marginal");
    if (c.size() != n * m) throw ShapeError("transport: cost matrix is not n x m");

    const std::size_t nodes = n + m + 1;
    const std::size_t root = n + m;
    const std::size_t real_arcs = n * m;
    const std::size_t arcs = real_arcs + n + m;

    double max_cost = 0.0;
    for (double v : c) max_cost = std::max(max_cost, std::abs(v));
    const double big_m = (max_cost + 1.0) * static_cast<double>(nodes);
    const double tol = 1e-12 * (max_cost + 1.0);

    std::vector<double> flow(arcs, 0.0);
    auto source = [&](std::size_t e) -> std::size_t {
        if (e < real_arcs) return e / m;
        const std::size_t v = e - real_arcs;
        return v < n && a[v] > 0.0 ? v : root;
    };
    auto target = [&](std::size_t e) -> std::size_t {
        if (e < real_arcs) return n + e % m;
        const std::size_t v = e - real_arcs;
        return v < n && a[v] > 0.0 ? root : v;
    };
    auto cost = [&](std::size_t e) { return e < real_arcs ? c[e] : big_m; };

    // Artificial arcs: supply nodes point into the root, every other node
    // hangs below it. All zero-flow tree arcs then point away from the root.
    std::vector<std::size_t> tree_arcs;
    tree_arcs.reserve(nodes - 1);
    for (std::size_t v = 0; v < n + m; ++v) {
        const std::size_t e = real_arcs + v;
        flow[e] = v < n ? a[v] : b[v - n];
        tree_arcs.push_back(e);
    }
    std::vector<std::size_t> tree_pos(arcs, SIZE_MAX);
    for (std::size_t k = 0; k < tree_arcs.size(); ++k) tree_pos[tree_arcs[k]] = k;

    std::vector<std::size_t> parent(nodes), pred(nodes), depth(nodes);
    std::vector<char> up(nodes); // pred arc runs node -> parent
    std::vector<double> pi(nodes);
    std::vector<std::vector<std::size_t>> adj(nodes);
    std::vector<std::size_t> queue;
    queue.reserve(nodes);
    std::vector<char> seen(nodes);

    auto rebuild = [&] {
        for (auto& l : adj) l.clear();
        for (std::size_t e : tree_arcs) {
            adj[source(e)].push_back(e);
            adj[target(e)].push_back(e);
        }
        std::fill(seen.begin(), seen.end(), 0);
        queue.clear();
        queue.push_back(root);
        seen[root] = 1;
        parent[root] = root;
        depth[root] = 0;
        pi[root] = 0.0;
        for (std::size_t q = 0; q < queue.size(); ++q) {
            const std::size_t p = queue[q];
            for (std::size_t e : adj[p]) {
                const std::size_t s = source(e), t = target(e);
                const std::size_t u = s == p ? t : s;
                if (seen[u]) continue;
                seen[u] = 1;
                parent[u] = p;
                pred[u] = e;
                depth[u] = depth[p] + 1;
                up[u] = s == u;
                pi[u] = s == p ? pi[p] + cost(e) : pi[p] - cost(e);
                queue.push_back(u);
            }
        }
    };
    rebuild();

    const std::size_t block = std::max<std::size_t>(10, static_cast<std::size_t>(std::sqrt(static_cast<double>(arcs))));
    std::size_t next_arc = 0;
    std::size_t pivots = 0;
    const std::size_t max_pivots = 50 * arcs + 1000;

    for (;;) {
        // Block search pricing.
        std::size_t entering = SIZE_MAX;
        double best = -tol;
        std::size_t scanned = 0, in_block = 0;
        for (std::size_t e = next_arc; scanned < arcs; ++scanned) {
            if (tree_pos[e] == SIZE_MAX) {
                const double rc = cost(e) + pi[source(e)] - pi[target(e)];
                if (rc < best) {
                    best = rc;
                    entering = e;
                }
            }
            if (++e == arcs) e = 0;
            if (++in_block == block) {
                in_block = 0;
                if (entering != SIZE_MAX) {
                    next_arc = e;
                    break;
                }
            }
        }
        if (entering == SIZE_MAX) break;
        if (++pivots > max_pivots) throw Error("transport: network simplex exceeded its pivot budget");

        const std::size_t u_in = source(entering), v_in = target(entering);
        std::size_t join;
        {
            std::size_t p = u_in, q = v_in;
            while (p != q) {
                if (depth[p] >= depth[q]) p = parent[p];
                else q = parent[q];
            }
            join = p;
        }

        constexpr double inf = std::numeric_limits<double>::infinity();
        double delta = inf;
        std::size_t u_out = SIZE_MAX;
        for (std::size_t u = u_in; u != join; u = parent[u]) {
            const double d = up[u] ? flow[pred[u]] : inf;
            if (d < delta) {
                delta = d;
                u_out = u;
            }
        }
        for (std::size_t u = v_in; u != join; u = parent[u]) {
            const double d = up[u] ? inf : flow[pred[u]];
            if (d <= delta) {
                delta = d;
                u_out = u;
            }
        }
        if (u_out == SIZE_MAX) throw Error("transport: unbounded cycle (malformed costs)");

        if (delta > 0.0) {
            for (std::size_t u = u_in; u != join; u = parent[u]) flow[pred[u]] += up[u] ? -delta : delta;
            for (std::size_t u = v_in; u != join; u = parent[u]) flow[pred[u]] += up[u] ? delta : -delta;
            flow[entering] += delta;
        }
        const std::size_t leaving = pred[u_out];
        flow[leaving] = 0.0;

        const std::size_t k = tree_pos[leaving];
        tree_pos[leaving] = SIZE_MAX;
        tree_arcs[k] = entering;
        tree_pos[entering] = k;
        rebuild();
    }

    for (std::size_t v = 0; v < n + m; ++v) {
        if (flow[real_arcs + v] > 1e-9)
            throw Error("transport: artificial arc still carries flow (marginals do not balance)");
    }

    TransportSolution sol;
    sol.flow.assign(flow.begin(), flow.begin() + static_cast<std::ptrdiff_t>(real_arcs));
    for (double& x : sol.flow)
        if (x < 0.0) x = 0.0;
    sol.f.resize(n);
    sol.g.resize(m);
    for (std::size_t i = 0; i < n; ++i) sol.f[i] = -pi[i];
    for (std::size_t j = 0; j < m; ++j) sol.g[j] = pi[n + j];
    for (std::size_t e = 0; e < real_arcs; ++e) sol.cost += c[e] * sol.flow[e];
    sol.pivots = pivots;
    return sol;
}

} // namespace w1fe::ot
