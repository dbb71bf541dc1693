#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "w1fe/error.hpp"
#include "w1fe/ot/assignment.hpp"
#include "w1fe/ot/measure.hpp"
#include "w1fe/ot/network_simplex.hpp"

namespace w1fe::ot {

struct TransportPlan {
    std::size_t rows = 0, cols = 0;
    std::vector<double> coupling; // rows x cols, row-major
    double value = 0.0;

    double at(std::size_t i, std::size_t j) const { return coupling[i * cols + j]; }
};

struct DualPotentials {
    std::vector<double> f; // on source points
    std::vector<double> g; // on target points
};

struct W1Result {
    double value = 0.0;
    TransportPlan plan;
    DualPotentials duals;
};

struct W1Options {
    std::size_t size_cap = 512 * 512;
};

namespace detail {

// Two rounds of c-transform: g_j = min_i (c_ij - f_i), then f_i = min_j (c_ij - g_j).
// Keeps feasibility and the dual objective, and makes f the c-transform of g.
inline void tighten(DualPotentials& d, const std::vector<double>& cost, std::size_t n, std::size_t m)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
        double best = inf;
        for (std::size_t i = 0; i < n; ++i) best = std::min(best, cost[i * m + j] - d.f[i]);
        d.g[j] = best;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double best = inf;
        for (std::size_t j = 0; j < m; ++j) best = std::min(best, cost[i * m + j] - d.g[j]);
        d.f[i] = best;
    }
    const double shift = d.f.front();
    for (double& v : d.f) v -= shift;
    for (double& v : d.g) v += shift;
}

} // namespace detail

/// Exact W1 between two discrete measures under the Euclidean ground cost.
inline W1Result w1_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const W1Options& opt = {})
{
    if (mu.dim() != nu.dim())
        throw ShapeError("w1_exact: dimensions differ (" + std::to_string(mu.dim()) + " vs " +
                         std::to_string(nu.dim()) + ")");
    const std::size_t n = mu.size(), m = nu.size();
    if (n * m > opt.size_cap)
        throw SizeCapError("w1_exact: " + std::to_string(n) + " x " + std::to_string(m) +
                           " exceeds the exact-solver cap of " + std::to_string(opt.size_cap) +
                           " entries; evaluate on minibatches instead");

    const std::vector<double> cost = cost_matrix(mu, nu);
    W1Result r;
    r.plan.rows = n;
    r.plan.cols = m;
    r.plan.coupling.assign(n * m, 0.0);

    if (n == m && mu.is_uniform() && nu.is_uniform()) {
        const Assignment a = solve_assignment(cost, n);
        const double w = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) r.plan.coupling[i * m + a.row_to_col[i]] = w;
        r.value = a.cost * w;
        r.duals.f = a.u;
        r.duals.g = a.v;
    } else {
        TransportSolution s = solve_transport(mu.weights(), nu.weights(), cost);
        r.plan.coupling = std::move(s.flow);
        r.value = s.cost;
        r.duals.f = std::move(s.f);
        r.duals.g = std::move(s.g);
    }
    r.plan.value = r.value;
    detail::tighten(r.duals, cost, n, m);
    return r;
}

inline double w1_value(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const W1Options& opt = {})
{
    return w1_exact(mu, nu, opt).value;
}

/// Extension of the optimal duals to all of R^d:
/// phi(x) = min_j (|x - y_j| - g_j). It is 1-Lipschitz and equals f on the
/// source support when the duals come from w1_exact.
class KantorovichPotential {
public:
    KantorovichPotential(const DiscreteMeasure& target, std::vector<double> g)
        : dim_(target.dim()), points_(target.coords()), g_(std::move(g))
    {
        if (g_.size() != target.size()) throw ShapeError("potential: dual size does not match target support");
    }

    static KantorovichPotential from(const DiscreteMeasure& target, const W1Result& r)
    {
        return KantorovichPotential(target, r.duals.g);
    }

    double operator()(std::span<const double> x) const
    {
        if (x.size() != dim_) throw ShapeError("potential: point has the wrong dimension");
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < g_.size(); ++j)
            best = std::min(best, euclidean(x, {points_.data() + j * dim_, dim_}) - g_[j]);
        return best;
    }

    double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }

    /// Integral of phi against a discrete measure.
    double integrate(const DiscreteMeasure& m) const
    {
        return m.integrate_fn([&](std::span<const double> p) { return (*this)(p); });
    }

    std::size_t dim() const noexcept { return dim_; }

private:
    std::size_t dim_;
    std::vector<double> points_;
    std::vector<double> g_;
};

/// W1 between two equal-size uniform 1D samples by sorting.
inline double w1_sorted_1d(std::vector<double> xs, std::vector<double> ys)
{
    if (xs.size() != ys.size())
        throw ShapeError("w1_sorted_1d: unequal sample counts (" + std::to_string(xs.size()) + " vs " +
                         std::to_string(ys.size()) + ")");
    if (xs.empty()) throw ShapeError("w1_sorted_1d: empty samples");
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) acc += std::abs(xs[i] - ys[i]);
    return acc / static_cast<double>(xs.size());
}

/// Piecewise-linear 1D potential with slopes in {-1, 0, +1} between
/// consecutive breakpoints and constant outside [first, last].
class PiecewiseLinear1d {
public:
    PiecewiseLinear1d(std::vector<double> breakpoints, std::vector<int> slopes)
        : t_(std::move(breakpoints)), slopes_(std::move(slopes))
    {
        if (t_.empty() || slopes_.size() + 1 != t_.size()) throw ShapeError("piecewise potential: bad layout");
        values_.assign(t_.size(), 0.0);
        for (std::size_t k = 0; k + 1 < t_.size(); ++k)
            values_[k + 1] = values_[k] + slopes_[k] * (t_[k + 1] - t_[k]);
    }

    double operator()(double x) const
    {
        if (x <= t_.front()) return values_.front();
        if (x >= t_.back()) return values_.back();
        const std::size_t k = interval(x);
        return values_[k] + slopes_[k] * (x - t_[k]);
    }

    /// One-sided slopes; outside the hull the function is flat.
    int slope_right(double x) const
    {
        if (x < t_.front() || x >= t_.back()) return 0;
        return slopes_[interval(x)];
    }

    int slope_left(double x) const
    {
        if (x <= t_.front() || x > t_.back()) return 0;
        auto it = std::lower_bound(t_.begin(), t_.end(), x); // first t >= x, so x lies in (t[k-1], t[k]]
        return slopes_[static_cast<std::size_t>(it - t_.begin()) - 1];
    }

    const std::vector<double>& breakpoints() const noexcept { return t_; }
    const std::vector<int>& slopes() const noexcept { return slopes_; }
    const std::vector<double>& values() const noexcept { return values_; }

    double integrate(const DiscreteMeasure& m) const
    {
        return m.integrate_fn([&](std::span<const double> p) { return (*this)(p[0]); });
    }

private:
    // Index k with t[k] <= x < t[k+1]; requires t.front() <= x < t.back().
    std::size_t interval(double x) const
    {
        auto it = std::upper_bound(t_.begin(), t_.end(), x);
        return static_cast<std::size_t>(it - t_.begin()) - 1;
    }

    std::vector<double> t_;
    std::vector<int> slopes_;
    std::vector<double> values_;
};

/// Closed-form 1D Kantorovich potential from mu toward nu:
/// slope sign(F_nu - F_mu) on each gap of the merged support, phi(min) = 0.
inline PiecewiseLinear1d kantorovich_potential_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                                  double tie_tol = 1e-12)
{
    if (mu.dim() != 1 || nu.dim() != 1) throw ShapeError("kantorovich_potential_1d: measures must be 1D");
    struct Atom {
        double x;
        double dmu, dnu;
    };
    std::vector<Atom> atoms;
    atoms.reserve(mu.size() + nu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) atoms.push_back({mu.point(i)[0], mu.weight(i), 0.0});
    for (std::size_t j = 0; j < nu.size(); ++j) atoms.push_back({nu.point(j)[0], 0.0, nu.weight(j)});
    std::stable_sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.x < b.x; });

    std::vector<double> t;
    std::vector<int> slopes;
    double fmu = 0.0, fnu = 0.0;
    for (std::size_t k = 0; k < atoms.size();) {
        const double x = atoms[k].x;
        while (k < atoms.size() && atoms[k].x == x) {
            fmu += atoms[k].dmu;
            fnu += atoms[k].dnu;
            ++k;
        }
        t.push_back(x);
        if (k < atoms.size()) {
            const double diff = fnu - fmu;
            slopes.push_back(diff > tie_tol ? 1 : (diff < -tie_tol ? -1 : 0));
        }
    }
    return PiecewiseLinear1d(std::move(t), std::move(slopes));
}

/// W1 - (int phi dmu - int phi dnu) for phi given on the supports of mu and nu.
/// Rejects phi that are not 1-Lipschitz on the supplied points.
inline double duality_gap(std::span<const double> phi_mu, std::span<const double> phi_nu, const DiscreteMeasure& mu,
                          const DiscreteMeasure& nu, double lipschitz_slack = 1e-9)
{
    if (phi_mu.size() != mu.size() || phi_nu.size() != nu.size())
        throw ShapeError("duality_gap: potential values do not match the supports");
    const std::size_t n = mu.size(), total = mu.size() + nu.size();
    auto point = [&](std::size_t k) { return k < n ? mu.point(k) : nu.point(k - n); };
    auto value = [&](std::size_t k) { return k < n ? phi_mu[k] : phi_nu[k - n]; };
    for (std::size_t p = 0; p < total; ++p) {
        for (std::size_t q = p + 1; q < total; ++q) {
            const double dist = euclidean(point(p), point(q));
            const double jump = std::abs(value(p) - value(q));
            if (jump > dist + lipschitz_slack) {
                auto name = [&](std::size_t k) {
                    return k < n ? "mu[" + std::to_string(k) + "]" : "nu[" + std::to_string(k - n) + "]";
                };
                throw LipschitzError(p, q,
                                     "duality_gap: potential is not 1-Lipschitz on " + name(p) + ", " + name(q) +
                                         ": |dphi| = " + std::to_string(jump) + " > |dx| = " + std::to_string(dist));
            }
        }
    }
    return w1_value(mu, nu) - (mu.integrate(phi_mu) - nu.integrate(phi_nu));
}

struct ConvexityReport {
    double lhs = 0.0; // J((1 - lambda) mu + lambda nu)
    double rhs = 0.0; // (1 - lambda) J(mu) + lambda J(nu)
    bool holds = false;
};

/// Convexity of J = W1(., mu_d) along the segment from mu to nu.
inline ConvexityReport convexity_check(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                       const DiscreteMeasure& mu_d, double lambda, double slack = 1e-9)
{
    if (!(lambda > 0.0 && lambda < 1.0)) throw Error("convexity_check: lambda must lie in (0, 1)");
    ConvexityReport r;
    r.lhs = w1_value(mixture(mu, nu, lambda), mu_d);
    r.rhs = (1.0 - lambda) * w1_value(mu, mu_d) + lambda * w1_value(nu, mu_d);
    r.holds = r.lhs <= r.rhs + slack;
    return r;
}

struct SandwichReport {
    double lower = 0.0; // int phi_mu d(nu - mu)
    double ratio = 0.0; // (J(mu_eps) - J(mu)) / eps
    double upper = 0.0; // int phi_{mu_eps} d(nu - mu)
    double j_mu = 0.0, j_eps = 0.0;
    bool holds = false;
};

/// Two-sided bound on the difference quotient of J = W1(., mu_d) in the
/// direction nu - mu, with potentials from the exact duals.
inline SandwichReport lfd_sandwich_check(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                         const DiscreteMeasure& mu_d, double eps, double slack = 1e-7)
{
    if (!(eps > 0.0 && eps < 1.0)) throw Error("lfd_sandwich_check: eps must lie in (0, 1)");
    const DiscreteMeasure mu_eps = mixture(mu, nu, eps);
    const W1Result base = w1_exact(mu, mu_d);
    const W1Result moved = w1_exact(mu_eps, mu_d);
    const KantorovichPotential phi_mu = KantorovichPotential::from(mu_d, base);
    const KantorovichPotential phi_eps = KantorovichPotential::from(mu_d, moved);

    SandwichReport r;
    r.j_mu = base.value;
    r.j_eps = moved.value;
    r.ratio = (moved.value - base.value) / eps;
    r.lower = phi_mu.integrate(nu) - phi_mu.integrate(mu);
    r.upper = phi_eps.integrate(nu) - phi_eps.integrate(mu);
    r.holds = r.lower <= r.ratio + slack && r.ratio <= r.upper + slack;
    return r;
}

} // namespace w1fe::ot
