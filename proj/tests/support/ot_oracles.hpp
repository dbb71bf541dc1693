#pragma once

// Reference values computed without the library solvers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "w1fe/ot/measure.hpp"

namespace w1fe::check {

/// 1D W1 as the integral of |F_mu - F_nu| over the merged support.
inline double w1_cdf_1d(const ot::DiscreteMeasure& mu, const ot::DiscreteMeasure& nu)
{
    std::vector<std::pair<double, double>> jumps; // (x, dF_mu - dF_nu)
    for (std::size_t i = 0; i < mu.size(); ++i) jumps.emplace_back(mu.point(i)[0], mu.weight(i));
    for (std::size_t j = 0; j < nu.size(); ++j) jumps.emplace_back(nu.point(j)[0], -nu.weight(j));
    std::sort(jumps.begin(), jumps.end());
    double diff = 0.0, acc = 0.0;
    for (std::size_t k = 0; k + 1 < jumps.size(); ++k) {
        diff += jumps[k].second;
        acc += std::abs(diff) * (jumps[k + 1].first - jumps[k].first);
    }
    return acc;
}

/// Minimum over all permutations of the mean matched distance.
inline double w1_brute_force(const ot::DiscreteMeasure& mu, const ot::DiscreteMeasure& nu)
{
    const std::size_t n = mu.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += ot::euclidean(mu.point(i), nu.point(perm[i]));
        best = std::min(best, acc);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(n);
}

/// Each point repeated count[i] times, all copies equally weighted.
inline ot::DiscreteMeasure replicate(const ot::DiscreteMeasure& m, const std::vector<std::size_t>& count)
{
    std::vector<double> coords;
    std::size_t total = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t c = 0; c < count[i]; ++c) coords.insert(coords.end(), m.point(i).begin(), m.point(i).end());
        total += count[i];
    }
    return ot::DiscreteMeasure(m.dim(), std::move(coords),
                               std::vector<double>(total, 1.0 / static_cast<double>(total)));
}

inline ot::DiscreteMeasure random_uniform(std::mt19937_64& rng, std::size_t n, std::size_t d, double spread = 1.0)
{
    std::normal_distribution<double> g(0.0, spread);
    std::vector<double> coords(n * d);
    for (double& c : coords) c = g(rng);
    return ot::DiscreteMeasure(d, std::move(coords), std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

/// Random weights that are multiples of 1/denominator; count[i] gets the numerators.
inline ot::DiscreteMeasure random_rational(std::mt19937_64& rng, std::size_t n, std::size_t d, std::size_t denominator,
                                           std::vector<std::size_t>& count)
{
    // Compositions of `denominator` into n positive parts.
    std::vector<std::size_t> cuts(denominator - 1);
    std::iota(cuts.begin(), cuts.end(), 1);
    std::shuffle(cuts.begin(), cuts.end(), rng);
    cuts.resize(n - 1);
    std::sort(cuts.begin(), cuts.end());
    count.assign(n, 0);
    std::size_t prev = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        count[i] = cuts[i] - prev;
        prev = cuts[i];
    }
    count[n - 1] = denominator - prev;
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<double>(count[i]) / static_cast<double>(denominator);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> coords(n * d);
    for (double& c : coords) c = g(rng);
    return ot::DiscreteMeasure(d, std::move(coords), std::move(w));
}

inline ot::DiscreteMeasure random_weighted(std::mt19937_64& rng, std::size_t n, std::size_t d)
{
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> w(n);
    for (double& x : w) x = u(rng);
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= s;
    std::vector<double> coords(n * d);
    for (double& c : coords) c = g(rng);
    return ot::DiscreteMeasure(d, std::move(coords), std::move(w));
}

} // namespace w1fe::check
