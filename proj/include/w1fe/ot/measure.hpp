#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "w1fe/autodiff/tensor.hpp"
#include "w1fe/error.hpp"

namespace w1fe::ot {

/// Weighted point cloud in R^d: an empirical probability measure.
class DiscreteMeasure {
public:
    DiscreteMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights)
        : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights))
    {
        if (dim_ == 0) throw ShapeError("measure: dimension must be positive");
        if (weights_.empty()) throw ShapeError("measure: needs at least one point");
        if (coords_.size() != dim_ * weights_.size())
            throw ShapeError("measure: " + std::to_string(coords_.size()) + " coordinates for " +
                             std::to_string(weights_.size()) + " points in dimension " + std::to_string(dim_));
        double total = 0.0;
        for (double w : weights_) {
            if (!std::isfinite(w) || w < 0.0) throw Error("measure: weights must be finite and nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw Error("measure: weights sum to " + std::to_string(total) + ", expected 1");
        for (double c : coords_)
            if (!std::isfinite(c)) throw NonFiniteError("measure: non-finite coordinate");
    }

    /// Uniform weights over the rows of an n x d tensor.
    static DiscreteMeasure uniform(const Tensor& points)
    {
        if (points.rank() != 2) throw ShapeError("measure: points must be an n x d matrix");
        const std::size_t n = points.rows();
        return DiscreteMeasure(points.cols(), points.storage(), std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    static DiscreteMeasure uniform_1d(std::vector<double> xs)
    {
        const std::size_t n = xs.size();
        return DiscreteMeasure(1, std::move(xs), std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    static DiscreteMeasure weighted_1d(std::vector<double> xs, std::vector<double> weights)
    {
        return DiscreteMeasure(1, std::move(xs), std::move(weights));
    }

    static DiscreteMeasure dirac(std::vector<double> point)
    {
        const std::size_t d = point.size();
        return DiscreteMeasure(d, std::move(point), {1.0});
    }

    std::size_t size() const noexcept { return weights_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::span<const double> point(std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }
    double weight(std::size_t i) const { return weights_[i]; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const std::vector<double>& coords() const noexcept { return coords_; }

    bool is_uniform() const
    {
        const double w0 = weights_.front();
        for (double w : weights_)
            if (w != w0) return false;
        return true;
    }

    Tensor points() const { return Tensor(Shape{size(), dim_}, coords_); }

    /// Integral of a function given by its values on the support.
    double integrate(std::span<const double> values) const
    {
        if (values.size() != size()) throw ShapeError("measure: value count does not match support size");
        double acc = 0.0;
        for (std::size_t i = 0; i < size(); ++i) acc += weights_[i] * values[i];
        return acc;
    }

    template <class F>
    double integrate_fn(F&& f) const
    {
        double acc = 0.0;
        for (std::size_t i = 0; i < size(); ++i) acc += weights_[i] * f(point(i));
        return acc;
    }

private:
    std::size_t dim_;
    std::vector<double> coords_;
    std::vector<double> weights_;
};

/// (1 - lambda) mu + lambda nu, realised by concatenating supports with scaled
/// weights (no resampling, no merging of coincident points).
inline DiscreteMeasure mixture(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double lambda)
{
    if (mu.dim() != nu.dim()) throw ShapeError("mixture: dimensions differ");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("mixture: lambda must lie in [0, 1]");
    std::vector<double> coords = mu.coords();
    coords.insert(coords.end(), nu.coords().begin(), nu.coords().end());
    std::vector<double> weights;
    weights.reserve(mu.size() + nu.size());
    for (double w : mu.weights()) weights.push_back((1.0 - lambda) * w);
    for (double w : nu.weights()) weights.push_back(lambda * w);
    return DiscreteMeasure(mu.dim(), std::move(coords), std::move(weights));
}

inline double euclidean(std::span<const double> a, std::span<const double> b)
{
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        acc += d * d;
    }
    return std::sqrt(acc);
}

/// Row-major |x_i - y_j| matrix.
inline std::vector<double> cost_matrix(const DiscreteMeasure& mu, const DiscreteMeasure& nu)
{
    if (mu.dim() != nu.dim()) throw ShapeError("cost matrix: dimensions differ");
    std::vector<double> c(mu.size() * nu.size());
    for (std::size_t i = 0; i < mu.size(); ++i)
        for (std::size_t j = 0; j < nu.size(); ++j) c[i * nu.size() + j] = euclidean(mu.point(i), nu.point(j));
    return c;
}

} // namespace w1fe::ot
