#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "w1fe/autodiff/tensor.hpp"
#include "w1fe/error.hpp"
#include "w1fe/sampling.hpp"

namespace w1fe::harness {

struct RingSpec {
    std::size_t n_modes = 8;
    double radius = 2.0;
    double mode_std = 0.02;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (n_modes < 1) throw ConfigError("ring.n_modes must be >= 1");
        if (!(radius > 0.0)) throw ConfigError("ring.radius must be > 0");
        if (!(mode_std >= 0.0)) throw ConfigError("ring.mode_std must be >= 0");
    }
};

/// n points from an isotropic Gaussian mixture with equally weighted modes
/// at angles 2 pi k / n_modes on a circle.
inline Tensor gaussian_ring_sample(const RingSpec& spec, std::size_t n, Rng& rng)
{
    spec.validate();
    std::uniform_int_distribution<std::size_t> mode(0, spec.n_modes - 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    Tensor out(Shape{n, 2});
    for (std::size_t i = 0; i < n; ++i) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(mode(rng)) / static_cast<double>(spec.n_modes);
        const double ex = noise(rng), ey = noise(rng);
        out(i, 0) = spec.radius * std::cos(theta) + spec.mode_std * ex;
        out(i, 1) = spec.radius * std::sin(theta) + spec.mode_std * ey;
    }
    return out;
}

inline Tensor gaussian_ring_sample(const RingSpec& spec, std::size_t n)
{
    Rng rng(spec.seed);
    return gaussian_ring_sample(spec, n, rng);
}

/// n x latent_dim standard normal batch.
inline Tensor prior_sample(std::size_t latent_dim, std::size_t n, Rng& rng)
{
    if (latent_dim == 0) throw ConfigError("prior: latent dimension must be >= 1");
    std::normal_distribution<double> g(0.0, 1.0);
    Tensor out(Shape{n, latent_dim});
    for (double& v : out.values()) v = g(rng);
    return out;
}

inline Tensor prior_sample(std::size_t latent_dim, std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    return prior_sample(latent_dim, n, rng);
}

/// 1D normal N(mean, std^2) as an n x 1 batch.
inline Tensor normal_1d_sample(double mean, double std, std::size_t n, Rng& rng)
{
    std::normal_distribution<double> g(mean, std);
    Tensor out(Shape{n, 1});
    for (double& v : out.values()) v = g(rng);
    return out;
}

inline BatchSampler ring_sampler(RingSpec spec)
{
    spec.validate();
    return [spec](std::size_t n, Rng& rng) { return gaussian_ring_sample(spec, n, rng); };
}

inline BatchSampler prior_sampler(std::size_t latent_dim)
{
    if (latent_dim == 0) throw ConfigError("prior: latent dimension must be >= 1");
    return [latent_dim](std::size_t n, Rng& rng) { return prior_sample(latent_dim, n, rng); };
}

inline BatchSampler normal_1d_sampler(double mean, double std)
{
    return [mean, std](std::size_t n, Rng& rng) { return normal_1d_sample(mean, std, n, rng); };
}

} // namespace w1fe::harness
