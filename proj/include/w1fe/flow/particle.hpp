#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "w1fe/autodiff/net_gradients.hpp"
#include "w1fe/error.hpp"
#include "w1fe/ot/measure.hpp"
#include "w1fe/ot/w1.hpp"
#include "w1fe/potential/critic.hpp"
#include "w1fe/sampling.hpp"

namespace w1fe::flow {

enum class PotentialSource : std::uint8_t { oracle1d, trained_critic };

inline PotentialSource parse_source(const std::string& s)
{
    if (s == "oracle1d") return PotentialSource::oracle1d;
    if (s == "trained_critic") return PotentialSource::trained_critic;
    throw ConfigError("unknown potential source '" + s + "' (expected oracle1d|trained_critic)");
}

/// Snapshots of the cloud at t = n * eps, n = 0..n_steps.
struct FlowTrajectory {
    double epsilon = 0.0;
    std::vector<double> times;
    std::vector<Tensor> snapshots;

    std::size_t size() const noexcept { return snapshots.size(); }
};

/// Velocity -phi'(x) under the exact 1D potential toward the target. The
/// potential has a kink at every particle, so the one-sided slope facing the
/// direction of motion is used: right if phi falls to the right, left if
/// phi rises from the left, otherwise the particle stays.
inline double oracle_velocity(const ot::PiecewiseLinear1d& phi, double x)
{
    if (phi.slope_right(x) == -1) return 1.0;
    if (phi.slope_left(x) == 1) return -1.0;
    return 0.0;
}

/// One explicit Euler step of the particle flow with the exact 1D potential.
inline Tensor oracle_step(const Tensor& cloud, const ot::DiscreteMeasure& target, double eps)
{
    const ot::PiecewiseLinear1d phi = ot::kantorovich_potential_1d(ot::DiscreteMeasure::uniform(cloud), target);
    Tensor next = cloud;
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += eps * oracle_velocity(phi, cloud[i]);
    return next;
}

/// Resamples n target points with replacement, weighted by the target's masses.
inline Tensor draw_from(const ot::DiscreteMeasure& target, std::size_t n, Rng& rng)
{
    std::discrete_distribution<std::size_t> pick(target.weights().begin(), target.weights().end());
    Tensor out(Shape{n, target.dim()});
    for (std::size_t r = 0; r < n; ++r) {
        const auto p = target.point(pick(rng));
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
}

struct ParticleOptions {
    PotentialSource source = PotentialSource::oracle1d;
    // trained_critic only
    std::optional<nn::Params> critic_init;
    potential::CriticConfig critic;
    std::uint64_t seed = 0;
};

inline FlowTrajectory particle_flow_run(const Tensor& initial, const ot::DiscreteMeasure& target, double eps,
                                        std::size_t n_steps, const ParticleOptions& opt = {})
{
    if (!(eps > 0.0)) throw ConfigError("particle flow: eps must be > 0");
    if (initial.rank() != 2 || initial.rows() == 0) throw ShapeError("particle flow: cloud must be a non-empty n x d matrix");
    if (initial.cols() != target.dim())
        throw ShapeError("particle flow: cloud dimension " + std::to_string(initial.cols()) +
                         " does not match target dimension " + std::to_string(target.dim()));
    if (!initial.all_finite()) throw NonFiniteError("particle flow: non-finite initial position");
    if (opt.source == PotentialSource::oracle1d && target.dim() != 1)
        throw ConfigError("particle flow: oracle1d needs 1D data, got d = " + std::to_string(target.dim()));

    FlowTrajectory traj;
    traj.epsilon = eps;
    traj.times.push_back(0.0);
    traj.snapshots.push_back(initial);

    std::optional<potential::Critic> critic;
    Rng rng(opt.seed);
    if (opt.source == PotentialSource::trained_critic) {
        if (!opt.critic_init) throw ConfigError("particle flow: trained_critic needs an initial critic");
        critic.emplace(*opt.critic_init, opt.critic);
    }

    Tensor cloud = initial;
    for (std::size_t n = 1; n <= n_steps; ++n) {
        if (opt.source == PotentialSource::oracle1d) {
            cloud = oracle_step(cloud, target, eps);
        } else {
            Tensor data;
            for (std::size_t k = 0; k < critic->config().n_critic; ++k) {
                if (k == 0 || critic->config().fresh_data_per_step) data = draw_from(target, cloud.rows(), rng);
                critic->step(cloud, data, rng);
            }
            const Tensor g = ad::input_gradients(critic->params(), cloud);
            for (std::size_t i = 0; i < cloud.size(); ++i) cloud[i] -= eps * g[i];
            if (!cloud.all_finite()) throw NonFiniteError("particle flow: non-finite position at step " + std::to_string(n));
        }
        traj.times.push_back(static_cast<double>(n) * eps);
        traj.snapshots.push_back(cloud);
    }
    return traj;
}

/// Exact W1 from every snapshot to the target.
inline std::vector<double> w1_trace(const FlowTrajectory& traj, const ot::DiscreteMeasure& target)
{
    std::vector<double> out;
    out.reserve(traj.size());
    for (const Tensor& s : traj.snapshots) out.push_back(ot::w1_value(ot::DiscreteMeasure::uniform(s), target));
    return out;
}

struct EquicontinuityReport {
    double worst_excess = -std::numeric_limits<double>::infinity(); // max W1(s,t) - |s-t| - eps
    std::size_t worst_s = 0, worst_t = 0;
    std::size_t pairs = 0;

    bool holds(double slack = 1e-9) const { return worst_excess <= slack; }
};

/// Checks W1(mu(s), mu(t)) <= |s - t| + eps over every pair of snapshots.
inline EquicontinuityReport equicontinuity_check(const FlowTrajectory& traj)
{
    EquicontinuityReport r;
    std::vector<ot::DiscreteMeasure> measures;
    measures.reserve(traj.size());
    for (const Tensor& s : traj.snapshots) measures.push_back(ot::DiscreteMeasure::uniform(s));
    for (std::size_t a = 0; a < measures.size(); ++a)
        for (std::size_t b = a + 1; b < measures.size(); ++b) {
            const double excess = ot::w1_value(measures[a], measures[b]) - std::abs(traj.times[b] - traj.times[a]) -
                                  traj.epsilon;
            ++r.pairs;
            if (excess > r.worst_excess) r.worst_excess = excess, r.worst_s = a, r.worst_t = b;
        }
    return r;
}

} // namespace w1fe::flow
