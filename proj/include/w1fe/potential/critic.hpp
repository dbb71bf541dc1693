#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "w1fe/autodiff/backward.hpp"
#include "w1fe/autodiff/graph.hpp"
#include "w1fe/autodiff/net_gradients.hpp"
#include "w1fe/error.hpp"
#include "w1fe/nn/mlp.hpp"
#include "w1fe/nn/optim.hpp"
#include "w1fe/sampling.hpp"

namespace w1fe::potential {

enum class CriticVariant : std::uint8_t { clip, gp, lp };

inline CriticVariant parse_variant(const std::string& s)
{
    if (s == "clip") return CriticVariant::clip;
    if (s == "gp") return CriticVariant::gp;
    if (s == "lp") return CriticVariant::lp;
    throw ConfigError("unknown critic variant '" + s + "' (expected clip|gp|lp)");
}

inline std::string to_string(CriticVariant v)
{
    switch (v) {
    case CriticVariant::clip: return "clip";
    case CriticVariant::gp: return "gp";
    case CriticVariant::lp: return "lp";
    }
    return "?";
}

struct CriticConfig {
    CriticVariant variant = CriticVariant::lp;
    double lambda = 10.0; // gp / lp
    double clip = 0.01;   // clip
    std::size_t n_critic = 10;
    double lr = 1e-4;
    bool fresh_data_per_step = true;

    void validate() const
    {
        if (n_critic < 1) throw ConfigError("critic.n_critic must be >= 1");
        if (!(lr >= 0.0)) throw ConfigError("critic.lr must be >= 0");
        if (variant == CriticVariant::clip && !(clip > 0.0)) throw ConfigError("critic.clip must be > 0");
        if (variant != CriticVariant::clip && !(lambda >= 0.0)) throw ConfigError("critic.lambda must be >= 0");
    }
};

/// mean phi(gen) - mean phi(data). The critic ascends this.
inline double critic_objective(const nn::Params& phi, const Tensor& gen, const Tensor& data)
{
    if (gen.rows() == 0 || data.rows() == 0) throw ShapeError("critic_objective: empty batch");
    const Tensor a = nn::forward(phi, gen);
    const Tensor b = nn::forward(phi, data);
    double sa = 0.0, sb = 0.0;
    for (double v : a.values()) sa += v;
    for (double v : b.values()) sb += v;
    const double obj = sa / static_cast<double>(a.size()) - sb / static_cast<double>(b.size());
    if (!std::isfinite(obj)) throw NonFiniteError("critic_objective: non-finite network output");
    return obj;
}

/// x_hat_i = t_i * data_i + (1 - t_i) * gen_i with t_i ~ U(0, 1), paired by row.
inline Tensor interpolates(const Tensor& gen, const Tensor& data, Rng& rng)
{
    if (gen.shape() != data.shape())
        throw ShapeError("interpolates: batch shapes differ (" + w1fe::to_string(gen.shape()) + " vs " +
                         w1fe::to_string(data.shape()) + ")");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor out(gen.shape());
    for (std::size_t r = 0; r < gen.rows(); ++r) {
        const double t = u(rng);
        for (std::size_t c = 0; c < gen.cols(); ++c) out(r, c) = t * data(r, c) + (1.0 - t) * gen(r, c);
    }
    return out;
}

inline ad::PenaltyVariant penalty_variant(CriticVariant v)
{
    if (v == CriticVariant::clip) throw ConfigError("penalty: clip variant has no penalty term");
    return v == CriticVariant::gp ? ad::PenaltyVariant::gp : ad::PenaltyVariant::lp;
}

/// Penalty on interpolates drawn with a generator seeded by `seed`.
inline double penalty_term(const nn::Params& phi, const Tensor& gen, const Tensor& data, CriticVariant variant,
                           double lambda, std::uint64_t seed)
{
    Rng rng(seed);
    return ad::penalty_value(phi, interpolates(gen, data, rng), penalty_variant(variant), lambda);
}

struct CriticStats {
    double objective = 0.0; // on the batch of the last step, before that step
    double penalty = 0.0;
    std::size_t degenerate = 0;
};

/// Persistent critic: parameters and Adam state survive across epochs.
class Critic {
public:
    Critic(nn::Params init, CriticConfig config) : phi_(std::move(init)), config_(config)
    {
        config_.validate();
        if (phi_.spec().output_width() != 1) throw ShapeError("critic: output width must be 1");
        adam_ = nn::AdamState(phi_.size(), config_.lr);
    }

    /// One ascent step on the given batches.
    CriticStats step(const Tensor& gen, const Tensor& data, Rng& rng)
    {
        ad::Graph graph;
        const nn::NetLeaves leaves = nn::add_parameters(graph, phi_, true);
        const ad::NodeId g_in = graph.constant(gen);
        const ad::NodeId d_in = graph.constant(data);
        const ad::NodeId phi_gen = graph.mean(nn::apply_network(graph, phi_.spec(), leaves, g_in));
        const ad::NodeId phi_data = graph.mean(nn::apply_network(graph, phi_.spec(), leaves, d_in));
        ad::NodeId loss = graph.subtract(phi_data, phi_gen);

        CriticStats stats;
        stats.objective = graph.value(phi_gen).item() - graph.value(phi_data).item();
        if (config_.variant != CriticVariant::clip) {
            const ad::NodeId x_hat = graph.input(interpolates(gen, data, rng));
            const ad::PenaltyNodes pen =
                ad::add_penalty(graph, phi_.spec(), leaves, x_hat, penalty_variant(config_.variant), config_.lambda);
            loss = graph.add(loss, pen.penalty);
            stats.penalty = graph.value(pen.penalty).item();
            stats.degenerate = pen.degenerate;
        }
        const auto wrt = leaves.parameter_leaves();
        const std::vector<double> grad = nn::flatten_gradient(phi_, leaves, ad::backward(graph, loss, wrt));
        nn::adam_step(adam_, phi_, grad);
        if (config_.variant == CriticVariant::clip)
            for (double& w : phi_.values()) w = std::clamp(w, -config_.clip, config_.clip);
        return stats;
    }

    /// n_critic steps against the current generator. Generated samples and
    /// (by default) data are redrawn every step.
    CriticStats train(const nn::Params& generator, const BatchSampler& data, const BatchSampler& prior,
                      std::size_t batch, Rng& rng)
    {
        CriticStats stats;
        Tensor data_batch;
        for (std::size_t k = 0; k < config_.n_critic; ++k) {
            const Tensor gen = nn::forward(generator, prior(batch, rng));
            if (k == 0 || config_.fresh_data_per_step) data_batch = data(batch, rng);
            stats = step(gen, data_batch, rng);
        }
        return stats;
    }

    const nn::Params& params() const noexcept { return phi_; }
    nn::Params& params() noexcept { return phi_; }
    const nn::AdamState& adam() const noexcept { return adam_; }
    nn::AdamState& adam() noexcept { return adam_; }
    const CriticConfig& config() const noexcept { return config_; }

private:
    nn::Params phi_;
    nn::AdamState adam_;
    CriticConfig config_;
};

/// One epoch of critic training, warm-started from `critic`'s current state.
inline CriticStats simulate_phi(const nn::Params& generator, const BatchSampler& data, const BatchSampler& prior,
                                std::size_t batch, Critic& critic, Rng& rng)
{
    return critic.train(generator, data, prior, batch, rng);
}

} // namespace w1fe::potential
