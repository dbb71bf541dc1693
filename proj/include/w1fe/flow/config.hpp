#pragma once

#include <cstdint>
#include <string>

#include "w1fe/error.hpp"
#include "w1fe/nn/mlp.hpp"
#include "w1fe/nn/optim.hpp"
#include "w1fe/potential/critic.hpp"

namespace w1fe::flow {

enum class FlowMode : std::uint8_t { w1fe, wgan, wgan_persistent, particle };

inline FlowMode parse_mode(const std::string& s)
{
    if (s == "w1fe") return FlowMode::w1fe;
    if (s == "wgan") return FlowMode::wgan;
    if (s == "wgan_persistent") return FlowMode::wgan_persistent;
    if (s == "particle") return FlowMode::particle;
    throw ConfigError("unknown mode '" + s + "' (expected w1fe|wgan|wgan_persistent|particle)");
}

inline std::string to_string(FlowMode m)
{
    switch (m) {
    case FlowMode::w1fe: return "w1fe";
    case FlowMode::wgan: return "wgan";
    case FlowMode::wgan_persistent: return "wgan_persistent";
    case FlowMode::particle: return "particle";
    }
    return "?";
}

struct NetworkShape {
    std::size_t hidden_width = 128;
    std::size_t hidden_layers = 3;
    nn::Activation activation = nn::Activation::leaky_relu;
    double leaky_alpha = 0.2;
};

struct FlowConfig {
    FlowMode mode = FlowMode::w1fe;
    double epsilon = 1.0;
    std::size_t K = 1;
    double gamma_g = 1e-4;
    std::size_t batch = 512;
    std::size_t latent = 2;
    std::size_t epochs = 2000;
    std::uint64_t seed = 0;
    bool deterministic = false;
    std::size_t checkpoint_every = 0; // 0 disables checkpoints
    std::size_t metric_batch = 512;   // minibatch size for the W1 metric, capped by batch
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    NetworkShape generator;
    NetworkShape critic_net;
    potential::CriticConfig critic;

    /// Checks ranges; K is forced to 1 in wgan mode.
    void validate()
    {
        if (!(epsilon > 0.0)) throw ConfigError("flow.epsilon must be > 0");
        if (K < 1) throw ConfigError("flow.K must be >= 1");
        if (!(gamma_g > 0.0)) throw ConfigError("flow.gamma_g must be > 0");
        if (batch < 1) throw ConfigError("flow.batch must be >= 1");
        if (latent < 1) throw ConfigError("flow.latent must be >= 1");
        if (metric_batch < 1) throw ConfigError("flow.metric_batch must be >= 1");
        for (const NetworkShape* s : {&generator, &critic_net})
            if (s->hidden_width < 1) throw ConfigError("network hidden width must be >= 1");
        critic.validate();
        if (mode == FlowMode::wgan) K = 1;
    }
};

inline nn::MlpSpec generator_spec(const FlowConfig& c, std::size_t data_dim)
{
    return nn::make_mlp(c.latent, c.generator.hidden_width, c.generator.hidden_layers, data_dim,
                        c.generator.activation, c.generator.leaky_alpha);
}

inline nn::MlpSpec critic_spec(const FlowConfig& c, std::size_t data_dim)
{
    return nn::make_mlp(data_dim, c.critic_net.hidden_width, c.critic_net.hidden_layers, 1, c.critic_net.activation,
                        c.critic_net.leaky_alpha);
}

/// Independent stream seeds from one run seed (splitmix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace w1fe::flow
