#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "w1fe/autodiff/backward.hpp"
#include "w1fe/autodiff/graph.hpp"
#include "w1fe/autodiff/net_gradients.hpp"
#include "w1fe/error.hpp"
#include "w1fe/flow/config.hpp"
#include "w1fe/nn/mlp.hpp"
#include "w1fe/nn/optim.hpp"
#include "w1fe/sampling.hpp"

namespace w1fe::flow {

/// zeta_i = y_i - eps * grad phi(y_i), row-wise.
inline Tensor euler_targets(const nn::Params& phi, const Tensor& y, double eps)
{
    if (!(eps >= 0.0)) throw ConfigError("euler_targets: eps must be >= 0");
    const Tensor g = ad::input_gradients(phi, y);
    Tensor zeta = y;
    for (std::size_t i = 0; i < zeta.size(); ++i) zeta[i] -= eps * g[i];
    return zeta;
}

/// Parameter gradient of (1/m) sum_i |zeta_i - G(z_i)|^2.
inline std::vector<double> regression_gradient(const nn::Params& gen, const Tensor& z, const Tensor& zeta,
                                               double* loss = nullptr)
{
    ad::Graph graph;
    const nn::NetNodes net = nn::build_forward(graph, gen, graph.constant(z));
    if (graph.value(net.output).shape() != zeta.shape())
        throw ShapeError("generator update: target shape " + w1fe::to_string(zeta.shape()) + " does not match output " +
                         w1fe::to_string(graph.value(net.output).shape()));
    const ad::NodeId diff = graph.subtract(graph.constant(zeta), net.output);
    const ad::NodeId l = graph.scale(graph.sum(graph.square(diff)), 1.0 / static_cast<double>(z.rows()));
    if (loss) *loss = graph.value(l).item();
    return nn::flatten_gradient(gen, net, ad::backward(graph, l, net.parameter_leaves()));
}

/// Parameter gradient of (1/m) sum_i phi(G(z_i)).
inline std::vector<double> critic_push_gradient(const nn::Params& gen, const Tensor& z, const nn::Params& phi)
{
    ad::Graph graph;
    const nn::NetNodes net = nn::build_forward(graph, gen, graph.constant(z));
    const nn::NetLeaves critic = nn::add_parameters(graph, phi, false);
    const ad::NodeId out = nn::apply_network(graph, phi.spec(), critic, net.output);
    const ad::NodeId l = graph.mean(out);
    return nn::flatten_gradient(gen, net, ad::backward(graph, l, net.parameter_leaves()));
}

/// K descent steps on the regression loss toward fixed targets; z and zeta
/// are reused for all K steps. Returns the loss before the last step.
inline double persistent_generator_update(nn::Trainable& gen, const Tensor& z, const Tensor& zeta, std::size_t K)
{
    double loss = 0.0;
    for (std::size_t k = 0; k < K; ++k) gen.step(regression_gradient(gen.params, z, zeta, &loss));
    return loss;
}

/// One step descending mean phi(G(z)).
inline void wgan_generator_update(nn::Trainable& gen, const Tensor& z, const nn::Params& phi)
{
    gen.step(critic_push_gradient(gen.params, z, phi));
}

/// The WGAN update repeated K times on the same z with phi held fixed.
inline void wgan_persistent_update(nn::Trainable& gen, const Tensor& z, const nn::Params& phi, std::size_t K)
{
    for (std::size_t k = 0; k < K; ++k) wgan_generator_update(gen, z, phi);
}

struct EquivalenceReport {
    double max_abs = 0.0;     // max_i |dtheta_w1fe - dtheta_wgan|
    double max_update = 0.0;  // max_i |dtheta_wgan|
    double relative = 0.0;    // max_abs / max_update (0 when both updates vanish)
};

struct EquivalenceSetup {
    double epsilon = 1.0;
    double gamma_g = 1e-4;
    std::size_t K = 1;
    std::size_t batch = 64;
    std::size_t latent = 2;
    std::size_t data_dim = 2;
};

/// W1-FE with K regression steps (SGD, lr gamma) against the persistent WGAN
/// update with the same K (SGD, lr 2 gamma eps), from identical G, phi and z.
/// For K = 1 the two agree up to rounding.
inline EquivalenceReport equivalence_check(std::uint64_t seed, const EquivalenceSetup& s = {})
{
    FlowConfig shapes;
    const nn::Params g0 = nn::init(generator_spec(shapes, s.data_dim), derive_seed(seed, 1));
    nn::Params phi = nn::init(critic_spec(shapes, s.data_dim), derive_seed(seed, 2));
    Rng rng(derive_seed(seed, 3));
    // Non-zero biases so the check does not rely on the init's symmetry.
    std::normal_distribution<double> noise(0.0, 0.1);
    for (std::size_t l = 0; l < phi.spec().layers(); ++l)
        for (double& b : phi.bias(l)) b = noise(rng);
    Tensor z(Shape{s.batch, s.latent});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : z.values()) v = normal(rng);

    nn::Trainable a(g0, nn::OptimizerKind::sgd, s.gamma_g);
    const Tensor y = nn::forward(a.params, z);
    persistent_generator_update(a, z, euler_targets(phi, y, s.epsilon), s.K);

    nn::Trainable b(g0, nn::OptimizerKind::sgd, 2.0 * s.gamma_g * s.epsilon);
    wgan_persistent_update(b, z, phi, s.K);

    EquivalenceReport r;
    for (std::size_t i = 0; i < g0.size(); ++i) {
        const double da = a.params.values()[i] - g0.values()[i];
        const double db = b.params.values()[i] - g0.values()[i];
        r.max_abs = std::max(r.max_abs, std::abs(da - db));
        r.max_update = std::max(r.max_update, std::abs(db));
    }
    r.relative = r.max_update > 0.0 ? r.max_abs / r.max_update : r.max_abs;
    return r;
}

} // namespace w1fe::flow
