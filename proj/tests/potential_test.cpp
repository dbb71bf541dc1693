#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "support/ot_oracles.hpp"
#include "support/random_nets.hpp"
#include "w1fe/harness/samplers.hpp"
#include "w1fe/ot/w1.hpp"
#include "w1fe/potential/critic.hpp"

using namespace w1fe;
using namespace w1fe::potential;

namespace {

// phi(x) = w . x as a single linear layer.
nn::Params linear_potential(std::vector<double> w)
{
    nn::MlpSpec spec;
    spec.widths = {w.size(), 1};
    w.push_back(0.0);
    return nn::Params(spec, std::move(w));
}

// Scale each layer so its Frobenius norm is at most 1. With 1-Lipschitz
// activations the network is then 1-Lipschitz (Frobenius bounds the operator norm).
nn::Params make_one_lipschitz(nn::Params p)
{
    for (std::size_t l = 0; l < p.spec().layers(); ++l) {
        double sq = 0.0;
        for (double v : p.weights(l)) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > 1.0)
            for (double& v : p.weights(l)) v /= norm;
    }
    return p;
}

ot::DiscreteMeasure as_measure(const Tensor& batch) { return ot::DiscreteMeasure::uniform(batch); }

} // namespace

TEST(CriticObjective, ZeroPotential)
{
    const nn::Params zero(nn::make_mlp(2, 4, 1, 1));
    std::mt19937_64 rng(1);
    EXPECT_EQ(critic_objective(zero, check::random_matrix(rng, 5, 2), check::random_matrix(rng, 7, 2)), 0.0);
}

TEST(CriticObjective, IdentityPotential1d)
{
    EXPECT_DOUBLE_EQ(critic_objective(linear_potential({1.0}), Tensor::matrix({{0.0}}), Tensor::matrix({{1.0}})), -1.0);
}

TEST(CriticObjective, BoundedByW1ForLipschitzPotentials)
{
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 40; ++rep) {
        const nn::Params phi = make_one_lipschitz(check::random_mlp(rng, 2, 2, 1));
        const Tensor gen = check::random_matrix(rng, 12, 2), data = check::random_matrix(rng, 12, 2, 2.0);
        const double obj = critic_objective(phi, gen, data);
        const double w1 = ot::w1_value(as_measure(gen), as_measure(data));
        EXPECT_LE(obj, w1 + 1e-9);
        EXPECT_LE(-obj, w1 + 1e-9);
    }
}

TEST(CriticObjective, RejectsEmptyBatch)
{
    EXPECT_THROW((void)critic_objective(linear_potential({1.0}), Tensor(Shape{0, 1}), Tensor::matrix({{1.0}})),
                 ShapeError);
}

TEST(PenaltyTerm, UnitSlopeHasNoPenalty)
{
    const Tensor gen = Tensor::matrix({{0.0}, {1.0}, {-2.0}}), data = Tensor::matrix({{3.0}, {0.5}, {4.0}});
    EXPECT_NEAR(penalty_term(linear_potential({1.0}), gen, data, CriticVariant::gp, 10.0, 3), 0.0, 1e-15);
    EXPECT_NEAR(penalty_term(linear_potential({1.0}), gen, data, CriticVariant::lp, 10.0, 3), 0.0, 1e-15);
}

TEST(PenaltyTerm, SlopeTwoAndSlopeHalf)
{
    const Tensor gen = Tensor::matrix({{0.0}, {1.0}}), data = Tensor::matrix({{3.0}, {0.5}});
    EXPECT_NEAR(penalty_term(linear_potential({2.0}), gen, data, CriticVariant::gp, 10.0, 3), 10.0, 1e-12);
    EXPECT_NEAR(penalty_term(linear_potential({2.0}), gen, data, CriticVariant::lp, 10.0, 3), 10.0, 1e-12);
    EXPECT_NEAR(penalty_term(linear_potential({0.5}), gen, data, CriticVariant::gp, 10.0, 3), 2.5, 1e-12);
    EXPECT_EQ(penalty_term(linear_potential({0.5}), gen, data, CriticVariant::lp, 10.0, 3), 0.0);
}

TEST(PenaltyTerm, InterpolatesLieOnSegments)
{
    std::mt19937_64 rng(4);
    const Tensor gen = check::random_matrix(rng, 50, 2), data = check::random_matrix(rng, 50, 2);
    const Tensor x = interpolates(gen, data, rng);
    for (std::size_t r = 0; r < 50; ++r) {
        // x = t data + (1 - t) gen for a common t in [0, 1]
        const double t = (x(r, 0) - gen(r, 0)) / (data(r, 0) - gen(r, 0));
        EXPECT_GE(t, -1e-12);
        EXPECT_LE(t, 1.0 + 1e-12);
        EXPECT_NEAR(x(r, 1), t * data(r, 1) + (1.0 - t) * gen(r, 1), 1e-9);
    }
    EXPECT_THROW((void)interpolates(gen, check::random_matrix(rng, 3, 2), rng), ShapeError);
}

TEST(CriticConfig, Validation)
{
    CriticConfig c;
    c.n_critic = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.variant = CriticVariant::clip;
    c.clip = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(parse_variant("gp"), CriticVariant::gp);
    EXPECT_THROW(parse_variant("sn"), ConfigError);
    EXPECT_THROW(Critic(nn::init(nn::make_mlp(2, 4, 1, 2), 1), CriticConfig{}), ShapeError);
}

TEST(SimulatePhi, ClipKeepsEveryWeightInRange)
{
    CriticConfig cfg;
    cfg.variant = CriticVariant::clip;
    cfg.clip = 0.01;
    cfg.lr = 5e-3;
    Critic critic(nn::init(nn::make_mlp(2, 16, 2, 1), 3), cfg);
    std::mt19937_64 rng(5);
    for (int k = 0; k < 20; ++k) {
        critic.step(check::random_matrix(rng, 32, 2), check::random_matrix(rng, 32, 2, 3.0), rng);
        for (double w : critic.params().values()) {
            EXPECT_GE(w, -0.01);
            EXPECT_LE(w, 0.01);
        }
    }
}

TEST(SimulatePhi, OneDimensionalToyApproachesW1)
{
    std::mt19937_64 rng(1);
    const Tensor gen = harness::normal_1d_sample(0.0, 0.1, 256, rng);
    const Tensor data = harness::normal_1d_sample(2.0, 0.1, 256, rng);
    Critic critic(nn::init(nn::make_mlp(1, 128, 3, 1), 1), CriticConfig{});
    for (int k = 0; k < 200; ++k) critic.step(gen, data, rng);
    const double obj = critic_objective(critic.params(), gen, data);
    const double w1 = ot::w1_value(as_measure(gen), as_measure(data));
    EXPECT_NEAR(obj, w1, 0.2 * w1) << "objective " << obj << " vs W1 " << w1;
}

TEST(SimulatePhi, LipschitzPenaltyKeepsPotentialNearOneLipschitz)
{
    std::mt19937_64 rng(2);
    const std::size_t n = 128;
    const Tensor gen = harness::normal_1d_sample(0.0, 0.1, n, rng);
    const Tensor data = harness::normal_1d_sample(2.0, 0.1, n, rng);
    CriticConfig cfg;
    Critic critic(nn::init(nn::make_mlp(1, 128, 3, 1), 2), cfg);
    for (int k = 0; k < 1000; ++k) critic.step(gen, data, rng);

    const Tensor fg = nn::forward(critic.params(), gen), fd = nn::forward(critic.params(), data);
    double lip = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            lip = std::max(lip, std::abs(fg[i] - fd[j]) / std::abs(gen[i] - data[j]));
    // The soft one-sided penalty balances the transport-direction slope at 1 + 1/lambda.
    EXPECT_LE(lip, 1.0 + 1.0 / cfg.lambda + 0.05);

    double lo = gen[0], hi = gen[0];
    for (double v : gen.values()) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : data.values()) lo = std::min(lo, v), hi = std::max(hi, v);
    const double w1 = ot::w1_value(as_measure(gen), as_measure(data));
    EXPECT_LE(critic_objective(critic.params(), gen, data), w1 + 0.1 * (hi - lo));
}

TEST(SimulatePhi, SameSeedIsBitIdentical)
{
    auto run = [] {
        std::mt19937_64 rng(77);
        const nn::Params gen = nn::init(nn::make_mlp(2, 16, 2, 2), 1);
        Critic critic(nn::init(nn::make_mlp(2, 16, 2, 1), 2), CriticConfig{});
        for (int epoch = 0; epoch < 3; ++epoch)
            simulate_phi(gen, harness::ring_sampler({}), harness::prior_sampler(2), 64, critic, rng);
        return critic.params();
    };
    EXPECT_EQ(run(), run());
}

TEST(SimulatePhi, WarmStartKeepsAdamState)
{
    std::mt19937_64 rng(8);
    const nn::Params gen = nn::init(nn::make_mlp(2, 8, 1, 2), 1);
    CriticConfig cfg;
    cfg.n_critic = 4;
    Critic critic(nn::init(nn::make_mlp(2, 8, 1, 1), 2), cfg);
    simulate_phi(gen, harness::ring_sampler({}), harness::prior_sampler(2), 32, critic, rng);
    simulate_phi(gen, harness::ring_sampler({}), harness::prior_sampler(2), 32, critic, rng);
    EXPECT_EQ(critic.adam().t, 8u);
}

TEST(SimulatePhi, AscentOnFixedBatches)
{
    // The critic ascends objective - penalty; after n_critic steps on fixed
    // batches that quantity should have risen in at least 90% of trials.
    std::mt19937_64 rng(9);
    int ascended = 0, runs = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor gen = check::random_matrix(rng, 64, 2);
        Tensor data = check::random_matrix(rng, 64, 2, 0.5);
        for (std::size_t r = 0; r < 64; ++r) data(r, 0) += 2.0;
        for (CriticVariant v : {CriticVariant::clip, CriticVariant::gp, CriticVariant::lp}) {
            CriticConfig cfg;
            cfg.variant = v;
            nn::Params init = nn::init(nn::make_mlp(2, 32, 2, 1), rng());
            if (v == CriticVariant::clip)
                for (double& w : init.values()) w = std::clamp(w, -cfg.clip, cfg.clip);
            Critic critic(init, cfg);
            const std::uint64_t probe = rng();
            auto ascended_value = [&] {
                const double obj = critic_objective(critic.params(), gen, data);
                return v == CriticVariant::clip ? obj : obj - penalty_term(critic.params(), gen, data, v, cfg.lambda, probe);
            };
            const double before = ascended_value();
            for (std::size_t k = 0; k < cfg.n_critic; ++k) critic.step(gen, data, rng);
            if (ascended_value() >= before) ++ascended;
            ++runs;
        }
    }
    EXPECT_GE(ascended, static_cast<int>(0.9 * runs)) << ascended << " of " << runs;
}
