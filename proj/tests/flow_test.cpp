#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "support/random_nets.hpp"
#include "w1fe/flow/experiment.hpp"
#include "w1fe/flow/generator.hpp"
#include "w1fe/flow/particle.hpp"
#include "w1fe/harness/samplers.hpp"
#include "w1fe/nn/checkpoint.hpp"
#include "w1fe/ot/w1.hpp"

using namespace w1fe;
using namespace w1fe::flow;

namespace {

// phi(x) = w . x + b as a single linear layer.
nn::Params linear_potential(std::vector<double> w, double b = 0.0)
{
    nn::MlpSpec spec;
    spec.widths = {w.size(), 1};
    w.push_back(b);
    return nn::Params(spec, std::move(w));
}

// G(z) = theta for every z: a latent x 1 linear layer with zero weights.
// Fed all-zero latents, the weight gradient vanishes and only theta moves.
nn::Trainable constant_generator(double theta, std::size_t latent, nn::OptimizerKind kind, double lr)
{
    nn::MlpSpec spec;
    spec.widths = {latent, 1};
    std::vector<double> v(latent, 0.0);
    v.push_back(theta);
    return nn::Trainable(nn::Params(spec, std::move(v)), kind, lr);
}

double bias_of(const nn::Trainable& g) { return g.params.values().back(); }

std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("w1fe_flow_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

std::vector<std::string> read_lines(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

FlowConfig small_config()
{
    FlowConfig c;
    c.batch = 32;
    c.epochs = 3;
    c.seed = 5;
    c.generator.hidden_width = 16;
    c.generator.hidden_layers = 2;
    c.critic_net = c.generator;
    c.critic.n_critic = 2;
    return c;
}

// Sorted-quantile distance of every particle to its matched target atom.
std::vector<double> quantile_gaps(const Tensor& cloud, std::vector<double> target)
{
    std::vector<double> x(cloud.values().begin(), cloud.values().end());
    std::sort(x.begin(), x.end());
    std::sort(target.begin(), target.end());
    std::vector<double> gaps(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) gaps[i] = std::abs(x[i] - target[i]);
    return gaps;
}

std::vector<double> normal_points(std::mt19937_64& rng, std::size_t n, double mean, double std)
{
    std::normal_distribution<double> g(mean, std);
    std::vector<double> v(n);
    for (double& x : v) x = g(rng);
    return v;
}

Tensor column(const std::vector<double>& v) { return Tensor(Shape{v.size(), 1}, v); }

} // namespace

TEST(EulerTargets, ZeroStepIsIdentity)
{
    std::mt19937_64 rng(1);
    const nn::Params phi = check::random_mlp(rng, 2, 2, 1);
    const Tensor y = check::random_matrix(rng, 9, 2);
    EXPECT_EQ(euler_targets(phi, y, 0.0), y);
}

TEST(EulerTargets, LinearPotential)
{
    const Tensor zeta = euler_targets(linear_potential({1.0, 0.0}), Tensor::matrix({{0.0, 0.0}}), 0.5);
    EXPECT_DOUBLE_EQ(zeta(0, 0), -0.5);
    EXPECT_DOUBLE_EQ(zeta(0, 1), 0.0);
}

TEST(EulerTargets, OraclePotentialMovesTowardTarget)
{
    // The exact potential from delta_0 toward delta_2 falls with slope -1.
    const auto oracle = ot::kantorovich_potential_1d(ot::DiscreteMeasure::dirac({0.0}), ot::DiscreteMeasure::dirac({2.0}));
    ASSERT_EQ(oracle.slope_right(0.0), -1);
    const Tensor zeta = euler_targets(linear_potential({static_cast<double>(oracle.slope_right(0.0))}),
                                      Tensor::matrix({{0.0}}), 1.0);
    EXPECT_DOUBLE_EQ(zeta[0], 1.0);
}

TEST(EulerTargets, RejectsNegativeStep)
{
    EXPECT_THROW((void)euler_targets(linear_potential({1.0}), Tensor::matrix({{0.0}}), -1.0), ConfigError);
}

TEST(GeneratorUpdate, ConstantGeneratorUnderLinearPotential)
{
    const double gamma = 0.01;
    const Tensor z(Shape{8, 2});
    nn::Trainable g = constant_generator(0.3, 2, nn::OptimizerKind::sgd, gamma);
    wgan_generator_update(g, z, linear_potential({1.0}));
    EXPECT_NEAR(bias_of(g), 0.3 - gamma, 1e-15);

    nn::Trainable h = constant_generator(0.3, 2, nn::OptimizerKind::sgd, gamma);
    wgan_persistent_update(h, z, linear_potential({1.0}), 4);
    EXPECT_NEAR(bias_of(h), 0.3 - 4 * gamma, 1e-15);
}

TEST(GeneratorUpdate, ConstantPotentialGivesNoUpdate)
{
    std::mt19937_64 rng(2);
    nn::Trainable g(nn::init(nn::make_mlp(2, 8, 2, 2), 3), nn::OptimizerKind::sgd, 0.1);
    const nn::Params before = g.params;
    wgan_generator_update(g, check::random_matrix(rng, 16, 2), linear_potential({0.0, 0.0}, 4.0));
    EXPECT_EQ(g.params, before);
}

TEST(GeneratorUpdate, PersistentOneStepIsASingleSgdStep)
{
    std::mt19937_64 rng(3);
    const nn::Params g0 = nn::init(nn::make_mlp(2, 8, 2, 2), 4);
    const Tensor z = check::random_matrix(rng, 16, 2), zeta = check::random_matrix(rng, 16, 2);
    nn::Trainable g(g0, nn::OptimizerKind::sgd, 0.05);
    persistent_generator_update(g, z, zeta, 1);

    // Hand computation: grad of (1/m) sum |zeta - G|^2 by the chain rule on the output.
    const std::vector<double> grad = regression_gradient(g0, z, zeta);
    for (std::size_t i = 0; i < g0.size(); ++i) EXPECT_DOUBLE_EQ(g.params.values()[i], g0.values()[i] - 0.05 * grad[i]);
}

TEST(GeneratorUpdate, RegressionGradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(4);
    nn::Params g = check::random_mlp(rng, 2, 2, 2);
    const Tensor z = check::random_matrix(rng, 6, 2), zeta = check::random_matrix(rng, 6, 2);
    const std::vector<double> grad = regression_gradient(g, z, zeta);
    auto loss = [&](const nn::Params& p) {
        const Tensor out = nn::forward(p, z);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += (zeta[i] - out[i]) * (zeta[i] - out[i]);
        return s / 6.0;
    };
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double h = 1e-6, orig = g.values()[i];
        g.values()[i] = orig + h;
        const double up = loss(g);
        g.values()[i] = orig - h;
        const double down = loss(g);
        g.values()[i] = orig;
        EXPECT_NEAR(grad[i], (up - down) / (2 * h), 1e-6 * std::max(1.0, std::abs(grad[i])));
    }
}

TEST(GeneratorUpdate, FittedGeneratorStaysPut)
{
    nn::Trainable g = constant_generator(1.25, 3, nn::OptimizerKind::sgd, 0.1);
    const Tensor z(Shape{5, 3});
    const Tensor zeta(Shape{5, 1}, std::vector<double>(5, 1.25));
    const nn::Params before = g.params;
    persistent_generator_update(g, z, zeta, 7);
    EXPECT_EQ(g.params, before);
}

TEST(GeneratorUpdate, OverparameterizedFitOnFixedBatch)
{
    // Affine targets, as produced by a linear critic on an affine generator.
    std::mt19937_64 rng(5);
    const std::size_t m = 32;
    for (std::uint64_t seed : {6u, 7u, 8u, 9u}) {
        nn::Trainable g(nn::init(nn::make_mlp(1, 64, 3, 1), seed), nn::OptimizerKind::adam, 3e-3);
        const Tensor z = check::random_matrix(rng, m, 1);
        Tensor zeta(Shape{m, 1});
        for (std::size_t i = 0; i < m; ++i) zeta[i] = 2.0 * z[i] + 1.0;
        double initial = 0.0;
        (void)regression_gradient(g.params, z, zeta, &initial);
        persistent_generator_update(g, z, zeta, 200);
        double final_loss = 0.0;
        (void)regression_gradient(g.params, z, zeta, &final_loss);
        EXPECT_LT(final_loss, 1e-3 * initial) << initial << " -> " << final_loss;
    }
}

TEST(GeneratorUpdate, TargetShapeMismatch)
{
    nn::Trainable g(nn::init(nn::make_mlp(2, 4, 1, 2), 1), nn::OptimizerKind::sgd, 0.1);
    EXPECT_THROW(persistent_generator_update(g, Tensor(Shape{4, 2}), Tensor(Shape{4, 3}), 1), ShapeError);
}

TEST(Equivalence, OneStepMatchesWganAtDoubledRate)
{
    for (std::uint64_t seed : {0u, 1u, 7u, 42u, 1234u}) {
        const EquivalenceReport r = equivalence_check(seed);
        EXPECT_GT(r.max_update, 0.0);
        EXPECT_LT(r.relative, 1e-8) << "seed " << seed;
    }
}

TEST(Equivalence, HoldsForOtherStepSizes)
{
    for (double eps : {0.1, 0.5, 2.0}) {
        EquivalenceSetup s;
        s.epsilon = eps;
        s.gamma_g = 1e-3;
        EXPECT_LT(equivalence_check(3, s).relative, 1e-8) << "eps " << eps;
    }
}

TEST(Equivalence, ZeroStepGivesZeroUpdates)
{
    EquivalenceSetup s;
    s.epsilon = 0.0;
    const EquivalenceReport r = equivalence_check(9, s);
    EXPECT_EQ(r.max_update, 0.0);
    EXPECT_EQ(r.max_abs, 0.0);
}

TEST(Equivalence, BreaksDownForTwoSteps)
{
    EquivalenceSetup s;
    s.K = 2;
    s.gamma_g = 1e-2;
    const EquivalenceReport r = equivalence_check(7, s);
    EXPECT_TRUE(std::isfinite(r.relative));
    EXPECT_GT(r.relative, 1e-6);
}

TEST(ParticleFlow, SingleParticleReachesDirac)
{
    const FlowTrajectory t = particle_flow_run(Tensor::matrix({{0.0}}), ot::DiscreteMeasure::dirac({2.0}), 0.5, 4);
    ASSERT_EQ(t.size(), 5u);
    const std::vector<double> expected_pos{0.0, 0.5, 1.0, 1.5, 2.0};
    for (std::size_t n = 0; n < 5; ++n) {
        EXPECT_EQ(t.snapshots[n][0], expected_pos[n]);
        EXPECT_EQ(t.times[n], 0.5 * static_cast<double>(n));
    }
    const std::vector<double> w1 = w1_trace(t, ot::DiscreteMeasure::dirac({2.0}));
    for (std::size_t n = 0; n < 5; ++n) EXPECT_NEAR(w1[n], std::max(0.0, 2.0 - 0.5 * static_cast<double>(n)), 1e-12);
}

TEST(ParticleFlow, MovesLeftTowardLowerTarget)
{
    const FlowTrajectory t = particle_flow_run(Tensor::matrix({{1.0}}), ot::DiscreteMeasure::dirac({-1.0}), 0.25, 3);
    EXPECT_EQ(t.snapshots.back()[0], 0.25);
}

TEST(ParticleFlow, CloudAtTargetIsStationary)
{
    std::mt19937_64 rng(6);
    const std::vector<double> pts = normal_points(rng, 20, 0.0, 1.0);
    const FlowTrajectory t = particle_flow_run(column(pts), ot::DiscreteMeasure::uniform_1d(pts), 0.3, 5);
    for (const Tensor& s : t.snapshots) EXPECT_EQ(s, column(pts));
}

TEST(ParticleFlow, EquicontinuityOverStepSizes)
{
    std::mt19937_64 rng(7);
    const std::vector<double> target = normal_points(rng, 50, 3.0, 0.5);
    const Tensor initial = column(normal_points(rng, 50, 0.0, 1.0));
    for (double eps : {1.0, 0.5, 0.25, 0.1}) {
        const auto steps = static_cast<std::size_t>(std::lround(4.0 / eps));
        const FlowTrajectory t = particle_flow_run(initial, ot::DiscreteMeasure::uniform_1d(target), eps, steps);
        const EquicontinuityReport r = equicontinuity_check(t);
        EXPECT_EQ(r.pairs, (steps + 1) * steps / 2);
        EXPECT_TRUE(r.holds()) << "eps " << eps << " excess " << r.worst_excess;
    }
}

TEST(ParticleFlow, W1DropsByEpsWhileParticlesAreFar)
{
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 5; ++rep) {
        const std::vector<double> target = normal_points(rng, 30, 4.0, 1.0);
        const Tensor initial = column(normal_points(rng, 30, -2.0, 1.0));
        const double eps = 0.2;
        const FlowTrajectory t = particle_flow_run(initial, ot::DiscreteMeasure::uniform_1d(target), eps, 60);
        const std::vector<double> w1 = w1_trace(t, ot::DiscreteMeasure::uniform_1d(target));
        std::size_t exact_steps = 0;
        for (std::size_t n = 0; n + 1 < t.size(); ++n) {
            const auto gaps = quantile_gaps(t.snapshots[n], target);
            const double closest = *std::min_element(gaps.begin(), gaps.end());
            if (closest >= eps) {
                EXPECT_NEAR(w1[n] - w1[n + 1], eps, 1e-9) << "step " << n;
                ++exact_steps;
            }
            if (closest >= eps / 2) {
                EXPECT_LE(w1[n + 1], w1[n] + 1e-9) << "step " << n;
            }
        }
        EXPECT_GT(exact_steps, 0u);
    }
}

TEST(ParticleFlow, OvershootCanRaiseW1)
{
    // Within eps / 2 of its target a particle overshoots and W1 grows,
    // so monotonicity needs the distance qualification.
    const FlowTrajectory t = particle_flow_run(Tensor::matrix({{0.0}}), ot::DiscreteMeasure::dirac({0.3}), 1.0, 1);
    const std::vector<double> w1 = w1_trace(t, ot::DiscreteMeasure::dirac({0.3}));
    EXPECT_GT(w1[1], w1[0]);
}

TEST(ParticleFlow, StableUnderStepRefinement)
{
    std::mt19937_64 rng(9);
    const std::vector<double> target = normal_points(rng, 40, 2.0, 0.7);
    const auto nu = ot::DiscreteMeasure::uniform_1d(target);
    const Tensor initial = column(normal_points(rng, 40, 0.0, 1.0));
    for (double eps : {1.0, 0.5, 0.2}) {
        const auto n = static_cast<std::size_t>(std::lround(3.0 / eps));
        const double coarse = w1_trace(particle_flow_run(initial, nu, eps, n), nu).back();
        const double fine = w1_trace(particle_flow_run(initial, nu, eps / 2, 2 * n), nu).back();
        EXPECT_LT(std::abs(coarse - fine), 2 * eps) << "eps " << eps;
    }
}

TEST(ParticleFlow, OracleNeedsOneDimension)
{
    EXPECT_THROW(particle_flow_run(Tensor::matrix({{0.0, 0.0}}), ot::DiscreteMeasure::dirac({1.0, 1.0}), 0.1, 1),
                 ConfigError);
    EXPECT_THROW(particle_flow_run(Tensor::matrix({{0.0}}), ot::DiscreteMeasure::dirac({1.0}), 0.0, 1), ConfigError);
    EXPECT_THROW(particle_flow_run(Tensor::matrix({{0.0}}), ot::DiscreteMeasure::dirac({1.0, 1.0}), 0.1, 1),
                 ShapeError);
}

TEST(ParticleFlow, TrainedCriticPullsCloudTowardTarget)
{
    std::mt19937_64 rng(10);
    Tensor target_pts(Shape{64, 2}), initial(Shape{64, 2});
    std::normal_distribution<double> g(0.0, 0.2);
    for (std::size_t r = 0; r < 64; ++r) {
        target_pts(r, 0) = 2.0 + g(rng), target_pts(r, 1) = g(rng);
        initial(r, 0) = g(rng), initial(r, 1) = g(rng);
    }
    const auto nu = ot::DiscreteMeasure::uniform(target_pts);
    ParticleOptions opt;
    opt.source = PotentialSource::trained_critic;
    opt.critic_init = nn::init(nn::make_mlp(2, 32, 2, 1), 11);
    opt.critic.lr = 1e-3;
    opt.seed = 12;
    const FlowTrajectory t = particle_flow_run(initial, nu, 0.1, 10, opt);
    const std::vector<double> w1 = w1_trace(t, nu);
    EXPECT_LT(w1.back(), 0.8 * w1.front()) << w1.front() << " -> " << w1.back();
    EXPECT_EQ(particle_flow_run(initial, nu, 0.1, 3, opt).snapshots, particle_flow_run(initial, nu, 0.1, 3, opt).snapshots);
}

TEST(Experiment, ZeroEpochsWritesHeaderOnly)
{
    FlowConfig c = small_config();
    c.epochs = 0;
    const auto dir = scratch_dir("zero");
    const ExperimentResult r = run_experiment(c, ring_dataset(), dir);
    EXPECT_TRUE(r.records.empty());
    const auto lines = read_lines(dir / "metrics.csv");
    ASSERT_EQ(lines.size(), 1u);
    EXPECT_EQ(lines[0], csv_header);
}

TEST(Experiment, SameSeedSameCsvApartFromWallclock)
{
    const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
    FlowConfig c = small_config();
    c.deterministic = true;
    run_experiment(c, ring_dataset(), a);
    run_experiment(c, ring_dataset(), b);
    auto strip = [](std::string line) {
        const auto first = line.find(','), second = line.find(',', first + 1);
        return line.erase(first, second - first);
    };
    const auto la = read_lines(a / "metrics.csv"), lb = read_lines(b / "metrics.csv");
    ASSERT_EQ(la.size(), 4u);
    ASSERT_EQ(la.size(), lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(strip(la[i]), strip(lb[i]));
}

TEST(Experiment, RecordsCarryRunFields)
{
    FlowConfig c = small_config();
    c.mode = FlowMode::wgan;
    c.K = 4;
    const ExperimentResult r = run_experiment(c, ring_dataset());
    ASSERT_EQ(r.records.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(r.records[i].epoch, i + 1);
        EXPECT_EQ(r.records[i].K, 1u);
        EXPECT_EQ(r.records[i].mode, FlowMode::wgan);
        EXPECT_GE(r.records[i].w1_minibatch, 0.0);
    }
    EXPECT_LE(r.records[0].wallclock_s, r.records[2].wallclock_s);
}

TEST(Experiment, EveryModeTrains)
{
    for (FlowMode m : {FlowMode::w1fe, FlowMode::wgan, FlowMode::wgan_persistent}) {
        FlowConfig c = small_config();
        c.mode = m;
        c.K = 3;
        const nn::Params init = nn::init(generator_spec(c, 2), derive_seed(c.seed, 1));
        const ExperimentResult r = run_experiment(c, ring_dataset());
        EXPECT_NE(r.generator, init) << to_string(m);
    }
}

TEST(Experiment, FailureReportsEpochAndKeepsRows)
{
    FlowConfig c = small_config();
    c.epochs = 10;
    c.critic.n_critic = 1;
    // One critic draw and one metric draw per epoch: call 5 falls in epoch 3.
    auto calls = std::make_shared<int>(0);
    Dataset d{[calls](std::size_t n, Rng& rng) {
                  if (++*calls == 5) throw NonFiniteError("sampler produced NaN");
                  return harness::gaussian_ring_sample({}, n, rng);
              },
              2};
    const auto dir = scratch_dir("fail");
    try {
        run_experiment(c, d, dir);
        FAIL() << "expected EpochError";
    } catch (const EpochError& e) {
        EXPECT_EQ(e.epoch(), 3u);
        EXPECT_NE(std::string(e.what()).find("epoch 3"), std::string::npos);
    }
    EXPECT_EQ(read_lines(dir / "metrics.csv").size(), 3u);
}

TEST(Experiment, CheckpointsRoundTrip)
{
    FlowConfig c = small_config();
    c.epochs = 4;
    c.checkpoint_every = 2;
    const auto dir = scratch_dir("ckpt");
    const ExperimentResult r = run_experiment(c, ring_dataset(), dir);
    for (int e : {2, 4}) {
        EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints" / ("epoch_" + std::to_string(e) + ".w1fe")));
        EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints" / ("epoch_" + std::to_string(e) + ".critic.w1fe")));
    }
    EXPECT_FALSE(std::filesystem::exists(dir / "checkpoints" / "epoch_1.w1fe"));
    EXPECT_EQ(nn::checkpoint_load(dir / "checkpoints" / "epoch_4.w1fe").params, r.generator);
    EXPECT_EQ(nn::checkpoint_load(dir / "checkpoints" / "epoch_4.critic.w1fe").params, r.critic);
}

TEST(Experiment, RejectsParticleModeAndBadConfig)
{
    FlowConfig c = small_config();
    c.mode = FlowMode::particle;
    EXPECT_THROW(run_experiment(c, ring_dataset()), ConfigError);
    c = small_config();
    c.epsilon = 0.0;
    EXPECT_THROW(run_experiment(c, ring_dataset()), ConfigError);
}
