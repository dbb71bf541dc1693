#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "w1fe/error.hpp"
#include "w1fe/flow/config.hpp"
#include "w1fe/flow/generator.hpp"
#include "w1fe/harness/samplers.hpp"
#include "w1fe/nn/checkpoint.hpp"
#include "w1fe/ot/measure.hpp"
#include "w1fe/ot/w1.hpp"
#include "w1fe/potential/critic.hpp"

namespace w1fe::flow {

struct EpochRecord {
    std::size_t epoch = 0;
    double wallclock_s = 0.0;
    double w1_minibatch = 0.0;
    double critic_objective = 0.0;
    double penalty = 0.0;
    std::size_t K = 1;
    double epsilon = 1.0;
    std::uint64_t seed = 0;
    FlowMode mode = FlowMode::w1fe;
};

inline constexpr const char* csv_header = "epoch,wallclock_s,w1_minibatch,critic_objective,penalty,K,epsilon,seed,mode";

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string to_csv_row(const EpochRecord& r)
{
    return std::to_string(r.epoch) + ',' + format_double(r.wallclock_s) + ',' + format_double(r.w1_minibatch) + ',' +
           format_double(r.critic_objective) + ',' + format_double(r.penalty) + ',' + std::to_string(r.K) + ',' +
           format_double(r.epsilon) + ',' + std::to_string(r.seed) + ',' + to_string(r.mode);
}

/// Data distribution for a run: a sampler plus its dimension.
struct Dataset {
    BatchSampler sample;
    std::size_t dim = 2;
};

inline Dataset ring_dataset(const harness::RingSpec& spec = {}) { return {harness::ring_sampler(spec), 2}; }

/// Optional per-epoch observer, e.g. for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

struct ExperimentResult {
    std::vector<EpochRecord> records;
    nn::Params generator;
    nn::Params critic;
};

/// Minibatch W1 between fresh generator and data batches of equal size.
inline double minibatch_w1(const nn::Params& gen, const Dataset& data, std::size_t latent, std::size_t n, Rng& rng)
{
    const Tensor y = nn::forward(gen, harness::prior_sample(latent, n, rng));
    const Tensor x = data.sample(n, rng);
    return ot::w1_value(ot::DiscreteMeasure::uniform(y), ot::DiscreteMeasure::uniform(x));
}

/// Runs the training loop. With a non-empty `out_dir`, writes metrics.csv
/// (one flushed row per epoch) and checkpoints under out_dir/checkpoints.
/// Errors abort with an EpochError; rows already written stay on disk.
inline ExperimentResult run_experiment(FlowConfig config, const Dataset& data, const std::filesystem::path& out_dir = {},
                                       const EpochCallback& on_epoch = {})
{
    config.validate();
    if (config.mode == FlowMode::particle)
        throw ConfigError("run_experiment: particle mode has no generator; use particle_flow_run");
    if (!data.sample || data.dim < 1) throw ConfigError("run_experiment: dataset has no sampler");

    std::ofstream csv;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        csv.open(out_dir / "metrics.csv", std::ios::trunc);
        if (!csv) throw Error("run_experiment: cannot open " + (out_dir / "metrics.csv").string());
        csv << csv_header << '\n' << std::flush;
        if (config.checkpoint_every > 0) std::filesystem::create_directories(out_dir / "checkpoints");
    }

    // Separate streams so the metric never perturbs the training draws.
    Rng train_rng(derive_seed(config.seed, 10));
    Rng metric_rng(derive_seed(config.seed, 11));
    const double gen_lr = config.mode == FlowMode::w1fe ? config.gamma_g : 2.0 * config.gamma_g * config.epsilon;
    nn::Trainable gen(nn::init(generator_spec(config, data.dim), derive_seed(config.seed, 1)), config.optimizer, gen_lr);
    potential::Critic critic(nn::init(critic_spec(config, data.dim), derive_seed(config.seed, 2)), config.critic);
    const BatchSampler prior = harness::prior_sampler(config.latent);
    const std::size_t metric_n = std::min(config.batch, config.metric_batch);

    ExperimentResult result;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochRecord rec;
        try {
            const potential::CriticStats stats =
                potential::simulate_phi(gen.params, data.sample, prior, config.batch, critic, train_rng);
            const Tensor z = prior(config.batch, train_rng);
            switch (config.mode) {
            case FlowMode::w1fe: {
                const Tensor y = nn::forward(gen.params, z);
                persistent_generator_update(gen, z, euler_targets(critic.params(), y, config.epsilon), config.K);
                break;
            }
            case FlowMode::wgan: wgan_generator_update(gen, z, critic.params()); break;
            case FlowMode::wgan_persistent: wgan_persistent_update(gen, z, critic.params(), config.K); break;
            case FlowMode::particle: break;
            }
            if (!std::all_of(gen.params.values().begin(), gen.params.values().end(),
                             [](double v) { return std::isfinite(v); }))
                throw NonFiniteError("generator parameters became non-finite");

            rec.epoch = epoch;
            rec.w1_minibatch = minibatch_w1(gen.params, data, config.latent, metric_n, metric_rng);
            rec.critic_objective = stats.objective;
            rec.penalty = stats.penalty;
            rec.K = config.K;
            rec.epsilon = config.epsilon;
            rec.seed = config.seed;
            rec.mode = config.mode;
            rec.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

            if (!out_dir.empty() && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
                const auto dir = out_dir / "checkpoints";
                nn::checkpoint_save(gen.params, gen.adam, dir / ("epoch_" + std::to_string(epoch) + ".w1fe"));
                nn::checkpoint_save(critic.params(), critic.adam(),
                                    dir / ("epoch_" + std::to_string(epoch) + ".critic.w1fe"));
            }
        } catch (const EpochError&) {
            throw;
        } catch (const std::exception& e) {
            if (csv.is_open()) csv.flush();
            throw EpochError(epoch, e.what());
        }
        if (csv.is_open()) csv << to_csv_row(rec) << '\n' << std::flush;
        result.records.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    result.generator = gen.params;
    result.critic = critic.params();
    return result;
}

} // namespace w1fe::flow
