#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "w1fe/error.hpp"
#include "w1fe/flow/experiment.hpp"
#include "w1fe/flow/generator.hpp"
#include "w1fe/flow/particle.hpp"
#include "w1fe/harness/config.hpp"
#include "w1fe/ot/w1.hpp"

namespace w1fe::harness {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_runtime = 2 };

namespace detail {

/// Flags shared by the run subcommands. Values stay strings until they are
/// applied through the config table, so flags and file share one parser.
struct RunFlags {
    std::string config_file;
    std::vector<std::string> sets;
    std::string out = "run";
    std::map<std::string, std::string> values; // config key -> flag text
    bool deterministic = false;

    void attach(CLI::App& app, bool with_k = true)
    {
        app.add_option("--config", config_file, "flat `section.key = value` config file")->check(CLI::ExistingFile);
        app.add_option("--set", sets, "override any config key: --set critic.lr=1e-3");
        app.add_option("--out", out, "output directory");
        app.add_flag("--deterministic", deterministic, "single-threaded, seed-determined run");
        bind(app, "--mode", "flow.mode", "w1fe|wgan|wgan_persistent|particle");
        if (with_k) bind(app, "--K", "flow.K", "persistency level");
        bind(app, "--epsilon", "flow.epsilon", "Euler time step");
        bind(app, "--gamma-g", "flow.gamma_g", "generator learning rate");
        bind(app, "--batch", "flow.batch", "minibatch size m");
        bind(app, "--epochs", "flow.epochs", "training epochs");
        bind(app, "--critic-variant", "critic.variant", "clip|gp|lp");
        bind(app, "--lambda", "critic.lambda", "penalty weight");
        bind(app, "--n-critic", "critic.n_critic", "critic steps per epoch");
        bind(app, "--seed", "flow.seed", "run seed");
        bind(app, "--checkpoint-every", "flow.checkpoint_every", "checkpoint interval in epochs (0 = off)");
        bind(app, "--optimizer", "flow.optimizer", "sgd|adam (generator)");
        bind(app, "--data", "data.kind", "ring|normal1d");
    }

    void bind(CLI::App& app, const std::string& flag, const std::string& key, const std::string& help)
    {
        app.add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help);
    }

    /// File first, then --set, then named flags.
    Settings resolve() const
    {
        Settings s;
        if (!config_file.empty()) apply_config_file(s, config_file);
        for (const std::string& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            set_value(s, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
        }
        for (const auto& [k, v] : values) set_value(s, k, v);
        if (deterministic) s.flow.deterministic = true;
        return s;
    }
};

inline void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

inline void prepare_run(const Settings& s)
{
    // Everything is single-threaded and seeded already; this pins Eigen too.
    if (s.flow.deterministic) Eigen::setNbThreads(1);
}

inline flow::ExperimentResult train_into(Settings s, const std::filesystem::path& out, std::ostream& log,
                                         std::size_t log_every)
{
    s.flow.validate();
    std::filesystem::create_directories(out);
    write_text(out / "config.echo", echo_config(s));
    prepare_run(s);
    return flow::run_experiment(s.flow, make_dataset(s), out, [&](const flow::EpochRecord& r) {
        if (log_every > 0 && (r.epoch % log_every == 0 || r.epoch == s.flow.epochs))
            log << "epoch " << r.epoch << "  w1 " << r.w1_minibatch << "  critic " << r.critic_objective << "  "
                << r.wallclock_s << "s\n";
    });
}

/// "x,y;x,y;..." -> points; optional "w;w;..." weights, normalised.
inline ot::DiscreteMeasure parse_measure(const std::string& name, const std::string& points, const std::string& weights)
{
    std::vector<double> coords;
    std::size_t dim = 0, count = 0;
    std::stringstream pts(points);
    for (std::string p; std::getline(pts, p, ';');) {
        if (trim(p).empty()) continue;
        std::stringstream cs(p);
        std::size_t d = 0;
        for (std::string c; std::getline(cs, c, ',');) coords.push_back(to_double(name, trim(c))), ++d;
        if (dim == 0) dim = d;
        if (d != dim) throw ConfigError(name + ": point " + std::to_string(count) + " has " + std::to_string(d) +
                                        " coordinates, expected " + std::to_string(dim));
        ++count;
    }
    if (count == 0) throw ConfigError(name + ": no points");
    std::vector<double> w;
    if (weights.empty()) {
        w.assign(count, 1.0 / static_cast<double>(count));
    } else {
        std::stringstream ws(weights);
        for (std::string v; std::getline(ws, v, ';');) w.push_back(to_double(name + " weights", trim(v)));
        if (w.size() != count)
            throw ConfigError(name + ": " + std::to_string(w.size()) + " weights for " + std::to_string(count) + " points");
        double total = 0.0;
        for (double v : w) {
            if (!(v >= 0.0)) throw ConfigError(name + ": weights must be nonnegative");
            total += v;
        }
        if (!(total > 0.0)) throw ConfigError(name + ": weights sum to zero");
        for (double& v : w) v /= total;
    }
    return ot::DiscreteMeasure(dim, std::move(coords), std::move(w));
}

inline std::vector<std::size_t> parse_k_list(const std::string& text)
{
    std::vector<std::size_t> ks;
    std::stringstream ss(text);
    for (std::string t; std::getline(ss, t, ',');) {
        const std::uint64_t k = to_uint("--K", trim(t));
        if (k < 1) throw ConfigError("--K: persistency must be >= 1");
        ks.push_back(k);
    }
    if (ks.empty()) throw ConfigError("--K: empty list");
    return ks;
}

/// Echoed configs of two sweep arms must differ in flow.K only.
inline void check_arms_differ_only_in_k(const std::string& a, const std::string& b)
{
    std::istringstream ia(a), ib(b);
    std::string la, lb;
    while (std::getline(ia, la) && std::getline(ib, lb))
        if (la != lb && la.rfind("flow.K =", 0) != 0) throw Error("sweep arms differ beyond K: '" + la + "' vs '" + lb + "'");
}

} // namespace detail

/// Entry point of the w1fe tool. Returns 0 on success, 1 on usage or config
/// errors, 2 on runtime failures.
inline int cli_run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"W1-FE: Wasserstein-1 gradient-flow training and optimal-transport oracles", "w1fe"};
    app.require_subcommand(1);

    detail::RunFlags train_flags;
    std::size_t log_every = 100;
    auto* train = app.add_subcommand("train", "run the training loop and write metrics.csv");
    train_flags.attach(*train);
    train->add_option("--log-every", log_every, "progress line interval in epochs (0 = quiet)");

    detail::RunFlags particle_flags;
    auto* particle = app.add_subcommand("particle", "generator-free particle flow");
    particle_flags.attach(*particle, false);
    particle->add_option_function<std::string>(
        "--source", [&](const std::string& v) { particle_flags.values["particle.source"] = v; }, "oracle1d|trained_critic");
    particle->add_option_function<std::string>(
        "--steps", [&](const std::string& v) { particle_flags.values["particle.steps"] = v; }, "Euler steps");
    particle->add_option_function<std::string>(
        "--n", [&](const std::string& v) { particle_flags.values["particle.n"] = v; }, "number of particles");

    auto* oracle = app.add_subcommand("oracle", "exact optimal-transport checks on inline measures");
    oracle->require_subcommand(1);
    std::string mu_s, nu_s, md_s, mu_w, nu_w, md_w;
    double eps = 0.1, lambda = 0.5;
    auto measure_opts = [&](CLI::App* c, bool third) {
        c->add_option("--mu", mu_s, "points 'x,y;x,y;...'")->required();
        c->add_option("--nu", nu_s, "points")->required();
        c->add_option("--mu-weights", mu_w, "weights 'w;w;...' (default uniform)");
        c->add_option("--nu-weights", nu_w, "weights");
        if (third) {
            c->add_option("--mu-d", md_s, "data measure points")->required();
            c->add_option("--mu-d-weights", md_w, "weights");
        }
    };
    auto* o_w1 = oracle->add_subcommand("w1", "exact W1 and dual potentials");
    measure_opts(o_w1, false);
    auto* o_sandwich = oracle->add_subcommand("sandwich", "difference-quotient bracket of J = W1(., mu_d)");
    measure_opts(o_sandwich, true);
    o_sandwich->add_option("--eps", eps, "step in (0, 1)");
    auto* o_convex = oracle->add_subcommand("convexity", "convexity of J along the segment mu -> nu");
    measure_opts(o_convex, true);
    o_convex->add_option("--lambda", lambda, "mixing weight in (0, 1)");

    auto* equivalence = app.add_subcommand("equivalence", "K=1 W1-FE vs WGAN generator step discrepancy");
    std::uint64_t eq_seed = 0;
    flow::EquivalenceSetup eq;
    equivalence->add_option("--seed", eq_seed);
    equivalence->add_option("--epsilon", eq.epsilon);
    equivalence->add_option("--gamma-g", eq.gamma_g);
    equivalence->add_option("--K", eq.K)->check(CLI::PositiveNumber);
    equivalence->add_option("--batch", eq.batch)->check(CLI::PositiveNumber);

    detail::RunFlags sweep_flags;
    std::string k_list = "1,3,5,10";
    unsigned jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "train one arm per K and merge the metrics");
    sweep_flags.attach(*sweep, false);
    sweep->add_option("--K", k_list, "comma-separated persistency grid");
    sweep->add_option("--jobs", jobs, "arms trained concurrently")->check(CLI::PositiveNumber);
    sweep->add_option("--log-every", log_every, "progress line interval in epochs (0 = quiet)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        app.exit(e, out, err);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_usage;
    }

    try {
        if (*train) {
            const Settings s = train_flags.resolve();
            const auto r = detail::train_into(s, train_flags.out, out, log_every);
            out << "wrote " << (std::filesystem::path(train_flags.out) / "metrics.csv").string() << " ("
                << r.records.size() << " epochs)\n";
        } else if (*particle) {
            Settings s = particle_flags.resolve();
            s.flow.validate();
            detail::prepare_run(s);
            const flow::Dataset data = make_dataset(s);
            Rng rng(flow::derive_seed(s.flow.seed, 20));
            const std::size_t n = s.particle.n;
            if (n < 1) throw ConfigError("particle.n must be >= 1");
            const auto target = ot::DiscreteMeasure::uniform(data.sample(n, rng));
            Tensor init(Shape{n, data.dim});
            std::normal_distribution<double> g(s.particle.init_mean, s.particle.init_std);
            for (double& v : init.values()) v = g(rng);
            flow::ParticleOptions opt;
            opt.source = s.particle.source;
            opt.seed = flow::derive_seed(s.flow.seed, 21);
            opt.critic = s.flow.critic;
            if (opt.source == flow::PotentialSource::trained_critic)
                opt.critic_init = nn::init(flow::critic_spec(s.flow, data.dim), flow::derive_seed(s.flow.seed, 2));
            if (opt.source == flow::PotentialSource::oracle1d && data.dim != 1)
                throw ConfigError("particle: oracle1d needs 1D data (use --data normal1d)");
            const flow::FlowTrajectory traj = flow::particle_flow_run(init, target, s.flow.epsilon, s.particle.steps, opt);

            const std::filesystem::path dir = particle_flags.out;
            std::filesystem::create_directories(dir);
            detail::write_text(dir / "config.echo", echo_config(s));
            std::ofstream pc(dir / "particles.csv");
            pc << "step,time,index";
            for (std::size_t d = 0; d < data.dim; ++d) pc << ",x" << d;
            pc << '\n';
            for (std::size_t k = 0; k < traj.size(); ++k)
                for (std::size_t i = 0; i < n; ++i) {
                    pc << k << ',' << flow::format_double(traj.times[k]) << ',' << i;
                    for (double v : traj.snapshots[k].row(i)) pc << ',' << flow::format_double(v);
                    pc << '\n';
                }
            const std::vector<double> w1 = flow::w1_trace(traj, target);
            std::ofstream wc(dir / "w1_trace.csv");
            wc << "step,time,w1\n";
            for (std::size_t k = 0; k < w1.size(); ++k)
                wc << k << ',' << flow::format_double(traj.times[k]) << ',' << flow::format_double(w1[k]) << '\n';
            const flow::EquicontinuityReport eqc = flow::equicontinuity_check(traj);
            out << "w1 " << w1.front() << " -> " << w1.back() << " over " << s.particle.steps << " steps\n"
                << "equicontinuity: worst W1(s,t) - |s-t| - eps = " << eqc.worst_excess << " over " << eqc.pairs
                << " pairs (" << (eqc.holds() ? "holds" : "VIOLATED") << ")\n";
        } else if (*oracle) {
            const auto mu = detail::parse_measure("--mu", mu_s, mu_w);
            const auto nu = detail::parse_measure("--nu", nu_s, nu_w);
            nlohmann::json j;
            if (*o_w1) {
                const ot::W1Result r = ot::w1_exact(mu, nu);
                j["w1"] = r.value;
                j["f"] = r.duals.f;
                j["g"] = r.duals.g;
                j["duality_gap"] = r.value - (mu.integrate(r.duals.f) + nu.integrate(r.duals.g));
            } else {
                const auto md = detail::parse_measure("--mu-d", md_s, md_w);
                if (*o_sandwich) {
                    const ot::SandwichReport r = ot::lfd_sandwich_check(mu, nu, md, eps);
                    j = {{"lower", r.lower}, {"ratio", r.ratio}, {"upper", r.upper}, {"J_mu", r.j_mu},
                         {"J_mu_eps", r.j_eps}, {"holds", r.holds}};
                } else {
                    const ot::ConvexityReport r = ot::convexity_check(mu, nu, md, lambda);
                    j = {{"lhs", r.lhs}, {"rhs", r.rhs}, {"holds", r.holds}};
                }
            }
            out << j.dump(2) << '\n';
        } else if (*equivalence) {
            const flow::EquivalenceReport r = flow::equivalence_check(eq_seed, eq);
            out << "K=" << eq.K << " relative discrepancy " << r.relative << " (max abs " << r.max_abs
                << ", max update " << r.max_update << ")\n";
            if (eq.K == 1 && !(r.relative < 1e-8)) {
                err << "equivalence violated: relative discrepancy " << r.relative << " >= 1e-8\n";
                return exit_runtime;
            }
        } else if (*sweep) {
            const Settings base = sweep_flags.resolve();
            const std::vector<std::size_t> ks = detail::parse_k_list(k_list);
            const std::filesystem::path dir = sweep_flags.out;
            std::vector<Settings> arms;
            for (std::size_t k : ks) {
                Settings s = base;
                s.flow.K = k;
                arms.push_back(s);
            }
            for (const Settings& s : arms) detail::check_arms_differ_only_in_k(echo_config(arms.front()), echo_config(s));

            std::vector<flow::ExperimentResult> results(arms.size());
            std::vector<std::ostringstream> logs(arms.size());
            for (std::size_t start = 0; start < arms.size(); start += jobs) {
                std::vector<std::future<void>> running;
                for (std::size_t a = start; a < std::min(arms.size(), start + jobs); ++a)
                    running.push_back(std::async(std::launch::async, [&, a] {
                        results[a] = detail::train_into(arms[a], dir / ("K_" + std::to_string(ks[a])), logs[a], log_every);
                    }));
                for (std::size_t i = 0; i < running.size(); ++i) {
                    running[i].get();
                    out << "K=" << ks[start + i] << ":\n" << logs[start + i].str();
                }
            }
            std::ofstream merged(dir / "sweep.csv");
            merged << flow::csv_header << '\n';
            for (const auto& r : results)
                for (const auto& rec : r.records) merged << flow::to_csv_row(rec) << '\n';
            out << "wrote " << (dir / "sweep.csv").string() << " (" << arms.size() << " arms)\n";
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    }
    return exit_ok;
}

} // namespace w1fe::harness
