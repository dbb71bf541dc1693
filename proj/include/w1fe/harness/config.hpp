#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "w1fe/error.hpp"
#include "w1fe/flow/config.hpp"
#include "w1fe/flow/experiment.hpp"
#include "w1fe/flow/particle.hpp"
#include "w1fe/harness/samplers.hpp"

namespace w1fe::harness {

enum class DataKind : std::uint8_t { ring, normal1d };

struct DataSettings {
    DataKind kind = DataKind::ring;
    double mean = 0.0; // normal1d
    double std = 1.0;
};

struct ParticleSettings {
    flow::PotentialSource source = flow::PotentialSource::oracle1d;
    std::size_t n = 50;
    std::size_t steps = 20;
    double init_mean = 0.0;
    double init_std = 1.0;
};

/// Everything one invocation can configure.
struct Settings {
    flow::FlowConfig flow;
    RingSpec ring;
    DataSettings data;
    ParticleSettings particle;
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double to_double(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    std::uint64_t out = 0;
    try {
        if (!v.empty() && v[0] != '-') out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true|false, got '" + v + "'");
}

struct Field {
    std::string key;
    std::function<std::string(const Settings&)> get;
    std::function<void(Settings&, const std::string&)> set;
};

template <class T>
Field number(std::string key, T Settings::*section, double T::*member)
{
    return {key, [=](const Settings& s) { return fmt(s.*section.*member); },
            [=](Settings& s, const std::string& v) { s.*section.*member = to_double(key, v); }};
}

template <class T, class U>
Field integer(std::string key, T Settings::*section, U T::*member)
{
    return {key, [=](const Settings& s) { return std::to_string(s.*section.*member); },
            [=](Settings& s, const std::string& v) { s.*section.*member = static_cast<U>(to_uint(key, v)); }};
}

template <class T>
Field boolean(std::string key, T Settings::*section, bool T::*member)
{
    return {key, [=](const Settings& s) { return std::string(s.*section.*member ? "true" : "false"); },
            [=](Settings& s, const std::string& v) { s.*section.*member = to_bool(key, v); }};
}

inline void add_network(std::vector<Field>& f, const std::string& prefix, flow::NetworkShape flow::FlowConfig::*net)
{
    f.push_back({prefix + ".hidden_width", [=](const Settings& s) { return std::to_string((s.flow.*net).hidden_width); },
                 [=](Settings& s, const std::string& v) { (s.flow.*net).hidden_width = to_uint(prefix + ".hidden_width", v); }});
    f.push_back({prefix + ".hidden_layers", [=](const Settings& s) { return std::to_string((s.flow.*net).hidden_layers); },
                 [=](Settings& s, const std::string& v) { (s.flow.*net).hidden_layers = to_uint(prefix + ".hidden_layers", v); }});
    f.push_back({prefix + ".activation", [=](const Settings& s) { return nn::to_string((s.flow.*net).activation); },
                 [=](Settings& s, const std::string& v) { (s.flow.*net).activation = nn::parse_activation(v); }});
    f.push_back({prefix + ".leaky_alpha", [=](const Settings& s) { return fmt((s.flow.*net).leaky_alpha); },
                 [=](Settings& s, const std::string& v) { (s.flow.*net).leaky_alpha = to_double(prefix + ".leaky_alpha", v); }});
}

inline std::vector<Field> build_fields()
{
    using S = Settings;
    using F = flow::FlowConfig;
    std::vector<Field> f;
    f.push_back({"flow.mode", [](const S& s) { return flow::to_string(s.flow.mode); },
                 [](S& s, const std::string& v) { s.flow.mode = flow::parse_mode(v); }});
    f.push_back(number("flow.epsilon", &S::flow, &F::epsilon));
    f.push_back(integer("flow.K", &S::flow, &F::K));
    f.push_back(number("flow.gamma_g", &S::flow, &F::gamma_g));
    f.push_back(integer("flow.batch", &S::flow, &F::batch));
    f.push_back(integer("flow.latent", &S::flow, &F::latent));
    f.push_back(integer("flow.epochs", &S::flow, &F::epochs));
    f.push_back(integer("flow.seed", &S::flow, &F::seed));
    f.push_back(boolean("flow.deterministic", &S::flow, &F::deterministic));
    f.push_back(integer("flow.checkpoint_every", &S::flow, &F::checkpoint_every));
    f.push_back(integer("flow.metric_batch", &S::flow, &F::metric_batch));
    f.push_back({"flow.optimizer", [](const S& s) { return nn::to_string(s.flow.optimizer); },
                 [](S& s, const std::string& v) { s.flow.optimizer = nn::parse_optimizer(v); }});
    add_network(f, "generator", &F::generator);
    add_network(f, "critic_net", &F::critic_net);

    f.push_back({"critic.variant", [](const S& s) { return potential::to_string(s.flow.critic.variant); },
                 [](S& s, const std::string& v) { s.flow.critic.variant = potential::parse_variant(v); }});
    f.push_back({"critic.lambda", [](const S& s) { return fmt(s.flow.critic.lambda); },
                 [](S& s, const std::string& v) { s.flow.critic.lambda = to_double("critic.lambda", v); }});
    f.push_back({"critic.clip", [](const S& s) { return fmt(s.flow.critic.clip); },
                 [](S& s, const std::string& v) { s.flow.critic.clip = to_double("critic.clip", v); }});
    f.push_back({"critic.n_critic", [](const S& s) { return std::to_string(s.flow.critic.n_critic); },
                 [](S& s, const std::string& v) { s.flow.critic.n_critic = to_uint("critic.n_critic", v); }});
    f.push_back({"critic.lr", [](const S& s) { return fmt(s.flow.critic.lr); },
                 [](S& s, const std::string& v) { s.flow.critic.lr = to_double("critic.lr", v); }});
    f.push_back({"critic.fresh_data_per_step",
                 [](const S& s) { return std::string(s.flow.critic.fresh_data_per_step ? "true" : "false"); },
                 [](S& s, const std::string& v) { s.flow.critic.fresh_data_per_step = to_bool("critic.fresh_data_per_step", v); }});

    f.push_back({"data.kind", [](const S& s) { return std::string(s.data.kind == DataKind::ring ? "ring" : "normal1d"); },
                 [](S& s, const std::string& v) {
                     if (v == "ring") s.data.kind = DataKind::ring;
                     else if (v == "normal1d") s.data.kind = DataKind::normal1d;
                     else throw ConfigError("data.kind: expected ring|normal1d, got '" + v + "'");
                 }});
    f.push_back(number("data.mean", &S::data, &DataSettings::mean));
    f.push_back(number("data.std", &S::data, &DataSettings::std));
    f.push_back(integer("ring.n_modes", &S::ring, &RingSpec::n_modes));
    f.push_back(number("ring.radius", &S::ring, &RingSpec::radius));
    f.push_back(number("ring.mode_std", &S::ring, &RingSpec::mode_std));
    f.push_back(integer("ring.seed", &S::ring, &RingSpec::seed));

    f.push_back({"particle.source",
                 [](const S& s) {
                     return std::string(s.particle.source == flow::PotentialSource::oracle1d ? "oracle1d" : "trained_critic");
                 },
                 [](S& s, const std::string& v) { s.particle.source = flow::parse_source(v); }});
    f.push_back(integer("particle.n", &S::particle, &ParticleSettings::n));
    f.push_back(integer("particle.steps", &S::particle, &ParticleSettings::steps));
    f.push_back(number("particle.init_mean", &S::particle, &ParticleSettings::init_mean));
    f.push_back(number("particle.init_std", &S::particle, &ParticleSettings::init_std));
    return f;
}

} // namespace detail

/// Every configurable key in echo order.
inline const std::vector<detail::Field>& config_fields()
{
    static const std::vector<detail::Field> fields = detail::build_fields();
    return fields;
}

inline std::vector<std::string> config_keys()
{
    std::vector<std::string> keys;
    for (const auto& f : config_fields()) keys.push_back(f.key);
    return keys;
}

inline void set_value(Settings& s, const std::string& key, const std::string& value)
{
    for (const auto& f : config_fields())
        if (f.key == key) {
            f.set(s, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

inline std::string get_value(const Settings& s, const std::string& key)
{
    for (const auto& f : config_fields())
        if (f.key == key) return f.get(s);
    throw ConfigError("unknown config key '" + key + "'");
}

/// Parses `section.key = value` lines; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text)
{
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

inline void apply_config_text(Settings& s, const std::string& text)
{
    for (const auto& [k, v] : parse_config_text(text)) set_value(s, k, v);
}

inline void apply_config_file(Settings& s, const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_text(s, buf.str());
}

/// The effective configuration, one `key = value` line per field.
inline std::string echo_config(const Settings& s)
{
    std::string out;
    for (const auto& f : config_fields()) out += f.key + " = " + f.get(s) + "\n";
    return out;
}

inline flow::Dataset make_dataset(const Settings& s)
{
    if (s.data.kind == DataKind::ring) return flow::ring_dataset(s.ring);
    if (!(s.data.std >= 0.0)) throw ConfigError("data.std must be >= 0");
    return {normal_1d_sampler(s.data.mean, s.data.std), 1};
}

} // namespace w1fe::harness
