#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "w1fe/error.hpp"
#include "w1fe/nn/mlp.hpp"
#include "w1fe/nn/optim.hpp"

namespace w1fe::nn {

// Layout (all integers and floats little-endian):
//   "W1FE" | u16 version | u32 n_widths | u64 widths[n_widths]
//   | u8 activation | f64 leaky_alpha | u64 n_params
//   | f64 params[n] | f64 adam_m[n] | f64 adam_v[n] | u64 adam_t
inline constexpr std::array<char, 4> checkpoint_magic{'W', '1', 'F', 'E'};
inline constexpr std::uint16_t checkpoint_version = 1;

struct Checkpoint {
    Params params;
    AdamState adam;
};

namespace detail {

class ByteWriter {
public:
    template <class T>
    void put(T value)
    {
        std::uint64_t bits;
        if constexpr (std::is_same_v<T, double>) bits = std::bit_cast<std::uint64_t>(value);
        else bits = static_cast<std::uint64_t>(value);
        for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
    }
    void put_raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
    const std::vector<char>& bytes() const noexcept { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    template <class T>
    T get()
    {
        need(sizeof(T));
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        if constexpr (std::is_same_v<T, double>) return std::bit_cast<double>(bits);
        else return static_cast<T>(bits);
    }

    void need(std::size_t n) const
    {
        if (pos_ + n > bytes_.size())
            throw CheckpointError(CheckpointError::Kind::truncated,
                                  "checkpoint: truncated file (need " + std::to_string(pos_ + n) + " bytes, have " +
                                      std::to_string(bytes_.size()) + ")");
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::vector<char> encode_checkpoint(const Params& params, const AdamState& adam)
{
    if (adam.m.size() != params.size() || adam.v.size() != params.size())
        throw CheckpointError(CheckpointError::Kind::layout_mismatch, "checkpoint: adam state does not match params");
    detail::ByteWriter w;
    w.put_raw(checkpoint_magic.data(), checkpoint_magic.size());
    w.put<std::uint16_t>(checkpoint_version);
    const MlpSpec& spec = params.spec();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.widths.size()));
    for (std::size_t width : spec.widths) w.put<std::uint64_t>(width);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.hidden));
    w.put<double>(spec.leaky_alpha);
    w.put<std::uint64_t>(params.size());
    for (double v : params.values()) w.put<double>(v);
    for (double v : adam.m) w.put<double>(v);
    for (double v : adam.v) w.put<double>(v);
    w.put<std::uint64_t>(adam.t);
    return w.bytes();
}

/// Decodes a checkpoint; when `expected` is given the stored architecture must
/// match it exactly.
inline Checkpoint decode_checkpoint(std::vector<char> bytes, const std::optional<MlpSpec>& expected = std::nullopt)
{
    using Kind = CheckpointError::Kind;
    detail::ByteReader r(std::move(bytes));
    std::array<char, 4> magic{};
    for (char& c : magic) c = static_cast<char>(r.get<std::uint8_t>());
    if (magic != checkpoint_magic) throw CheckpointError(Kind::bad_magic, "checkpoint: bad magic bytes");
    const auto version = r.get<std::uint16_t>();
    if (version != checkpoint_version)
        throw CheckpointError(Kind::version_mismatch, "checkpoint: format version " + std::to_string(version) +
                                                          ", expected " + std::to_string(checkpoint_version));
    MlpSpec spec;
    const auto n_widths = r.get<std::uint32_t>();
    r.need(8ull * n_widths);
    for (std::uint32_t i = 0; i < n_widths; ++i) spec.widths.push_back(r.get<std::uint64_t>());
    const auto tag = r.get<std::uint8_t>();
    if (tag > 1) throw CheckpointError(Kind::layout_mismatch, "checkpoint: unknown activation tag");
    spec.hidden = static_cast<Activation>(tag);
    spec.leaky_alpha = r.get<double>();
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(Kind::layout_mismatch, std::string("checkpoint: ") + e.what());
    }
    if (expected && !(*expected == spec))
        throw CheckpointError(Kind::layout_mismatch, "checkpoint: stored architecture differs from expected spec");
    const auto n = r.get<std::uint64_t>();
    if (n != parameter_count(spec))
        throw CheckpointError(Kind::layout_mismatch, "checkpoint: parameter count " + std::to_string(n) +
                                                         " does not match layout (" +
                                                         std::to_string(parameter_count(spec)) + ")");
    r.need(8 * (3 * n + 1));
    std::vector<double> values(n);
    for (double& v : values) v = r.get<double>();
    AdamState adam(n, 0.0);
    for (double& v : adam.m) v = r.get<double>();
    for (double& v : adam.v) v = r.get<double>();
    adam.t = r.get<std::uint64_t>();
    if (r.remaining() != 0) throw CheckpointError(Kind::layout_mismatch, "checkpoint: trailing bytes");
    return Checkpoint{Params(std::move(spec), std::move(values)), std::move(adam)};
}

inline void checkpoint_save(const Params& params, const AdamState& adam, const std::filesystem::path& path)
{
    const auto bytes = encode_checkpoint(params, adam);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot open " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: write failed for " + path.string());
}

/// Restores parameters and the Adam moments/step. Learning rate and betas are
/// run configuration and are not stored; the caller reapplies them.
inline Checkpoint checkpoint_load(const std::filesystem::path& path, const std::optional<MlpSpec>& expected = std::nullopt)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(std::move(bytes), expected);
}

} // namespace w1fe::nn
