#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "w1fe/autodiff/tensor.hpp"

namespace w1fe {

using Rng = std::mt19937_64;

/// Draws an n x d batch, consuming randomness from the supplied engine.
using BatchSampler = std::function<Tensor(std::size_t n, Rng& rng)>;

} // namespace w1fe
