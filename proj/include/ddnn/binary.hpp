#pragma once

#include <cstdint>
#include <vector>

#include "ddnn/rng.hpp"
#include "ddnn/tensor.hpp"

namespace ddnn {

/**
 * A binary weight matrix: packed sign bits for storage/inference plus a float
 * "latent" shadow that the optimizer updates. Bit 1 maps to +1, bit 0 to -1;
 * the forward pass always works on sign(latent), so bits and latent agree by
 * construction after every refresh.
 */
struct BinaryWeights {
    std::vector<int> shape;
    Tensor latent;              // trainable; sign() of it is the effective weight
    std::vector<uint8_t> bits;  // packed snapshot of sign(latent)

    /// Uniform init in [-s, s], s = sqrt(1/fan_in).
    static BinaryWeights init(std::vector<int> shape, int fan_in, Rng& rng);

    /// Rebuilds an instance from packed bits (latent becomes the +-1 values).
    static BinaryWeights from_bits(std::vector<int> shape,
                                   const std::vector<uint8_t>& bits);

    int64_t numel() const;
    size_t packed_bytes() const; // ceil(numel / 8)

    /// Re-packs bits from the current latent signs.
    void refresh_bits();

    /// Clamps latent values to [-1, 1] (keeps them inside the region where
    /// the straight-through estimator passes gradients).
    void clip_latent();

    static std::vector<uint8_t> pack(const std::vector<float>& signs);
    static std::vector<float> unpack(const std::vector<uint8_t>& bits, int64_t count);
};

} // namespace ddnn
