#include "ddnn/binary.hpp"

#include <algorithm>
#include <cmath>

#include "ddnn/errors.hpp"

namespace ddnn {

BinaryWeights BinaryWeights::init(std::vector<int> shape, int fan_in, Rng& rng) {
    BinaryWeights w;
    const int64_t n = Tensor::shape_numel(shape);
    const float s = std::sqrt(1.0f / static_cast<float>(fan_in));
    std::vector<float> latent(static_cast<size_t>(n));
    for (auto& v : latent) v = rng.uniform(-s, s);
    w.shape = std::move(shape);
    w.latent = Tensor::from(w.shape, std::move(latent), /*requires_grad=*/true);
    w.refresh_bits();
    return w;
}

BinaryWeights BinaryWeights::from_bits(std::vector<int> shape,
                                       const std::vector<uint8_t>& bits) {
    BinaryWeights w;
    const int64_t n = Tensor::shape_numel(shape);
    if (bits.size() != static_cast<size_t>((n + 7) / 8))
        throw ValidationError("packed binary weight section has wrong length");
    w.shape = std::move(shape);
    w.latent = Tensor::from(w.shape, unpack(bits, n), /*requires_grad=*/true);
    w.bits = bits;
    return w;
}

int64_t BinaryWeights::numel() const { return Tensor::shape_numel(shape); }

size_t BinaryWeights::packed_bytes() const {
    return static_cast<size_t>((numel() + 7) / 8);
}

void BinaryWeights::refresh_bits() {
    bits = pack(latent.data());
}

void BinaryWeights::clip_latent() {
    for (auto& v : latent.data()) v = std::clamp(v, -1.0f, 1.0f);
}

std::vector<uint8_t> BinaryWeights::pack(const std::vector<float>& signs) {
    std::vector<uint8_t> out((signs.size() + 7) / 8, 0u);
    for (size_t i = 0; i < signs.size(); ++i)
        if (signs[i] >= 0.0f) out[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
    return out;
}

std::vector<float> BinaryWeights::unpack(const std::vector<uint8_t>& bits, int64_t count) {
    if (bits.size() < static_cast<size_t>((count + 7) / 8))
        throw InvariantError("unpack: bit buffer shorter than element count");
    std::vector<float> out(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i)
        out[static_cast<size_t>(i)] =
            (bits[static_cast<size_t>(i) / 8] >> (i % 8)) & 1u ? 1.0f : -1.0f;
    return out;
}

} // namespace ddnn
