#include "ddnn/rng.hpp"

#include <cmath>

#include "ddnn/errors.hpp"

namespace ddnn {
namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

} // namespace

Rng::Rng(uint64_t seed) {
    uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

float Rng::uniform(float lo, float hi) {
    return lo + (hi - lo) * static_cast<float>(uniform());
}

float Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    // Box-Muller; u1 bounded away from zero so log() stays finite.
    double u1 = uniform();
    if (u1 < 1e-12) u1 = 1e-12;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_normal_ = static_cast<float>(r * std::sin(theta));
    has_cached_normal_ = true;
    return static_cast<float>(r * std::cos(theta));
}

int64_t Rng::index(int64_t n) {
    if (n <= 0) throw InvariantError("Rng::index requires n > 0");
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return static_cast<int64_t>(v % un);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

uint64_t Rng::derive(uint64_t seed, std::string_view tag) {
    // FNV-1a over the tag, mixed into the seed through splitmix64.
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    uint64_t s = seed ^ h;
    return splitmix64(s);
}

} // namespace ddnn
