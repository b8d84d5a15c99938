#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ddnn/tensor.hpp"

namespace ddnn {

struct AdamParams {
    float alpha = 0.001f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
};

/// Bias-corrected Adam state for one flat parameter array.
struct AdamState {
    AdamParams hp;
    int64_t step_count = 0;
    std::vector<float> first_moment;
    std::vector<float> second_moment;

    static AdamState make(size_t n, AdamParams hp = {});
};

/// One Adam update of `params` in place. Moments and step counter advance.
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state);

/// Optimizer over a set of parameter tensors (reads .grad(), writes .data()).
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamParams hp = {}) : hp_(hp) {}

    void register_param(const Tensor& t);

    /// Applies one update to every registered tensor from its gradient.
    void step();

    void zero_grad();

private:
    AdamParams hp_;
    std::vector<Tensor> params_;
    std::vector<AdamState> states_;
};

} // namespace ddnn
