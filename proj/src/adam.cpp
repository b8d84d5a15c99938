#include "ddnn/adam.hpp"

#include <cmath>

#include "ddnn/errors.hpp"

namespace ddnn {

AdamState AdamState::make(size_t n, AdamParams hp) {
    AdamState s;
    s.hp = hp;
    s.first_moment.assign(n, 0.0f);
    s.second_moment.assign(n, 0.0f);
    return s;
}

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw InvariantError("adam_step: parameter/gradient/state sizes disagree");

    state.step_count += 1;
    const double b1 = state.hp.beta1;
    const double b2 = state.hp.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    const double alpha = state.hp.alpha;
    const double eps = state.hp.epsilon;

    for (size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        const double m = b1 * state.first_moment[i] + (1.0 - b1) * g;
        const double v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        state.first_moment[i] = static_cast<float>(m);
        state.second_moment[i] = static_cast<float>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        params[i] = static_cast<float>(params[i] - alpha * mhat / (std::sqrt(vhat) + eps));
    }
}

void AdamOptimizer::register_param(const Tensor& t) {
    params_.push_back(t);
    states_.push_back(AdamState::make(static_cast<size_t>(t.numel()), hp_));
}

void AdamOptimizer::step() {
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        adam_step(std::span<float>(p.data()),
                  std::span<const float>(p.grad()), states_[i]);
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

} // namespace ddnn
