#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace ddnn {

struct TensorNode;

/**
 * Dense N-dimensional float tensor with reverse-mode gradient tracking.
 *
 * A Tensor is a cheap handle to a shared node; ops build a graph of nodes and
 * backward() walks it in reverse topological order. Data is row-major float32.
 * Gradient tracking only happens when grad mode is enabled (see NoGradGuard)
 * and some input requires gradients; inference paths build no graph at all.
 */
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<float> data,
                       bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }

    const std::vector<int>& shape() const;
    int dim(int i) const;
    int64_t numel() const;

    std::vector<float>& data();
    const std::vector<float>& data() const;

    /// Gradient buffer; allocated (zero-filled) on first access.
    std::vector<float>& grad();
    const std::vector<float>& grad() const;
    bool has_grad() const;

    bool requires_grad() const;
    void zero_grad();

    /// Value of a single-element tensor.
    float item() const;

    /// Reverse-mode backprop from this scalar tensor (seed gradient = 1).
    void backward();

    TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

    static int64_t shape_numel(const std::vector<int>& shape);

private:
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<TensorNode> node_;

    friend Tensor make_op_output(std::vector<int> shape,
                                 std::vector<const Tensor*> parents);
};

struct TensorNode {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad; // empty until touched
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

/// Scoped switch that disables graph construction (forward-only evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

/// Creates an op output node. Gradient tracking is wired up only when grad
/// mode is on and at least one parent requires gradients; callers must set
/// node()->backward_fn when the returned tensor requires_grad.
Tensor make_op_output(std::vector<int> shape, std::vector<const Tensor*> parents);

} // namespace ddnn
