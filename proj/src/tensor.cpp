#include "ddnn/tensor.hpp"

#include <unordered_set>

#include "ddnn/errors.hpp"

namespace ddnn {

namespace {
thread_local bool g_grad_enabled = true;
} // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

int64_t Tensor::shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw InvariantError("tensor extents must be positive");
        n *= e;
    }
    return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    const int64_t count = shape_numel(shape);
    n->shape = std::move(shape);
    n->data.assign(static_cast<size_t>(count), value);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw InvariantError("tensor data length does not match shape product");
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
int Tensor::dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
int64_t Tensor::numel() const { return static_cast<int64_t>(node_->data.size()); }

std::vector<float>& Tensor::data() { return node_->data; }
const std::vector<float>& Tensor::data() const { return node_->data; }

std::vector<float>& Tensor::grad() {
    node_->ensure_grad();
    return node_->grad;
}

const std::vector<float>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0f);
}

float Tensor::item() const {
    if (numel() != 1) throw InvariantError("item() requires a single-element tensor");
    return node_->data[0];
}

void Tensor::backward() {
    if (numel() != 1) throw InvariantError("backward() starts from a scalar tensor");
    if (!node_->requires_grad)
        throw InvariantError("backward() on a tensor that does not require grad");

    // Iterative post-order DFS for a topological ordering.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        if (idx < cur->parents.size()) {
            TensorNode* p = cur->parents[idx].get();
            ++idx;
            if (p->requires_grad && visited.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

Tensor make_op_output(std::vector<int> shape, std::vector<const Tensor*> parents) {
    auto n = std::make_shared<TensorNode>();
    const int64_t count = Tensor::shape_numel(shape);
    n->shape = std::move(shape);
    n->data.assign(static_cast<size_t>(count), 0.0f);
    if (g_grad_enabled) {
        for (const Tensor* p : parents) {
            if (p->defined() && p->requires_grad()) {
                n->requires_grad = true;
                break;
            }
        }
        if (n->requires_grad) {
            for (const Tensor* p : parents)
                if (p->defined()) n->parents.push_back(p->node_ptr());
        }
    }
    return Tensor(std::move(n));
}

} // namespace ddnn
