#include "vr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace vr {

int64_t Tensor::shape_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape, bool requires_grad) {
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->data.assign(static_cast<size_t>(shape_size(node_->shape)), 0.0);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    int64_t want = shape_size(shape);
    if (static_cast<int64_t>(values.size()) != want) {
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not fill shape " + shape_str(shape));
    }
    Tensor t(std::move(shape), requires_grad);
    t.node_->data = std::move(values);
    return t;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    for (double& v : t.node_->data) v = rng.normal() * stddev;
    return t;
}

Tensor Tensor::scalar(double value) {
    return from({1}, {value});
}

Tensor Tensor::wrap(std::shared_ptr<TensorNode> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

int Tensor::rows() const {
    if (rank() == 1) return 1;
    if (rank() == 2) return node_->shape[0];
    throw ShapeError("rows() on rank-" + std::to_string(rank()) + " tensor");
}

int Tensor::cols() const {
    if (rank() == 1) return node_->shape[0];
    if (rank() == 2) return node_->shape[1];
    throw ShapeError("cols() on rank-" + std::to_string(rank()) + " tensor");
}

double Tensor::item() const {
    if (size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->data[0];
}

std::vector<double>& Tensor::grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
    return node_->grad;
}

std::vector<double> Tensor::grad_values() const {
    if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
    return node_->grad;
}

void accumulate_grad(TensorNode& node, const std::vector<double>& src) {
    if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0);
    for (size_t i = 0; i < src.size(); ++i) node.grad[i] += src[i];
}

void Tensor::backward() const {
    if (!node_) throw ValueError("backward() on empty tensor");
    if (size() != 1) {
        throw ShapeError("backward() requires a scalar root, got shape " + shape_str(shape()));
    }

    // Iterative post-order DFS; recursion would overflow on long decode chains.
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
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }

    node_->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->vjp && !n->grad.empty()) n->vjp(*n);
    }
}

}  // namespace vr
