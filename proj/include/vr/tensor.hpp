#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vr/common.hpp"
#include "vr/rng.hpp"

namespace vr {

// One node of the recorded computation. The graph doubles as the gradient
// tape: parents are only recorded when a gradient has to flow, so nodes
// created under stop_gradient (or from constants) terminate the backward
// traversal by construction.
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Pulls this node's adjoint into the parents' grads.
    std::function<void(TensorNode&)> vjp;
};

// Dense row-major tensor of doubles with reverse-mode autodiff. Copying a
// Tensor copies the handle, not the storage; values are treated as immutable
// once an op has consumed them (parameters are mutated only by the optimizer,
// between graph lifetimes).
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, bool requires_grad = false);

    static Tensor from(std::vector<int> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev,
                        bool requires_grad = false);
    static Tensor scalar(double value);
    // adopt an op-built node; used by the ops layer only
    static Tensor wrap(std::shared_ptr<TensorNode> node);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int64_t size() const { return static_cast<int64_t>(node_->data.size()); }
    // rank-2 accessors (rank-1 tensors count as a single row)
    int rows() const;
    int cols() const;

    std::vector<double>& values() { return node_->data; }
    const std::vector<double>& values() const { return node_->data; }
    double& at(int i) { return node_->data[static_cast<size_t>(i)]; }
    double at(int i) const { return node_->data[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return node_->data[static_cast<size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return node_->data[static_cast<size_t>(i) * cols() + j]; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    // Grad storage, allocated as zeros on first use.
    std::vector<double>& grad();
    // Copy of the gradient; zeros when backward never reached this node.
    std::vector<double> grad_values() const;
    void clear_grad() { node_->grad.clear(); }

    // Reverse-mode sweep from a scalar root. Visits each reachable node once
    // in reverse topological order.
    void backward() const;

    const std::shared_ptr<TensorNode>& node() const { return node_; }

    static int64_t shape_size(const std::vector<int>& shape);
    static std::string shape_str(const std::vector<int>& shape);

  private:
    std::shared_ptr<TensorNode> node_;
};

// Adds src into the node's grad, allocating on demand.
void accumulate_grad(TensorNode& node, const std::vector<double>& src);

}  // namespace vr
