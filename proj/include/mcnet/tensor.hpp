#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mcnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One executed operation (or a leaf). `backward` reads this node's grad and
// accumulates into the grads of parents that require them.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
};

}  // namespace detail

// Shape-tagged row-major array of doubles that records the operations applied
// to it while gradient recording is enabled.
class NDArray {
public:
    NDArray() = default;
    NDArray(Shape shape, std::vector<double> data, bool requires_grad = false);

    static NDArray zeros(Shape shape, bool requires_grad = false);
    static NDArray full(Shape shape, double value, bool requires_grad = false);
    static NDArray scalar(double value, bool requires_grad = false);

    // Result of an operation. Parents and the backward closure are dropped
    // when no parent requires a gradient or recording is disabled.
    static NDArray from_op(Shape shape, std::vector<double> value, const char* op,
                           std::vector<NDArray> parents,
                           std::function<void(detail::Node&)> backward);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }
    const char* op() const { return node_->op; }

    std::span<const double> data() const { return node_->value; }
    // In-place access for parameters, buffers and optimizer updates.
    std::span<double> mutable_data() { return node_->value; }
    // Empty until a backward pass has reached this array.
    std::span<const double> grad() const { return node_->grad; }

    double item() const;
    double operator[](std::size_t flat) const { return node_->value[flat]; }

    // Same storage, no history: a new leaf sharing nothing with the tape.
    NDArray detach() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

// Operations recorded in execution order, restricted to the nodes from which
// a given loss is reachable. Execution order is a topological order.
class Tape {
public:
    static Tape record(const NDArray& loss);

    const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<std::shared_ptr<detail::Node>> nodes_;
};

// Populates grad() of every requires_grad array the loss depends on. Grads
// are reset first, so repeating the call on the same graph is idempotent.
Tape backward(const NDArray& loss);

bool grad_enabled();

namespace detail {

// Fingerprint of the branch decisions (activation signs, argmax slots) taken
// by non-smooth ops while tracing is on. Finite-difference checks compare it
// between the +h and -h evaluations to detect a kink between them.
struct BranchTrace {
    bool active = false;
    std::uint64_t hash = 0;

    void record(std::uint64_t value) {
        hash ^= value + 0x9E3779B97F4A7C15ull + (hash << 6) + (hash >> 2);
    }
};

BranchTrace& branch_trace();

}  // namespace detail

// Disables recording for the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace mcnet
