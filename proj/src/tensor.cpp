#include "mcnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "mcnet/errors.hpp"

namespace mcnet {

namespace {

std::atomic<std::uint64_t> g_sequence{1};
thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

NDArray::NDArray(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != data.size()) {
        throw DimensionError("shape " + shape_string(shape) + " holds " +
                             std::to_string(shape_size(shape)) + " values, got " +
                             std::to_string(data.size()));
    }
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
    node_->seq = g_sequence.fetch_add(1, std::memory_order_relaxed);
}

NDArray NDArray::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = shape_size(shape);
    return NDArray(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

NDArray NDArray::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_size(shape);
    return NDArray(std::move(shape), std::vector<double>(n, value), requires_grad);
}

NDArray NDArray::scalar(double value, bool requires_grad) {
    return NDArray(Shape{}, std::vector<double>{value}, requires_grad);
}

NDArray NDArray::from_op(Shape shape, std::vector<double> value, const char* op,
                         std::vector<NDArray> parents,
                         std::function<void(detail::Node&)> backward) {
    NDArray out(std::move(shape), std::move(value), false);
    out.node_->op = op;
    if (!g_grad_enabled) return out;
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const NDArray& p) { return p.requires_grad(); });
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::move(backward);
    return out;
}

double NDArray::item() const {
    if (size() != 1) {
        throw ContractError("item() on array of shape " + shape_string(shape()));
    }
    return node_->value[0];
}

NDArray NDArray::detach() const {
    return NDArray(node_->shape, node_->value, false);
}

Tape Tape::record(const NDArray& loss) {
    Tape tape;
    if (!loss.defined() || !loss.requires_grad()) return tape;
    std::unordered_set<const detail::Node*> seen;
    std::vector<std::shared_ptr<detail::Node>> stack{loss.node()};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto node = std::move(stack.back());
        stack.pop_back();
        for (const auto& parent : node->parents) {
            if (parent->requires_grad && seen.insert(parent.get()).second) {
                stack.push_back(parent);
            }
        }
        tape.nodes_.push_back(std::move(node));
    }
    std::sort(tape.nodes_.begin(), tape.nodes_.end(),
              [](const auto& a, const auto& b) { return a->seq < b->seq; });
    return tape;
}

Tape backward(const NDArray& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " +
                            (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    }
    Tape tape = Tape::record(loss);
    for (const auto& node : tape.nodes()) node->grad.assign(node->value.size(), 0.0);
    if (tape.size() == 0) return tape;
    loss.node()->grad[0] = 1.0;
    const auto& nodes = tape.nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
    return tape;
}

bool grad_enabled() { return g_grad_enabled; }

detail::BranchTrace& detail::branch_trace() {
    thread_local BranchTrace trace;
    return trace;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace mcnet
