#include "mcnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mcnet/errors.hpp"

namespace mcnet {

namespace {

constexpr double kSmallestStep = 1e-9;

struct Traced {
    double value;
    std::uint64_t branches;
};

Traced traced_eval(const std::function<NDArray()>& loss_fn) {
    auto& trace = detail::branch_trace();
    trace.active = true;
    trace.hash = 0;
    const double v = loss_fn().item();
    trace.active = false;
    return {v, trace.hash};
}

}  // namespace

double gradient_relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradcheckResult check_gradients(const std::function<NDArray()>& loss_fn,
                                const std::vector<NDArray>& leaves, double step, double floor,
                                std::size_t max_entries_per_leaf) {
    const NDArray loss = loss_fn();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (const auto& leaf : leaves) {
        if (!leaf.requires_grad()) throw ContractError("check_gradients: leaf without requires_grad");
        auto g = leaf.grad();
        analytic.emplace_back(g.begin(), g.end());
        if (analytic.back().empty()) analytic.back().assign(leaf.size(), 0.0);
    }

    GradcheckResult result;
    NoGradGuard no_grad;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        NDArray leaf = leaves[l];
        auto values = leaf.mutable_data();
        std::size_t stride = 1;
        if (max_entries_per_leaf > 0 && values.size() > max_entries_per_leaf) {
            stride = (values.size() + max_entries_per_leaf - 1) / max_entries_per_leaf;
        }
        for (std::size_t i = 0; i < values.size(); i += stride) {
            const double original = values[i];
            auto at = [&](double offset) {
                values[i] = original + offset;
                const Traced t = traced_eval(loss_fn);
                values[i] = original;
                return t;
            };
            double h = step;
            double numeric = 0.0;
            bool straddles = false;
            for (bool first = true;; first = false) {
                const Traced up = at(h);
                const Traced down = at(-h);
                numeric = (up.value - down.value) / (2.0 * h);
                straddles = up.branches != down.branches;
                if (!straddles || h / 10.0 < kSmallestStep) break;
                if (first) ++result.refined;
                h /= 10.0;
            }
            if (straddles) {
                // The kink sits at the entry itself: take the second-order
                // one-sided difference on the side that keeps its branches.
                const Traced here = at(0.0);
                for (double side : {1.0, -1.0}) {
                    const Traced one = at(side * step);
                    const Traced two = at(2.0 * side * step);
                    if (one.branches == here.branches && two.branches == here.branches) {
                        numeric = side * (-3.0 * here.value + 4.0 * one.value - two.value) / (2.0 * step);
                        break;
                    }
                }
            }
            const double err = gradient_relative_error(analytic[l][i], numeric, floor);
            ++result.entries;
            if (err > result.max_rel_error || std::isnan(err)) {
                result.max_rel_error = std::isnan(err) ? INFINITY : err;
                result.worst = "leaf" + std::to_string(l) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return result;
}

}  // namespace mcnet
