#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mcnet/tensor.hpp"

namespace mcnet {

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::size_t entries = 0;
    // Entries whose +h / -h evaluations straddled a kink (LeakyReLU sign or
    // max-pool argmax change) and were re-measured with a smaller step.
    std::size_t refined = 0;
    std::string worst;  // "leaf[flat]" of the largest error
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// entries whose true gradient is ~0 from being judged on rounding noise.
double gradient_relative_error(double analytic, double numeric, double floor);

// Compares tape gradients of `loss_fn` with respect to `leaves` against central
// finite differences with the given step. `loss_fn` must rebuild the graph
// from the current leaf values on every call. A central difference across a
// non-smooth point is not a derivative, so when the two evaluations take
// different branches the step shrinks by 10x (down to 1e-9) until they agree;
// if they never do, the kink is at the entry itself and a one-sided
// difference on the side matching the unperturbed branches is used.
// When `max_entries_per_leaf` is nonzero only an evenly strided subset of
// each leaf is perturbed.
GradcheckResult check_gradients(const std::function<NDArray()>& loss_fn,
                                const std::vector<NDArray>& leaves, double step = 1e-5,
                                double floor = 1e-4, std::size_t max_entries_per_leaf = 0);

}  // namespace mcnet
