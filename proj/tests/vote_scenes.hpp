#pragma once

#include <vector>

#include "mcnet/ops.hpp"
#include "mcnet/spatial_index.hpp"
#include "mcnet/voting.hpp"

namespace mcnet::testing {

struct VoteScene {
    VoteInputs inputs;
    std::vector<int> truth;
    std::vector<std::size_t> flipped;
};

// Neighborhood head stand-in: twice the neighbor mean of the point logits.
inline NDArray pooled_logits(const NDArray& point_logits, const NeighborIndex& nb) {
    return ops::scale(ops::mean_over_neighbors(ops::gather_neighbors(point_logits, nb)), 2.0);
}

// 100 points on a line in four 25-point class runs. Every point's head puts
// a margin of 2 on its class; ten points well inside the runs get the margin
// on a wrong class instead.
inline VoteScene flipped_logits_scene() {
    constexpr std::size_t n = 100, c = 4;
    VoteScene s;
    std::vector<double> pos(3 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) pos[3 * i] = static_cast<double>(i);
    s.truth.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.truth[i] = static_cast<int>(i / 25);
    s.flipped = {7, 12, 18, 33, 41, 57, 62, 70, 83, 91};
    std::vector<double> logits(n * c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        int label = s.truth[i];
        for (auto f : s.flipped) {
            if (f == i) label = (label + 1 + static_cast<int>(i % 3)) % static_cast<int>(c);
        }
        logits[i * c + static_cast<std::size_t>(label)] = 2.0;
    }
    s.inputs.neighbors = self_neighbors(pos, 9);
    s.inputs.logits_point = NDArray({n, c}, logits);
    s.inputs.logits_nei = pooled_logits(s.inputs.logits_point, s.inputs.neighbors);
    return s;
}

// Ten far-apart clusters of nine points; all points of a cluster carry the
// same logits, so every neighborhood is unanimous. Clusters 2 and 7 are
// predicted wrong.
inline VoteScene unanimous_control_scene() {
    constexpr std::size_t clusters = 10, per = 9, c = 3;
    constexpr std::size_t n = clusters * per;
    VoteScene s;
    std::vector<double> pos;
    std::vector<double> logits(n * c, 0.0);
    s.truth.resize(n);
    for (std::size_t q = 0; q < clusters; ++q) {
        const int label = static_cast<int>(q % c);
        const int predicted = (q == 2 || q == 7) ? (label + 1) % static_cast<int>(c) : label;
        for (std::size_t m = 0; m < per; ++m) {
            const std::size_t i = q * per + m;
            pos.insert(pos.end(), {100.0 * static_cast<double>(q) + static_cast<double>(m % 3),
                                   static_cast<double>(m / 3), 0.0});
            s.truth[i] = label;
            logits[i * c + static_cast<std::size_t>(predicted)] = 1.5;
            logits[i * c + (static_cast<std::size_t>(predicted) + 1) % c] = 0.25;
        }
    }
    s.inputs.neighbors = self_neighbors(pos, per);
    s.inputs.logits_point = NDArray({n, c}, logits);
    s.inputs.logits_nei = pooled_logits(s.inputs.logits_point, s.inputs.neighbors);
    return s;
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += pred[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace mcnet::testing
