#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mcnet {

using PointId = std::int64_t;

// Per-query K nearest neighbors, rows ordered by ascending distance.
struct NeighborIndex {
    std::size_t rows = 0;
    std::size_t k = 0;
    std::vector<PointId> indices;   // rows * k
    std::vector<double> distances;  // rows * k, Euclidean

    PointId at(std::size_t row, std::size_t j) const { return indices[row * k + j]; }
    double distance(std::size_t row, std::size_t j) const { return distances[row * k + j]; }
    std::span<const PointId> row(std::size_t r) const { return {indices.data() + r * k, k}; }

    // Rows of the selected queries, in the given order.
    NeighborIndex select_rows(std::span<const PointId> rows_to_keep) const;
};

}  // namespace mcnet
