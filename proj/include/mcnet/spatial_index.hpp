#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mcnet/neighbor_index.hpp"

// Exact K-nearest-neighbor search over 3-D points stored as flat [N*3]
// arrays. Rows are ordered by (distance, point id); both search paths
// compute squared distances with the same expression so their results are
// identical bit for bit.
namespace mcnet {

NeighborIndex knn_bruteforce(std::span<const double> query_positions,
                             std::span<const double> base_positions, std::size_t k);

NeighborIndex knn_grid(std::span<const double> query_positions,
                       std::span<const double> base_positions, std::size_t k, double cell_size);

// Bounding-box diagonal / cbrt(N); affects only query speed.
double default_cell_size(std::span<const double> positions);

// Neighbors of a point set within itself, with each point moved to the front
// of its own row (only matters when points coincide).
NeighborIndex self_neighbors(std::span<const double> positions, std::size_t k);

// For every point, the position in `sampled_ids` of its nearest sampled point.
std::vector<PointId> subsample_index(std::span<const double> positions,
                                     std::span<const PointId> sampled_ids);

// Accelerated index over a fixed base set; queries are read-only.
class UniformGrid {
public:
    UniformGrid(std::span<const double> base_positions, double cell_size);

    // Appends the k nearest (distance, id) pairs for one query to the output rows.
    void query(const double* point, std::size_t k, PointId* ids_out, double* dist_out) const;

    double cell_size() const { return cell_; }
    std::size_t size() const { return n_; }

private:
    std::span<const double> base_;
    std::size_t n_ = 0;
    double cell_ = 1.0;
    double origin_[3] = {0, 0, 0};
    long dims_[3] = {1, 1, 1};
    std::vector<std::size_t> cell_start_;  // prefix sums, size cells + 1
    std::vector<PointId> cell_points_;
};

}  // namespace mcnet
