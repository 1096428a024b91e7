#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mcnet/neighbor_index.hpp"
#include "mcnet/point_cloud.hpp"
#include "mcnet/rng.hpp"

namespace mcnet {

// Lower clamp on class frequencies before inversion.
inline constexpr double kFrequencyFloor = 1e-4;

// Positive per-class weights with mean 1.
struct ClassWeights {
    std::vector<double> weights;

    static ClassWeights uniform(std::size_t num_classes);
    void validate() const;
};

// w_c proportional to 1 / sqrt(max(freq_c, kFrequencyFloor)), rescaled to mean 1.
ClassWeights class_weights_from_frequencies(std::span<const double> frequencies);

struct PatchDraw {
    PointId center_id = 0;
    std::vector<PointId> point_ids;           // ascending
    std::vector<double> probabilities_used;   // unnormalized, aligned with point_ids
};

// Picks a center uniformly, gives point i the weight
//   w[label(i)] * exp(-(|pos_i - pos_center| / sigma)^2)
// and draws `patch_size` distinct points without replacement in proportion to
// it (exponential keys, compared in log space so far points never underflow
// to a zero weight). Unlabeled clouds use weight 1 for every point.
PatchDraw draw_patch(const PointCloud& cloud, const ClassWeights& weights, std::size_t patch_size,
                     double sigma, Rng& rng);

// (patch_size / N)^(1/3) * bounding-box diagonal.
double default_patch_sigma(const PointCloud& cloud, std::size_t patch_size);

// Uniform random subset of ceil(N / ratio) ids, kept in input order.
std::vector<PointId> decimate(std::span<const PointId> point_ids, std::size_t ratio, Rng& rng);

}  // namespace mcnet
