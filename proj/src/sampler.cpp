#include "mcnet/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mcnet/errors.hpp"

namespace mcnet {

ClassWeights ClassWeights::uniform(std::size_t num_classes) {
    return {std::vector<double>(num_classes, 1.0)};
}

void ClassWeights::validate() const {
    if (weights.empty()) throw ContractError("class weights are empty");
    double total = 0.0;
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) throw ContractError("class weight must be positive, got " + std::to_string(w));
        total += w;
    }
    if (std::abs(total / static_cast<double>(weights.size()) - 1.0) > 1e-9) {
        throw ContractError("class weights must have mean 1");
    }
}

ClassWeights class_weights_from_frequencies(std::span<const double> frequencies) {
    if (frequencies.empty()) throw ContractError("class_weights_from_frequencies: no classes");
    double total = 0.0;
    for (double f : frequencies) {
        if (!(f >= 0.0)) throw ContractError("class frequency must be nonnegative, got " + std::to_string(f));
        total += f;
    }
    if (total == 0.0) throw ContractError("class_weights_from_frequencies: all frequencies are zero");
    if (std::abs(total - 1.0) > 1e-6) {
        throw ContractError("class frequencies sum to " + std::to_string(total) + ", expected 1");
    }
    ClassWeights out;
    out.weights.reserve(frequencies.size());
    for (double f : frequencies) out.weights.push_back(1.0 / std::sqrt(std::max(f, kFrequencyFloor)));
    const double mean =
        std::accumulate(out.weights.begin(), out.weights.end(), 0.0) / static_cast<double>(out.weights.size());
    for (double& w : out.weights) w /= mean;
    return out;
}

PatchDraw draw_patch(const PointCloud& cloud, const ClassWeights& weights, std::size_t patch_size,
                     double sigma, Rng& rng) {
    const std::size_t n = cloud.size();
    if (patch_size == 0 || patch_size > n) {
        throw ContractError("draw_patch: patch size " + std::to_string(patch_size) + " not in [1," +
                            std::to_string(n) + "]");
    }
    if (!(sigma > 0.0)) throw ContractError("draw_patch: sigma must be positive");
    if (cloud.labels && weights.weights.size() < cloud.num_classes) {
        throw ContractError("draw_patch: " + std::to_string(weights.weights.size()) + " class weights for " +
                            std::to_string(cloud.num_classes) + " classes");
    }

    PatchDraw draw;
    draw.center_id = static_cast<PointId>(rng.below(n));
    const double* center = cloud.positions.data() + 3 * draw.center_id;

    std::vector<double> log_p(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = cloud.positions.data() + 3 * i;
        const double dx = p[0] - center[0], dy = p[1] - center[1], dz = p[2] - center[2];
        const double ratio2 = (dx * dx + dy * dy + dz * dz) / (sigma * sigma);
        const double w = cloud.labels ? weights.weights[static_cast<std::size_t>((*cloud.labels)[i])] : 1.0;
        log_p[i] = std::log(w) - ratio2;
    }

    // Efraimidis-Spirakis: keep the smallest log(E_i) - log(p_i), E_i ~ Exp(1).
    std::vector<std::pair<double, PointId>> keys(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double e = -std::log(rng.uniform_open());
        keys[i] = {std::log(e) - log_p[i], static_cast<PointId>(i)};
    }
    if (patch_size < n) {
        std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(patch_size), keys.end());
    }
    draw.point_ids.reserve(patch_size);
    for (std::size_t j = 0; j < patch_size; ++j) draw.point_ids.push_back(keys[j].second);
    std::sort(draw.point_ids.begin(), draw.point_ids.end());
    draw.probabilities_used.reserve(patch_size);
    for (PointId id : draw.point_ids) {
        draw.probabilities_used.push_back(
            std::max(std::exp(log_p[static_cast<std::size_t>(id)]), std::numeric_limits<double>::min()));
    }
    return draw;
}

double default_patch_sigma(const PointCloud& cloud, std::size_t patch_size) {
    const std::size_t n = cloud.size();
    if (n == 0) throw ContractError("default_patch_sigma: empty cloud");
    double lo[3], hi[3];
    for (int a = 0; a < 3; ++a) lo[a] = hi[a] = cloud.positions[a];
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], cloud.positions[3 * i + a]);
            hi[a] = std::max(hi[a], cloud.positions[3 * i + a]);
        }
    double diag2 = 0.0;
    for (int a = 0; a < 3; ++a) diag2 += (hi[a] - lo[a]) * (hi[a] - lo[a]);
    const double sigma = std::cbrt(static_cast<double>(patch_size) / static_cast<double>(n)) * std::sqrt(diag2);
    return sigma > 0.0 ? sigma : 1.0;
}

std::vector<PointId> decimate(std::span<const PointId> point_ids, std::size_t ratio, Rng& rng) {
    if (ratio < 1) throw ContractError("decimate: ratio must be at least 1");
    const std::size_t n = point_ids.size();
    const std::size_t keep = (n + ratio - 1) / ratio;
    if (keep == n) return {point_ids.begin(), point_ids.end()};
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(order[i], order[j]);
    }
    order.resize(keep);
    std::sort(order.begin(), order.end());
    std::vector<PointId> out;
    out.reserve(keep);
    for (std::size_t pos : order) out.push_back(point_ids[pos]);
    return out;
}

}  // namespace mcnet
