#include "mcnet/mcae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mcnet/errors.hpp"
#include "mcnet/ops.hpp"
#include "mcnet/sampler.hpp"
#include "mcnet/spatial_index.hpp"

namespace mcnet {

namespace {

void check_level_geometry(const std::vector<double>& values, const NeighborIndex& neighbors, const char* what) {
    const std::size_t n = values.size() / 3;
    if (values.size() % 3 != 0 || neighbors.rows != n || neighbors.indices.size() != n * neighbors.k) {
        throw ContractError(std::string(what) + ": neighbor index has " + std::to_string(neighbors.rows) +
                            " rows for " + std::to_string(n) + " points");
    }
    for (PointId id : neighbors.indices) {
        if (id < 0 || static_cast<std::size_t>(id) >= n) {
            throw ContractError(std::string(what) + ": neighbor id " + std::to_string(id) + " outside [0," +
                                std::to_string(n) + ")");
        }
    }
}

void check_features(const LevelState& state, std::size_t channels, const char* stage) {
    if (!state.features.defined() || state.features.rank() != 2 || state.features.dim(0) != state.size()) {
        throw DimensionError(std::string(stage) + ": level features do not cover its " +
                             std::to_string(state.size()) + " points");
    }
    if (state.features.dim(1) != channels) {
        throw DimensionError(std::string(stage) + ": expected " + std::to_string(channels) +
                             " input channels, got " + std::to_string(state.features.dim(1)));
    }
}

NDArray constant_rows(const std::vector<double>& values) {
    return NDArray({values.size() / 3, 3}, values);
}

}  // namespace

LevelState make_input_level(std::vector<double> positions, std::vector<double> colors, NDArray features,
                            std::size_t k_neighbors) {
    LevelState level;
    const std::size_t n = positions.size() / 3;
    if (n == 0 || positions.size() % 3 != 0 || colors.size() != positions.size()) {
        throw ContractError("make_input_level: positions and colors must both be [N,3] with N >= 1");
    }
    if (k_neighbors == 0) throw ConfigError("k_neighbors must be at least 1");
    level.point_ids.resize(n);
    std::iota(level.point_ids.begin(), level.point_ids.end(), 0);
    level.neighbors = self_neighbors(positions, std::min(k_neighbors, n));
    level.positions = std::move(positions);
    level.colors = std::move(colors);
    level.features = std::move(features);
    return level;
}

LevelState downsample_level(const LevelState& fine, const NDArray& features, const LevelOptions& options,
                            Rng& rng) {
    std::vector<PointId> local(fine.size());
    std::iota(local.begin(), local.end(), 0);
    const std::vector<PointId> sampled = decimate(local, options.decimation, rng);

    LevelState next;
    next.point_ids.reserve(sampled.size());
    for (PointId s : sampled) {
        const auto i = static_cast<std::size_t>(s);
        next.point_ids.push_back(fine.point_ids[i]);
        next.positions.insert(next.positions.end(), fine.positions.begin() + 3 * i, fine.positions.begin() + 3 * i + 3);
        next.colors.insert(next.colors.end(), fine.colors.begin() + 3 * i, fine.colors.begin() + 3 * i + 3);
    }
    next.features = ops::max_over_neighbors(ops::gather_neighbors(features, fine.neighbors.select_rows(sampled)));
    next.neighbors = self_neighbors(next.positions, std::min(options.k_neighbors, sampled.size()));
    next.fine_to_coarse = subsample_index(fine.positions, sampled);
    return next;
}

MCAEParams MCAEParams::create(std::size_t c_in, std::size_t c_out, std::size_t blocks_per_level, Rng& rng,
                              double leaky_slope) {
    if (c_out < 2 || c_out % 2 != 0) {
        throw ConfigError("MCAE output width must be even, got " + std::to_string(c_out));
    }
    const std::size_t half = c_out / 2;
    MCAEParams p;
    p.pre_cbl = CBLParams::create(c_in, half, rng, leaky_slope);
    p.pos_fc = CBLParams::create(kRelativePositionWidth, half, rng, leaky_slope);
    p.col_fc = CBLParams::create(kRelativeColorWidth, half, rng, leaky_slope);
    p.fuse_cbl = CBLParams::create(3 * half, c_out, rng, leaky_slope);
    for (std::size_t b = 0; b < blocks_per_level; ++b) p.residual.push_back(ResidualParams::create(c_out, rng, leaky_slope));
    // Scores pass through a softmax, not an activation: unit gain.
    p.attn_fc = LinearParams::create(c_out, c_out, rng, 1.0);
    p.post_cbl = CBLParams::create(c_out + 6, c_out, rng, leaky_slope);
    return p;
}

void MCAEParams::collect(const std::string& prefix, ParameterList& out) const {
    pre_cbl.collect(prefix + ".pre_cbl", out);
    pos_fc.collect(prefix + ".pos_fc", out);
    col_fc.collect(prefix + ".col_fc", out);
    fuse_cbl.collect(prefix + ".fuse_cbl", out);
    for (std::size_t b = 0; b < residual.size(); ++b) residual[b].collect(prefix + ".residual" + std::to_string(b), out);
    attn_fc.collect(prefix + ".attn_fc", out);
    post_cbl.collect(prefix + ".post_cbl", out);
}

NDArray relative_position_features(const std::vector<double>& positions, const NeighborIndex& neighbors) {
    check_level_geometry(positions, neighbors, "relative_position_features");
    const std::size_t n = neighbors.rows, k = neighbors.k;
    std::vector<double> out(n * k * kRelativePositionWidth);
    for (std::size_t i = 0; i < n; ++i) {
        const double* centroid = positions.data() + 3 * i;
        for (std::size_t j = 0; j < k; ++j) {
            const double* nb = positions.data() + 3 * static_cast<std::size_t>(neighbors.at(i, j));
            double* row = out.data() + (i * k + j) * kRelativePositionWidth;
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                row[a] = nb[a];
                row[3 + a] = centroid[a] - nb[a];
                d2 += row[3 + a] * row[3 + a];
            }
            row[6] = std::sqrt(d2);
        }
    }
    return NDArray({n, k, kRelativePositionWidth}, std::move(out));
}

NDArray relative_color_features(const std::vector<double>& colors, const NeighborIndex& neighbors) {
    check_level_geometry(colors, neighbors, "relative_color_features");
    const std::size_t n = neighbors.rows, k = neighbors.k;
    std::vector<double> out(n * k * kRelativeColorWidth);
    for (std::size_t i = 0; i < n; ++i) {
        const double* centroid = colors.data() + 3 * i;
        for (std::size_t j = 0; j < k; ++j) {
            const double* nb = colors.data() + 3 * static_cast<std::size_t>(neighbors.at(i, j));
            double* row = out.data() + (i * k + j) * kRelativeColorWidth;
            for (int a = 0; a < 3; ++a) {
                row[a] = nb[a];
                row[3 + a] = centroid[a] - nb[a];
            }
        }
    }
    return NDArray({n, k, kRelativeColorWidth}, std::move(out));
}

NDArray encode_relative_position(const std::vector<double>& positions, const NeighborIndex& neighbors,
                                 CBLParams& pos_fc, bool training) {
    return cbl(relative_position_features(positions, neighbors), pos_fc, training);
}

NDArray encode_relative_color(const std::vector<double>& colors, const NeighborIndex& neighbors,
                              CBLParams& col_fc, bool training) {
    return cbl(relative_color_features(colors, neighbors), col_fc, training);
}

NDArray attention_pool(const NDArray& neighbor_features, const LinearParams& attn_fc) {
    if (neighbor_features.rank() != 3) {
        throw DimensionError("attention_pool: expected [N,K,C], got " + shape_string(neighbor_features.shape()));
    }
    const NDArray scores = ops::softmax(dense(neighbor_features, attn_fc), 1);
    return ops::weighted_sum_over_neighbors(neighbor_features, scores);
}

BlockOutput mcae_block(const LevelState& state, MCAEParams& params, const LevelOptions& options, Rng& rng,
                       bool training) {
    check_features(state, params.in_channels(), "mcae_block");
    check_level_geometry(state.positions, state.neighbors, "mcae_block");
    check_level_geometry(state.colors, state.neighbors, "mcae_block");
    const std::size_t n = state.size(), k = state.neighbors.k;
    const std::size_t c = params.out_channels();

    const NDArray lifted = cbl(state.features, params.pre_cbl, training);
    const NDArray gathered = ops::gather_neighbors(lifted, state.neighbors);
    const NDArray geo = encode_relative_position(state.positions, state.neighbors, params.pos_fc, training);
    const NDArray col = encode_relative_color(state.colors, state.neighbors, params.col_fc, training);

    NDArray local = cbl(ops::concat({gathered, geo, col}, 2), params.fuse_cbl, training);
    if (local.dim(2) != c) throw DimensionError("mcae_block: fuse stage produced the wrong width");
    // Residual stack runs on the flattened [N*K, C] neighbor features.
    local = ops::reshape(local, {n * k, c});
    for (auto& block : params.residual) local = residual_block(local, block, training);
    local = ops::reshape(local, {n, k, c});

    const NDArray attended = attention_pool(local, params.attn_fc);
    const NDArray with_raw =
        ops::concat({attended, constant_rows(state.positions), constant_rows(state.colors)}, 1);
    NDArray out = cbl(with_raw, params.post_cbl, training);

    LevelState next = downsample_level(state, out, options, rng);
    return {std::move(out), std::move(next)};
}

LocalAggregationParams LocalAggregationParams::create(std::size_t c_in, std::size_t c_out, Rng& rng,
                                                      double leaky_slope) {
    return {CBLParams::create(c_in + kRelativePositionWidth, c_out, rng, leaky_slope)};
}

void LocalAggregationParams::collect(const std::string& prefix, ParameterList& out) const {
    shared_fc.collect(prefix + ".shared_fc", out);
}

BlockOutput local_aggregation_block(const LevelState& state, LocalAggregationParams& params,
                                    const LevelOptions& options, Rng& rng, bool training) {
    check_features(state, params.shared_fc.in_channels() - kRelativePositionWidth, "local_aggregation_block");
    const NDArray gathered = ops::gather_neighbors(state.features, state.neighbors);
    const NDArray geo = relative_position_features(state.positions, state.neighbors);
    NDArray out = ops::max_over_neighbors(cbl(ops::concat({gathered, geo}, 2), params.shared_fc, training));
    LevelState next = downsample_level(state, out, options, rng);
    return {std::move(out), std::move(next)};
}

}  // namespace mcnet
