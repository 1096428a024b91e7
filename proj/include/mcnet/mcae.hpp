#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mcnet/layers.hpp"
#include "mcnet/neighbor_index.hpp"
#include "mcnet/rng.hpp"
#include "mcnet/tensor.hpp"

namespace mcnet {

// Points of one encoder scale. Positions and colors are the raw level-0
// values of the selected points; only `features` is learned.
struct LevelState {
    std::vector<PointId> point_ids;  // ids into the level-0 point set
    std::vector<double> positions;   // [N,3]
    std::vector<double> colors;      // [N,3]
    NDArray features;                // [N,C]
    NeighborIndex neighbors;         // [N,K] within this level, self first
    // For each point of the previous (finer) level, its nearest point here.
    // Empty at level 0.
    std::vector<PointId> fine_to_coarse;

    std::size_t size() const { return point_ids.size(); }
};

struct LevelOptions {
    std::size_t k_neighbors = 25;
    std::size_t decimation = 4;
};

// Builds level 0: ids 0..N-1 and the self-inclusive K-neighborhood
// (K clamped to N).
LevelState make_input_level(std::vector<double> positions, std::vector<double> colors,
                            NDArray features, std::size_t k_neighbors);

// Next scale: decimated point set, each coarse point max-pooling `features`
// over its fine-level neighborhood, raw positions/colors selected by id.
LevelState downsample_level(const LevelState& fine, const NDArray& features,
                            const LevelOptions& options, Rng& rng);

struct MCAEParams {
    CBLParams pre_cbl;                   // C_in -> C/2
    CBLParams pos_fc;                    // 7 -> C/2
    CBLParams col_fc;                    // 6 -> C/2
    CBLParams fuse_cbl;                  // 3C/2 -> C
    std::vector<ResidualParams> residual;  // blocks_per_level blocks at C
    LinearParams attn_fc;                // C -> C
    CBLParams post_cbl;                  // C + 6 -> C

    static MCAEParams create(std::size_t c_in, std::size_t c_out, std::size_t blocks_per_level, Rng& rng,
                             double leaky_slope = kDefaultLeakySlope);
    void collect(const std::string& prefix, ParameterList& out) const;
    std::size_t in_channels() const { return pre_cbl.in_channels(); }
    std::size_t out_channels() const { return post_cbl.out_channels(); }
};

inline constexpr std::size_t kRelativePositionWidth = 7;
inline constexpr std::size_t kRelativeColorWidth = 6;

// [N,K,7]: neighbor position, centroid minus neighbor, and their distance.
NDArray relative_position_features(const std::vector<double>& positions, const NeighborIndex& neighbors);
// [N,K,6]: neighbor color and centroid minus neighbor.
NDArray relative_color_features(const std::vector<double>& colors, const NeighborIndex& neighbors);

NDArray encode_relative_position(const std::vector<double>& positions, const NeighborIndex& neighbors,
                                 CBLParams& pos_fc, bool training);
NDArray encode_relative_color(const std::vector<double>& colors, const NeighborIndex& neighbors,
                              CBLParams& col_fc, bool training);

// softmax over the neighbor axis of attn_fc(x), per channel, then the
// score-weighted sum over neighbors. [N,K,C] -> [N,C].
NDArray attention_pool(const NDArray& neighbor_features, const LinearParams& attn_fc);

struct BlockOutput {
    NDArray features;  // [N, C_out] at the input scale (the skip connection)
    LevelState next;   // pooled to the next scale
};

BlockOutput mcae_block(const LevelState& state, MCAEParams& params, const LevelOptions& options,
                       Rng& rng, bool training);

// Stand-in used when the MCAE block is ablated: one shared CBL over
// [neighbor features, relative position] followed by a neighbor max-pool.
struct LocalAggregationParams {
    CBLParams shared_fc;  // C_in + 7 -> C_out

    static LocalAggregationParams create(std::size_t c_in, std::size_t c_out, Rng& rng,
                                         double leaky_slope = kDefaultLeakySlope);
    void collect(const std::string& prefix, ParameterList& out) const;
};

BlockOutput local_aggregation_block(const LevelState& state, LocalAggregationParams& params,
                                    const LevelOptions& options, Rng& rng, bool training);

}  // namespace mcnet
