#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcnet/layers.hpp"
#include "mcnet/mcae.hpp"

namespace mcnet {

// Cross-stage-partial block on points: the input splits into two half-width
// branches, a plain CBL shortcut and a CBL followed by a residual block,
// which are concatenated. The neighborhood max of that is appended to each
// point's own row and a final CBL merges both.
struct PCSPParams {
    CBLParams branch_a_cbl;           // C -> C/2
    CBLParams branch_b_cbl;           // C -> C/2
    ResidualParams branch_b_residual;  // C/2
    CBLParams merge_cbl;              // 2C -> C_out

    static PCSPParams create(std::size_t c_in, std::size_t c_out, Rng& rng,
                             double leaky_slope = kDefaultLeakySlope);
    void collect(const std::string& prefix, ParameterList& out) const;
    std::size_t in_channels() const { return branch_a_cbl.in_channels(); }
    std::size_t out_channels() const { return merge_cbl.out_channels(); }
};

// Nearest-coarse-point feature copy followed by a pointwise CBL.
NDArray upsample(const NDArray& coarse_features, std::span<const PointId> fine_to_coarse, CBLParams& up_fc,
                 bool training);

NDArray pcsp_block(const NDArray& x, const NeighborIndex& neighbors, PCSPParams& params, bool training);

// One decoder stage per encoder level, coarsest first when applied. Level l
// takes ch[L-1] channels at the coarsest level and ch[l+1] + ch[l] (upsampled
// plus skip) elsewhere, and emits ch[l]. With `use_pcsp` off every stage is a
// single pointwise CBL. A final CBL to `head_channels` is added only when it
// differs from ch[0].
struct DecoderParams {
    bool use_pcsp = true;
    std::vector<std::optional<CBLParams>> up_fc;  // empty at the coarsest level
    std::vector<PCSPParams> pcsp;
    std::vector<CBLParams> mlp;
    std::optional<CBLParams> head_fc;

    static DecoderParams create(const std::vector<std::size_t>& channels, std::size_t head_channels,
                                bool use_pcsp, Rng& rng, double leaky_slope = kDefaultLeakySlope);
    std::size_t out_channels() const;
    void collect(const std::string& prefix, ParameterList& out) const;
    std::size_t num_levels() const { return up_fc.size(); }
};

// Runs coarsest -> finest: (upsample, concat skip), then the level block.
// Returns per-point features of the finest level, [N_0, head_channels].
NDArray decode(const std::vector<LevelState>& levels, const std::vector<NDArray>& skips, DecoderParams& params,
               bool training);

}  // namespace mcnet
