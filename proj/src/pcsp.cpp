#include "mcnet/pcsp.hpp"

#include <algorithm>

#include "mcnet/errors.hpp"
#include "mcnet/ops.hpp"

namespace mcnet {

PCSPParams PCSPParams::create(std::size_t c_in, std::size_t c_out, Rng& rng, double leaky_slope) {
    if (c_in < 2 || c_in % 2 != 0) {
        throw ConfigError("P-CSP input width must be even, got " + std::to_string(c_in));
    }
    const std::size_t half = c_in / 2;
    PCSPParams p;
    p.branch_a_cbl = CBLParams::create(c_in, half, rng, leaky_slope);
    p.branch_b_cbl = CBLParams::create(c_in, half, rng, leaky_slope);
    p.branch_b_residual = ResidualParams::create(half, rng, leaky_slope);
    p.merge_cbl = CBLParams::create(2 * c_in, c_out, rng, leaky_slope);
    return p;
}

void PCSPParams::collect(const std::string& prefix, ParameterList& out) const {
    branch_a_cbl.collect(prefix + ".branch_a_cbl", out);
    branch_b_cbl.collect(prefix + ".branch_b_cbl", out);
    branch_b_residual.collect(prefix + ".branch_b_residual", out);
    merge_cbl.collect(prefix + ".merge_cbl", out);
}

NDArray upsample(const NDArray& coarse_features, std::span<const PointId> fine_to_coarse, CBLParams& up_fc,
                 bool training) {
    return cbl(ops::gather_rows(coarse_features, fine_to_coarse), up_fc, training);
}

NDArray pcsp_block(const NDArray& x, const NeighborIndex& neighbors, PCSPParams& params, bool training) {
    if (x.rank() != 2 || x.dim(1) != params.in_channels()) {
        throw DimensionError("pcsp_block: input " + shape_string(x.shape()) + " but block expects " +
                             std::to_string(params.in_channels()) + " channels");
    }
    if (neighbors.rows != x.dim(0)) {
        throw DimensionError("pcsp_block: " + std::to_string(neighbors.rows) + " neighbor rows for " +
                             std::to_string(x.dim(0)) + " points");
    }
    const NDArray a = cbl(x, params.branch_a_cbl, training);
    const NDArray b = residual_block(cbl(x, params.branch_b_cbl, training), params.branch_b_residual, training);
    const NDArray merged = ops::concat({a, b}, 1);
    if (merged.dim(1) != x.dim(1)) throw DimensionError("pcsp_block: branches do not restore the input width");
    const NDArray local = ops::max_over_neighbors(ops::gather_neighbors(merged, neighbors));
    return cbl(ops::concat({merged, local}, 1), params.merge_cbl, training);
}

DecoderParams DecoderParams::create(const std::vector<std::size_t>& channels, std::size_t head_channels,
                                    bool use_pcsp, Rng& rng, double leaky_slope) {
    if (channels.empty()) throw ConfigError("decoder needs at least one level");
    const std::size_t levels = channels.size();
    DecoderParams p;
    p.use_pcsp = use_pcsp;
    p.up_fc.resize(levels);
    for (std::size_t l = levels; l-- > 0;) {
        std::size_t c_in = channels[l];
        if (l + 1 < levels) {
            p.up_fc[l] = CBLParams::create(channels[l + 1], channels[l + 1], rng, leaky_slope);
            c_in += channels[l + 1];
        }
        if (use_pcsp) {
            p.pcsp.push_back(PCSPParams::create(c_in, channels[l], rng, leaky_slope));
        } else {
            p.mlp.push_back(CBLParams::create(c_in, channels[l], rng, leaky_slope));
        }
    }
    // Built coarsest first; store by level index.
    std::reverse(p.pcsp.begin(), p.pcsp.end());
    std::reverse(p.mlp.begin(), p.mlp.end());
    if (head_channels == 0) throw ConfigError("decoder head width must be positive");
    if (head_channels != channels[0]) p.head_fc = CBLParams::create(channels[0], head_channels, rng, leaky_slope);
    return p;
}

std::size_t DecoderParams::out_channels() const {
    if (head_fc) return head_fc->out_channels();
    return use_pcsp ? pcsp.front().out_channels() : mlp.front().out_channels();
}

void DecoderParams::collect(const std::string& prefix, ParameterList& out) const {
    for (std::size_t l = 0; l < num_levels(); ++l) {
        const std::string level = prefix + std::to_string(l);
        if (up_fc[l]) up_fc[l]->collect(level + ".up_fc", out);
        if (use_pcsp) pcsp[l].collect(level + ".pcsp", out);
        else mlp[l].collect(level + ".mlp", out);
    }
    if (head_fc) head_fc->collect(prefix + "head_fc", out);
}

NDArray decode(const std::vector<LevelState>& levels, const std::vector<NDArray>& skips, DecoderParams& params,
               bool training) {
    const std::size_t n_levels = params.num_levels();
    if (levels.size() != n_levels || skips.size() != n_levels) {
        throw ContractError("decode: " + std::to_string(levels.size()) + " levels and " +
                            std::to_string(skips.size()) + " skips for a " + std::to_string(n_levels) +
                            "-level decoder");
    }
    NDArray x;
    for (std::size_t l = n_levels; l-- > 0;) {
        NDArray input = skips[l];
        if (l + 1 < n_levels) {
            const NDArray up = upsample(x, levels[l + 1].fine_to_coarse, *params.up_fc[l], training);
            input = ops::concat({up, skips[l]}, 1);
        }
        x = params.use_pcsp ? pcsp_block(input, levels[l].neighbors, params.pcsp[l], training)
                            : cbl(input, params.mlp[l], training);
    }
    if (params.head_fc) x = cbl(x, *params.head_fc, training);
    return x;
}

}  // namespace mcnet
