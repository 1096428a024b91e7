#include "mcnet/model.hpp"

#include "mcnet/errors.hpp"
#include "mcnet/ops.hpp"

namespace mcnet {

std::size_t Model::encoder_in_channels(std::size_t level) const {
    return level == 0 ? config.channels[0] / 2 : config.channels[level - 1];
}

Model build_model(const ModelConfig& config) {
    config.validate();
    Model m;
    m.config = config;
    Rng rng(config.seed);
    const double slope = config.leaky_slope;
    const auto& ch = config.channels;
    m.stem = CBLParams::create(6, ch[0] / 2, rng, slope);
    for (std::size_t l = 0; l < config.num_levels; ++l) {
        const std::size_t c_in = m.encoder_in_channels(l);
        if (config.ablation.mcae) {
            m.mcae.push_back(MCAEParams::create(c_in, ch[l], config.blocks_per_level, rng, slope));
        } else {
            m.local.push_back(LocalAggregationParams::create(c_in, ch[l], rng, slope));
        }
    }
    m.decoder = DecoderParams::create(ch, config.head_channels(), config.ablation.pcsp, rng, slope);
    m.point_head = LinearParams::create(config.head_channels(), config.num_classes, rng, 1.0);
    m.nei_head = LinearParams::create(config.head_channels(), config.num_classes, rng, 1.0);
    return m;
}

ParameterList Model::parameters() const {
    ParameterList out;
    stem.collect("stem", out);
    for (std::size_t l = 0; l < mcae.size(); ++l) mcae[l].collect("encoder" + std::to_string(l) + ".mcae", out);
    for (std::size_t l = 0; l < local.size(); ++l) local[l].collect("encoder" + std::to_string(l) + ".local", out);
    decoder.collect("decoder", out);
    point_head.collect("head_point", out);
    nei_head.collect("head_nei", out);
    return out;
}

ForwardOutput forward(Model& model, std::span<const double> positions, std::span<const double> colors, Rng& rng,
                      bool training) {
    const ModelConfig& cfg = model.config;
    if (positions.size() % 3 != 0 || colors.size() != positions.size()) {
        throw DimensionError("forward: " + std::to_string(positions.size()) + " position and " +
                             std::to_string(colors.size()) + " color values");
    }
    const std::size_t n = positions.size() / 3;
    if (n == 0) throw ContractError("forward: empty patch");

    std::vector<double> centered(positions.begin(), positions.end());
    for (std::size_t d = 0; d < 3; ++d) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += positions[3 * i + d];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) centered[3 * i + d] -= mean;
    }
    std::vector<double> input(n * 6);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < 3; ++d) {
            input[6 * i + d] = centered[3 * i + d];
            input[6 * i + 3 + d] = colors[3 * i + d];
        }
    }
    const NDArray stem = cbl(NDArray({n, 6}, std::move(input)), model.stem, training);

    std::vector<LevelState> levels;
    levels.push_back(make_input_level(std::move(centered), {colors.begin(), colors.end()}, stem, cfg.k_neighbors));
    std::vector<NDArray> skips;
    const LevelOptions options{cfg.k_neighbors, cfg.decimation};
    for (std::size_t l = 0; l < cfg.num_levels; ++l) {
        BlockOutput out = cfg.ablation.mcae ? mcae_block(levels[l], model.mcae[l], options, rng, training)
                                            : local_aggregation_block(levels[l], model.local[l], options, rng, training);
        skips.push_back(std::move(out.features));
        if (l + 1 < cfg.num_levels) levels.push_back(std::move(out.next));
    }
    const NDArray decoded = decode(levels, skips, model.decoder, training);

    ForwardOutput result;
    result.logits_point = dense(decoded, model.point_head);
    result.logits_nei = head_nei(decoded, levels[0].neighbors, model.nei_head);
    result.neighbors = std::move(levels[0].neighbors);
    return result;
}

NDArray patch_loss(const ForwardOutput& out, std::span<const int> truth, const ClassWeights& weights) {
    return ops::add(ops::weighted_cross_entropy(out.logits_point, truth, weights.weights),
                    ops::weighted_cross_entropy(out.logits_nei, truth, weights.weights));
}

std::vector<int> predict_labels(const Model& model, const ForwardOutput& out) {
    if (!model.config.ablation.nv) return argmax_baseline(out.logits_point);
    return vote({out.logits_point, out.logits_nei, out.neighbors, model.config.vote_match_mode}).final_labels;
}

}  // namespace mcnet
