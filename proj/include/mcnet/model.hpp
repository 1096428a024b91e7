#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mcnet/config.hpp"
#include "mcnet/layers.hpp"
#include "mcnet/mcae.hpp"
#include "mcnet/pcsp.hpp"
#include "mcnet/rng.hpp"
#include "mcnet/sampler.hpp"
#include "mcnet/voting.hpp"

namespace mcnet {

// Encoder (MCAE or local aggregation per level), decoder (P-CSP or MLP per
// level) and the two class heads.
struct Model {
    ModelConfig config;
    CBLParams stem;  // [centered xyz, rgb] -> channels[0] / 2
    std::vector<MCAEParams> mcae;
    std::vector<LocalAggregationParams> local;
    DecoderParams decoder;
    LinearParams point_head;  // head_channels -> num_classes
    LinearParams nei_head;

    // Every array under a stable dotted name, running statistics included.
    ParameterList parameters() const;
    std::size_t parameter_count() const { return count_trainable(parameters()); }
    std::size_t encoder_in_channels(std::size_t level) const;
};

// Validates the config first; weights are drawn from `config.seed`.
Model build_model(const ModelConfig& config);

struct ForwardOutput {
    NDArray logits_point;  // [N, num_classes]
    NDArray logits_nei;
    NeighborIndex neighbors;  // level-0 neighborhoods, used for voting
};

// One patch. Positions are centered on the patch mean before use; `rng`
// drives the per-level decimation.
ForwardOutput forward(Model& model, std::span<const double> positions, std::span<const double> colors, Rng& rng,
                      bool training);

// Weighted cross-entropy of both heads, summed.
NDArray patch_loss(const ForwardOutput& out, std::span<const int> truth, const ClassWeights& weights);

// Labels from one forward pass: voting or point-head argmax per config.
std::vector<int> predict_labels(const Model& model, const ForwardOutput& out);

}  // namespace mcnet
