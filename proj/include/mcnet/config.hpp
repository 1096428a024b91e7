#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcnet/voting.hpp"

namespace mcnet {

struct AblationFlags {
    bool sws = true;   // class-weighted patch sampling and loss weights
    bool mcae = true;  // MCAE encoder blocks, else local aggregation
    bool pcsp = true;  // P-CSP decoder blocks, else pointwise CBL
    bool nv = true;    // neighborhood voting, else point-head argmax

    bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
    std::size_t num_levels = 3;
    std::vector<std::size_t> channels{8, 16, 32};
    std::size_t k_neighbors = 25;
    std::size_t decimation = 4;
    std::size_t patch_size = 1024;
    std::size_t num_classes = 3;
    std::size_t blocks_per_level = 1;
    double leaky_slope = 0.2;
    double learning_rate = 0.01;
    std::size_t batch_size = 4;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
    AblationFlags ablation;
    VoteMatchMode vote_match_mode = VoteMatchMode::candidate;
    // Width of the Gaussian distance kernel used when drawing training
    // patches; 0 picks default_patch_sigma.
    double patch_sigma = 0.0;

    // Throws ConfigError naming the offending field.
    void validate() const;

    // Decoder output width fed to both heads.
    std::size_t head_channels() const { return channels.back(); }

    nlohmann::json to_json() const;
    // Missing fields keep their defaults; unknown fields are rejected.
    static ModelConfig from_json(const nlohmann::json& j);

    // 16 hex digits of FNV-1a over the canonical JSON dump.
    std::string hash() const;

    // 3 levels, channels [8,16,32], K=9: small enough for unit tests.
    static ModelConfig test_profile();
};

}  // namespace mcnet
