#include "mcnet/config.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "mcnet/errors.hpp"

namespace mcnet {

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (num_levels == 0) fail("num_levels must be at least 1");
    if (channels.size() != num_levels) {
        fail("channels has " + std::to_string(channels.size()) + " entries for " + std::to_string(num_levels) +
             " levels");
    }
    for (std::size_t l = 0; l < channels.size(); ++l) {
        if (channels[l] < 2 || channels[l] % 2 != 0) {
            fail("channels[" + std::to_string(l) + "] = " + std::to_string(channels[l]) + " must be even and >= 2");
        }
        if (l > 0 && channels[l] <= channels[l - 1]) fail("channels must be strictly increasing");
    }
    if (k_neighbors == 0) fail("k_neighbors must be at least 1");
    if (decimation == 0) fail("decimation must be at least 1");
    if (patch_size < 2) fail("patch_size must be at least 2");
    if (num_classes < 2) fail("num_classes must be at least 2");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) fail("leaky_slope must lie in [0, 1)");
    if (!(std::isfinite(learning_rate) && learning_rate >= 0.0)) fail("learning_rate must be finite and >= 0");
    if (batch_size == 0) fail("batch_size must be at least 1");
    if (!(std::isfinite(patch_sigma) && patch_sigma >= 0.0)) fail("patch_sigma must be finite and >= 0");
    // Batch norm needs two rows at the coarsest level.
    std::size_t n = patch_size;
    for (std::size_t l = 1; l < num_levels; ++l) n = (n + decimation - 1) / decimation;
    if (n < 2) {
        fail("patch_size " + std::to_string(patch_size) + " leaves " + std::to_string(n) +
             " point(s) at the coarsest level");
    }
}

nlohmann::json ModelConfig::to_json() const {
    return {
        {"num_levels", num_levels},
        {"channels", channels},
        {"k_neighbors", k_neighbors},
        {"decimation", decimation},
        {"patch_size", patch_size},
        {"num_classes", num_classes},
        {"blocks_per_level", blocks_per_level},
        {"leaky_slope", leaky_slope},
        {"learning_rate", learning_rate},
        {"batch_size", batch_size},
        {"epochs", epochs},
        {"seed", seed},
        {"ablation", {{"sws", ablation.sws}, {"mcae", ablation.mcae}, {"pcsp", ablation.pcsp}, {"nv", ablation.nv}}},
        {"vote_match_mode", to_string(vote_match_mode)},
        {"patch_sigma", patch_sigma},
    };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known{"num_levels", "channels",        "k_neighbors", "decimation",
                                             "patch_size", "num_classes",     "blocks_per_level",
                                             "leaky_slope", "learning_rate",  "batch_size",  "epochs",
                                             "seed",       "ablation",        "vote_match_mode", "patch_sigma"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown config field '" + key + "'");
    }
    ModelConfig c;
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("channels", c.channels);
        c.num_levels = c.channels.size();
        get("num_levels", c.num_levels);
        get("k_neighbors", c.k_neighbors);
        get("decimation", c.decimation);
        get("patch_size", c.patch_size);
        get("num_classes", c.num_classes);
        get("blocks_per_level", c.blocks_per_level);
        get("leaky_slope", c.leaky_slope);
        get("learning_rate", c.learning_rate);
        get("batch_size", c.batch_size);
        get("epochs", c.epochs);
        get("seed", c.seed);
        get("patch_sigma", c.patch_sigma);
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            for (const auto& [key, _] : a.items()) {
                if (key != "sws" && key != "mcae" && key != "pcsp" && key != "nv") {
                    throw ConfigError("unknown ablation flag '" + key + "'");
                }
            }
            if (a.contains("sws")) c.ablation.sws = a.at("sws").get<bool>();
            if (a.contains("mcae")) c.ablation.mcae = a.at("mcae").get<bool>();
            if (a.contains("pcsp")) c.ablation.pcsp = a.at("pcsp").get<bool>();
            if (a.contains("nv")) c.ablation.nv = a.at("nv").get<bool>();
        }
        if (j.contains("vote_match_mode")) {
            c.vote_match_mode = vote_match_mode_from_string(j.at("vote_match_mode").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string ModelConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : to_json().dump()) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ModelConfig ModelConfig::test_profile() {
    ModelConfig c;
    c.num_levels = 3;
    c.channels = {8, 16, 32};
    c.k_neighbors = 9;
    c.decimation = 4;
    c.patch_size = 1024;
    c.num_classes = 3;
    c.batch_size = 4;
    return c;
}

}  // namespace mcnet
