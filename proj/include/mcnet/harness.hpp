#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcnet/config.hpp"
#include "mcnet/metrics.hpp"
#include "mcnet/model.hpp"
#include "mcnet/point_cloud.hpp"

namespace mcnet {

struct RunReport {
    std::string config_hash;
    std::vector<double> epoch_loss;
    std::optional<MetricsReport> metrics;
    double wall_clock_seconds = 0.0;

    // Wall clock is left out unless asked for, so equal runs give equal bytes.
    nlohmann::json to_json(bool with_wall_clock = false) const;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// One SGD step per epoch on `batch_size` patches, loss averaged over the
// batch. Throws NumericError naming the epoch on a non-finite loss.
RunReport train(Model& model, const PointCloud& data, const EpochCallback& on_epoch = {});

// ids[0, owned) are labeled by this tile; the rest is context only.
struct Tile {
    std::vector<PointId> ids;
    std::size_t owned = 0;
};

// Evaluation tiles at training density. The xy extent is cut into blocks of
// side at least 2 * sigma; each block's points are shuffled and split into
// ceil(n / patch_size) parts, so a tile is a sparse sample of a region about
// as wide as a training patch. Blocks with fewer than patch_size points are
// padded with their nearest outside points as context. Every point is owned
// by exactly one tile.
std::vector<Tile> tile_cloud(const PointCloud& cloud, std::size_t patch_size, double sigma, Rng& rng);

// sigma used for both training patches and evaluation tiles
double effective_patch_sigma(const ModelConfig& config, const PointCloud& cloud);

// Inference-mode labels for every point. `point_logits`, when given, receives
// the point-head logits [N * num_classes] that went with each final label.
std::vector<int> predict(Model& model, const PointCloud& cloud, std::vector<double>* point_logits = nullptr);

struct Evaluation {
    std::vector<int> predictions;
    ConfusionMatrix confusion;
    MetricsReport report;
};

Evaluation evaluate(Model& model, const PointCloud& cloud);

nlohmann::json checkpoint_json(const Model& model);
Model model_from_checkpoint(const nlohmann::json& j);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// build_model + train + evaluate (on `eval_data`, or the training data).
RunReport run_experiment(const ModelConfig& config, const PointCloud& data, const PointCloud* eval_data = nullptr,
                         const EpochCallback& on_epoch = {});

struct AblationRow {
    std::string model;  // "A" .. "E"
    AblationFlags flags;
    RunReport report;
};

// A: no weighted sampling, B: no MCAE, C: no P-CSP, D: no voting, E: full.
std::vector<std::pair<std::string, AblationFlags>> ablation_variants();
std::vector<AblationRow> ablate(const PointCloud& data, const ModelConfig& base, const PointCloud* eval_data = nullptr,
                                const std::function<void(const AblationRow&)>& on_row = {});
nlohmann::json ablation_table_json(const std::vector<AblationRow>& rows);

struct KSweepRow {
    std::size_t k = 0;
    RunReport report;
};

inline const std::vector<std::size_t> kDefaultSweepKs{9, 16, 25, 36};

std::vector<KSweepRow> ksweep(const PointCloud& data, const ModelConfig& base, const std::vector<std::size_t>& ks,
                              const PointCloud* eval_data = nullptr,
                              const std::function<void(const KSweepRow&)>& on_row = {});
nlohmann::json ksweep_table_json(const std::vector<KSweepRow>& rows);

// Ground, building and tree, 4096 points.
SceneSpec benchmark_scene_spec(std::uint64_t seed = 7);
// Same layout plus a small, rare car class.
SceneSpec imbalanced_scene_spec(std::uint64_t seed = 11);

}  // namespace mcnet
