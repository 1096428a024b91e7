#include "mcnet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "mcnet/errors.hpp"
#include "mcnet/ops.hpp"
#include "mcnet/sampler.hpp"
#include "mcnet/spatial_index.hpp"

namespace mcnet {

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kEvalStream = 2;

void require_labels(const PointCloud& cloud, const char* what) {
    if (!cloud.has_labels()) throw ContractError(std::string(what) + ": the point cloud has no labels");
}

void check_classes(const Model& model, const PointCloud& cloud) {
    if (cloud.num_classes != model.config.num_classes) {
        throw ConfigError("model has " + std::to_string(model.config.num_classes) + " classes, data has " +
                          std::to_string(cloud.num_classes));
    }
}

}  // namespace

nlohmann::json RunReport::to_json(bool with_wall_clock) const {
    nlohmann::json j{{"config_hash", config_hash},
                     {"epoch_loss", epoch_loss},
                     {"metrics", metrics ? metrics->to_json() : nlohmann::json(nullptr)}};
    if (with_wall_clock) j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
}

RunReport train(Model& model, const PointCloud& data, const EpochCallback& on_epoch) {
    const auto start = std::chrono::steady_clock::now();
    const ModelConfig& cfg = model.config;
    data.validate();
    require_labels(data, "train");
    check_classes(model, data);

    const ClassWeights weights =
        cfg.ablation.sws ? class_weights_from_frequencies(class_frequencies(data)) : ClassWeights::uniform(cfg.num_classes);
    const std::size_t patch = std::min(cfg.patch_size, data.size());
    const double sigma = effective_patch_sigma(cfg, data);
    Rng rng = Rng(cfg.seed).fork(kTrainStream);
    ParameterList params = model.parameters();

    RunReport report;
    report.config_hash = cfg.hash();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        NDArray total;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const PatchDraw draw = draw_patch(data, weights, patch, sigma, rng);
            const PointCloud sub = data.subset(draw.point_ids);
            const ForwardOutput out = forward(model, sub.positions, sub.colors, rng, true);
            const NDArray loss = patch_loss(out, *sub.labels, weights);
            total = total.defined() ? ops::add(total, loss) : loss;
        }
        total = ops::scale(total, 1.0 / static_cast<double>(cfg.batch_size));
        const double value = total.item();
        if (!std::isfinite(value)) {
            throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
        }
        backward(total);
        if (cfg.learning_rate > 0.0) sgd_step(params, cfg.learning_rate);
        report.epoch_loss.push_back(value);
        if (on_epoch) on_epoch(epoch, value);
    }
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::vector<Tile> tile_cloud(const PointCloud& cloud, std::size_t patch_size, double sigma, Rng& rng) {
    const std::size_t n = cloud.size();
    if (n == 0) throw ContractError("tile_cloud: empty cloud");
    if (patch_size == 0) throw ContractError("tile_cloud: patch_size must be positive");
    if (!(sigma > 0.0)) throw ContractError("tile_cloud: sigma must be positive");
    std::vector<Tile> tiles;
    if (n <= patch_size) {
        Tile t;
        t.ids.resize(n);
        for (std::size_t i = 0; i < n; ++i) t.ids[i] = static_cast<PointId>(i);
        t.owned = n;
        tiles.push_back(std::move(t));
        return tiles;
    }

    const auto& pos = cloud.positions;
    double lo[2] = {pos[0], pos[1]}, hi[2] = {pos[0], pos[1]};
    for (std::size_t i = 0; i < n; ++i) {
        for (int d = 0; d < 2; ++d) {
            lo[d] = std::min(lo[d], pos[3 * i + d]);
            hi[d] = std::max(hi[d], pos[3 * i + d]);
        }
    }
    std::size_t cells[2];
    for (int d = 0; d < 2; ++d) {
        cells[d] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor((hi[d] - lo[d]) / (2.0 * sigma))));
    }
    std::vector<std::vector<PointId>> blocks(cells[0] * cells[1]);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t at[2];
        for (int d = 0; d < 2; ++d) {
            const double w = hi[d] - lo[d];
            const double f = w > 0.0 ? (pos[3 * i + d] - lo[d]) / w : 0.0;
            at[d] = std::min(cells[d] - 1, static_cast<std::size_t>(f * static_cast<double>(cells[d])));
        }
        blocks[at[1] * cells[0] + at[0]].push_back(static_cast<PointId>(i));
    }

    const UniformGrid grid(pos, default_cell_size(pos));
    std::vector<PointId> ids(patch_size);
    std::vector<double> dist(patch_size);
    for (auto& block : blocks) {
        const std::size_t nb = block.size();
        if (nb == 0) continue;
        if (nb < patch_size) {
            double center[3] = {0.0, 0.0, 0.0};
            for (PointId id : block) {
                for (int d = 0; d < 3; ++d) center[d] += pos[3 * static_cast<std::size_t>(id) + d] / static_cast<double>(nb);
            }
            grid.query(center, patch_size, ids.data(), dist.data());
            Tile t;
            t.ids = block;
            t.owned = nb;
            std::vector<PointId> context;
            for (PointId id : ids) {
                if (!std::binary_search(block.begin(), block.end(), id)) context.push_back(id);
            }
            std::sort(context.begin(), context.end());
            context.resize(std::min(context.size(), patch_size - nb));
            t.ids.insert(t.ids.end(), context.begin(), context.end());
            tiles.push_back(std::move(t));
            continue;
        }
        for (std::size_t i = nb - 1; i > 0; --i) std::swap(block[i], block[rng.below(i + 1)]);
        const std::size_t parts = (nb + patch_size - 1) / patch_size;
        for (std::size_t p = 0; p < parts; ++p) {
            Tile t;
            t.ids.assign(block.begin() + static_cast<std::ptrdiff_t>(p * nb / parts),
                         block.begin() + static_cast<std::ptrdiff_t>((p + 1) * nb / parts));
            std::sort(t.ids.begin(), t.ids.end());
            t.owned = t.ids.size();
            tiles.push_back(std::move(t));
        }
    }
    return tiles;
}

double effective_patch_sigma(const ModelConfig& config, const PointCloud& cloud) {
    const std::size_t patch = std::min(config.patch_size, cloud.size());
    return config.patch_sigma > 0.0 ? config.patch_sigma : default_patch_sigma(cloud, patch);
}

std::vector<int> predict(Model& model, const PointCloud& cloud, std::vector<double>* point_logits) {
    cloud.validate();
    const std::size_t patch = std::min(model.config.patch_size, cloud.size());
    Rng rng = Rng(model.config.seed).fork(kEvalStream);
    const auto tiles = tile_cloud(cloud, patch, effective_patch_sigma(model.config, cloud), rng);
    std::vector<int> pred(cloud.size(), -1);
    const std::size_t c = model.config.num_classes;
    if (point_logits) point_logits->assign(cloud.size() * c, 0.0);
    NoGradGuard no_grad;
    for (const auto& tile : tiles) {
        const PointCloud sub = cloud.subset(tile.ids);
        const ForwardOutput out = forward(model, sub.positions, sub.colors, rng, false);
        const std::vector<int> labels = predict_labels(model, out);
        for (std::size_t t = 0; t < tile.owned; ++t) {
            const auto id = static_cast<std::size_t>(tile.ids[t]);
            pred[id] = labels[t];
            if (point_logits) {
                std::copy_n(out.logits_point.data().begin() + static_cast<std::ptrdiff_t>(t * c), c,
                            point_logits->begin() + static_cast<std::ptrdiff_t>(id * c));
            }
        }
    }
    return pred;
}

Evaluation evaluate(Model& model, const PointCloud& cloud) {
    require_labels(cloud, "evaluate");
    check_classes(model, cloud);
    Evaluation e{predict(model, cloud), ConfusionMatrix(model.config.num_classes), {}};
    e.confusion.accumulate(*cloud.labels, e.predictions);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < cloud.num_classes; ++c) names.push_back(cloud.class_name(c));
    e.report = make_report(e.confusion, names);
    return e;
}

nlohmann::json checkpoint_json(const Model& model) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& p : model.parameters()) {
        params[p.name] = {{"shape", p.array.shape()}, {"data", std::vector<double>(p.array.data().begin(), p.array.data().end())}};
    }
    return {{"config", model.config.to_json()}, {"parameters", params}, {"rng_seed", model.config.seed}};
}

Model model_from_checkpoint(const nlohmann::json& j) {
    try {
        Model model = build_model(ModelConfig::from_json(j.at("config")));
        const auto& stored = j.at("parameters");
        ParameterList params = model.parameters();
        if (stored.size() != params.size()) {
            throw FormatError("checkpoint has " + std::to_string(stored.size()) + " arrays, model expects " +
                              std::to_string(params.size()));
        }
        for (auto& p : params) {
            if (!stored.contains(p.name)) throw FormatError("checkpoint is missing parameter '" + p.name + "'");
            const auto& entry = stored.at(p.name);
            const Shape shape = entry.at("shape").get<Shape>();
            if (shape != p.array.shape()) {
                throw FormatError("parameter '" + p.name + "' has shape " + shape_string(shape) + ", model expects " +
                                  shape_string(p.array.shape()));
            }
            const auto data = entry.at("data").get<std::vector<double>>();
            if (data.size() != p.array.size()) throw FormatError("parameter '" + p.name + "' has the wrong length");
            std::copy(data.begin(), data.end(), p.array.mutable_data().begin());
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << checkpoint_json(model).dump() << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return model_from_checkpoint(j);
}

RunReport run_experiment(const ModelConfig& config, const PointCloud& data, const PointCloud* eval_data,
                         const EpochCallback& on_epoch) {
    const auto start = std::chrono::steady_clock::now();
    Model model = build_model(config);
    RunReport report = train(model, data, on_epoch);
    report.metrics = evaluate(model, eval_data ? *eval_data : data).report;
    report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::vector<std::pair<std::string, AblationFlags>> ablation_variants() {
    return {
        {"A", {false, true, true, true}},
        {"B", {true, false, true, true}},
        {"C", {true, true, false, true}},
        {"D", {true, true, true, false}},
        {"E", {true, true, true, true}},
    };
}

std::vector<AblationRow> ablate(const PointCloud& data, const ModelConfig& base, const PointCloud* eval_data,
                                const std::function<void(const AblationRow&)>& on_row) {
    base.validate();
    std::vector<AblationRow> rows;
    for (const auto& [name, flags] : ablation_variants()) {
        ModelConfig cfg = base;
        cfg.ablation = flags;
        rows.push_back({name, flags, run_experiment(cfg, data, eval_data)});
        if (on_row) on_row(rows.back());
    }
    return rows;
}

nlohmann::json ablation_table_json(const std::vector<AblationRow>& rows) {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows) {
        table.push_back({{"model", r.model},
                         {"sws", r.flags.sws},
                         {"mcae", r.flags.mcae},
                         {"pcsp", r.flags.pcsp},
                         {"nv", r.flags.nv},
                         {"oa", r.report.metrics ? r.report.metrics->oa : 0.0},
                         {"miou", r.report.metrics ? r.report.metrics->miou : 0.0},
                         {"report", r.report.to_json()}});
    }
    return {{"rows", table}};
}

std::vector<KSweepRow> ksweep(const PointCloud& data, const ModelConfig& base, const std::vector<std::size_t>& ks,
                              const PointCloud* eval_data, const std::function<void(const KSweepRow&)>& on_row) {
    if (ks.empty()) throw ConfigError("ksweep needs at least one K");
    std::vector<KSweepRow> rows;
    for (std::size_t k : ks) {
        ModelConfig cfg = base;
        cfg.k_neighbors = k;
        cfg.validate();
        rows.push_back({k, run_experiment(cfg, data, eval_data)});
        if (on_row) on_row(rows.back());
    }
    return rows;
}

nlohmann::json ksweep_table_json(const std::vector<KSweepRow>& rows) {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows) {
        table.push_back({{"k", r.k},
                         {"oa", r.report.metrics ? r.report.metrics->oa : 0.0},
                         {"miou", r.report.metrics ? r.report.metrics->miou : 0.0},
                         {"report", r.report.to_json()}});
    }
    return {{"rows", table}};
}

SceneSpec benchmark_scene_spec(std::uint64_t seed) {
    SceneSpec s;
    s.seed = seed;
    s.classes = {
        {"ground", 2048, Geometry::plane, {0, 0, 0}, {24, 24, 0}, {0.45, 0.36, 0.22}, 0.04, 0.02},
        {"building", 1024, Geometry::box, {5, 4, 3}, {6, 6, 6}, {0.62, 0.62, 0.66}, 0.04, 0.02},
        {"tree", 1024, Geometry::cylinder, {-6, -5, 3}, {3, 3, 6}, {0.22, 0.55, 0.24}, 0.04, 0.02},
    };
    return s;
}

SceneSpec imbalanced_scene_spec(std::uint64_t seed) {
    SceneSpec s;
    s.seed = seed;
    s.classes = {
        {"ground", 2600, Geometry::plane, {0, 0, 0}, {24, 24, 0}, {0.45, 0.36, 0.22}, 0.06, 0.02},
        {"building", 1000, Geometry::box, {5, 4, 3}, {6, 6, 6}, {0.62, 0.62, 0.66}, 0.06, 0.02},
        {"tree", 420, Geometry::cylinder, {-6, -5, 3}, {3, 3, 6}, {0.22, 0.55, 0.24}, 0.06, 0.02},
        {"car", 76, Geometry::box, {-4, 6, 0.6}, {2.0, 1.0, 1.2}, {0.55, 0.52, 0.58}, 0.06, 0.02},
    };
    return s;
}

}  // namespace mcnet
