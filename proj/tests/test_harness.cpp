#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "mcnet/errors.hpp"
#include "mcnet/gradcheck.hpp"
#include "mcnet/harness.hpp"
#include "mcnet/sampler.hpp"

using namespace mcnet;

namespace {

PointCloud small_scene(std::size_t per_class, std::uint64_t seed = 3) {
    SceneSpec spec = benchmark_scene_spec(seed);
    for (auto& c : spec.classes) c.point_count = per_class;
    return synth_scene(spec);
}

ModelConfig tiny_config() {
    ModelConfig cfg = ModelConfig::test_profile();
    cfg.patch_size = 96;
    cfg.epochs = 3;
    cfg.learning_rate = 0.05;
    return cfg;
}

std::vector<std::vector<double>> snapshot(const Model& m, bool trainable_only) {
    std::vector<std::vector<double>> out;
    for (const auto& p : m.parameters()) {
        if (trainable_only && !p.trainable) continue;
        out.emplace_back(p.array.data().begin(), p.array.data().end());
    }
    return out;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("mcnet_test_" + name);
}

}  // namespace

TEST(Config, JsonRoundTripAndHash) {
    ModelConfig cfg = ModelConfig::test_profile();
    cfg.ablation.nv = false;
    cfg.vote_match_mode = VoteMatchMode::neighbor_head;
    const ModelConfig back = ModelConfig::from_json(cfg.to_json());
    EXPECT_EQ(back.to_json(), cfg.to_json());
    EXPECT_EQ(back.hash(), cfg.hash());
    EXPECT_EQ(cfg.hash().size(), 16u);
    ModelConfig other = cfg;
    other.seed = 1;
    EXPECT_NE(other.hash(), cfg.hash());
}

TEST(Config, DefaultsAndPartialJson) {
    const ModelConfig cfg = ModelConfig::from_json({{"channels", {16, 32}}, {"patch_size", 256}});
    EXPECT_EQ(cfg.num_levels, 2u);
    EXPECT_EQ(cfg.k_neighbors, 25u);
    EXPECT_EQ(cfg.decimation, 4u);
    EXPECT_EQ(cfg.batch_size, 4u);
    EXPECT_EQ(cfg.epochs, 100u);
    EXPECT_TRUE(cfg.ablation.sws && cfg.ablation.mcae && cfg.ablation.pcsp && cfg.ablation.nv);
}

TEST(Config, ValidationErrors) {
    auto bad = [](nlohmann::json j) { EXPECT_THROW(ModelConfig::from_json(j), ConfigError) << j.dump(); };
    bad({{"channels", {16, 16}}});
    bad({{"channels", {8, 15}}});
    bad({{"channels", {8, 16}}, {"num_levels", 3}});
    bad({{"k_neighbors", 0}});
    bad({{"learning_rate", -1.0}});
    bad({{"num_classes", 1}});
    bad({{"batch_size", 0}});
    bad({{"colour", true}});
    bad({{"ablation", {{"crf", true}}}});
    bad({{"vote_match_mode", "majority"}});
    bad({{"channels", "wide"}});
    bad({{"patch_size", 8}, {"decimation", 4}});
}

TEST(BuildModel, DeterministicPerSeed) {
    const ModelConfig cfg = ModelConfig::test_profile();
    const Model a = build_model(cfg), b = build_model(cfg);
    EXPECT_EQ(a.parameter_count(), b.parameter_count());
    EXPECT_GT(a.parameter_count(), 0u);
    EXPECT_EQ(snapshot(a, false), snapshot(b, false));
    ModelConfig other = cfg;
    other.seed = 5;
    EXPECT_NE(snapshot(build_model(other), false), snapshot(a, false));

    std::set<std::string> names;
    for (const auto& p : a.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
    EXPECT_TRUE(names.count("stem.weight"));
    EXPECT_TRUE(names.count("head_point.weight"));
    EXPECT_TRUE(names.count("head_nei.bias"));
}

TEST(BuildModel, AblationSwaps) {
    ModelConfig cfg = ModelConfig::test_profile();
    const Model full = build_model(cfg);
    EXPECT_EQ(full.mcae.size(), 3u);
    EXPECT_TRUE(full.local.empty());
    EXPECT_EQ(full.decoder.pcsp.size(), 3u);

    cfg.ablation.mcae = false;
    const Model b = build_model(cfg);
    EXPECT_TRUE(b.mcae.empty());
    EXPECT_EQ(b.local.size(), 3u);
    EXPECT_EQ(b.decoder.pcsp.size(), 3u);
    EXPECT_EQ(b.local[1].shared_fc.out_channels(), 16u);

    cfg = ModelConfig::test_profile();
    cfg.ablation.pcsp = false;
    const Model c = build_model(cfg);
    EXPECT_EQ(c.mcae.size(), 3u);
    EXPECT_TRUE(c.decoder.pcsp.empty());
    EXPECT_EQ(c.decoder.mlp.size(), 3u);

    cfg.channels = {8, 16};
    EXPECT_THROW(build_model(cfg), ConfigError);
}

TEST(Forward, ShapesAtTestProfile) {
    Model m = build_model(ModelConfig::test_profile());
    const PointCloud cloud = small_scene(40);
    Rng rng(1);
    const ForwardOutput out = forward(m, cloud.positions, cloud.colors, rng, true);
    EXPECT_EQ(out.logits_point.shape(), (Shape{120, 3}));
    EXPECT_EQ(out.logits_nei.shape(), (Shape{120, 3}));
    EXPECT_EQ(out.neighbors.rows, 120u);
    EXPECT_EQ(out.neighbors.k, 9u);
    EXPECT_THROW(forward(m, cloud.positions, std::span(cloud.colors).first(30), rng, true), DimensionError);
}

TEST(Forward, TranslationOfPatchDoesNotChangeLogits) {
    Model m = build_model(ModelConfig::test_profile());
    const PointCloud cloud = small_scene(30);
    std::vector<double> moved = cloud.positions;
    for (double& v : moved) v += 1024.0;
    Rng r1(4), r2(4);
    NoGradGuard guard;
    const auto a = forward(m, cloud.positions, cloud.colors, r1, false);
    const auto b = forward(m, moved, cloud.colors, r2, false);
    for (std::size_t i = 0; i < a.logits_point.size(); ++i) {
        EXPECT_NEAR(a.logits_point.data()[i], b.logits_point.data()[i], 1e-9);
    }
}

TEST(FullModel, GradcheckAtTestProfile) {
    Model m = build_model(ModelConfig::test_profile());
    const PointCloud cloud = small_scene(22);
    const PointCloud patch = cloud.subset(std::vector<PointId>([] {
        std::vector<PointId> ids;
        for (PointId i = 0; i < 64; ++i) ids.push_back(i);
        return ids;
    }()));
    ASSERT_EQ(patch.size(), 64u);
    const ClassWeights w{{0.7, 1.1, 1.2}};
    std::vector<NDArray> leaves;
    for (const auto& p : m.parameters()) {
        if (p.trainable) leaves.push_back(p.array);
    }
    auto loss = [&] {
        Rng rng(17);
        return patch_loss(forward(m, patch.positions, patch.colors, rng, true), *patch.labels, w);
    };
    const auto res = check_gradients(loss, leaves, 1e-5, 1e-4, 3);
    EXPECT_LT(res.max_rel_error, 1e-3) << res.worst;
    EXPECT_GT(res.entries, 100u);
}

TEST(Train, ZeroLearningRateIsAFixedPoint) {
    ModelConfig cfg = tiny_config();
    cfg.learning_rate = 0.0;
    Model m = build_model(cfg);
    const auto before = snapshot(m, true);
    const RunReport r = train(m, small_scene(60));
    EXPECT_EQ(r.epoch_loss.size(), 3u);
    EXPECT_EQ(snapshot(m, true), before);
}

TEST(Train, IdenticalSeedGivesBitwiseIdenticalCurve) {
    const PointCloud data = small_scene(60);
    Model a = build_model(tiny_config()), b = build_model(tiny_config());
    const RunReport ra = train(a, data), rb = train(b, data);
    EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
    EXPECT_EQ(snapshot(a, false), snapshot(b, false));
    for (double v : ra.epoch_loss) EXPECT_TRUE(std::isfinite(v));
    ModelConfig other = tiny_config();
    other.seed = 9;
    Model c = build_model(other);
    EXPECT_NE(train(c, data).epoch_loss, ra.epoch_loss);
}

TEST(Train, LossDecreasesOnSmallScene) {
    ModelConfig cfg = tiny_config();
    cfg.epochs = 40;
    cfg.learning_rate = 0.1;
    Model m = build_model(cfg);
    const RunReport r = train(m, small_scene(60));
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        head += r.epoch_loss[i];
        tail += r.epoch_loss[r.epoch_loss.size() - 1 - i];
    }
    EXPECT_LT(tail, head);
}

TEST(Train, ContractErrors) {
    Model m = build_model(tiny_config());
    PointCloud unlabeled = small_scene(40);
    unlabeled.labels.reset();
    EXPECT_THROW(train(m, unlabeled), ContractError);
    EXPECT_THROW(evaluate(m, unlabeled), ContractError);

    PointCloud four = small_scene(40);
    four.num_classes = 4;
    four.class_names.push_back("car");
    EXPECT_THROW(train(m, four), ConfigError);

    auto w = m.point_head.weight.mutable_data();
    w[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        train(m, small_scene(40));
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos) << e.what();
    }
}

TEST(Tiling, OwnsEveryPointOnce) {
    const PointCloud cloud = synth_scene(benchmark_scene_spec());
    for (double sigma : {2.0, 5.0, 30.0}) {
        for (std::size_t patch : {256u, 1000u, 4096u, 5000u}) {
            Rng rng(1);
            const auto tiles = tile_cloud(cloud, patch, sigma, rng);
            std::vector<int> owned(cloud.size(), 0);
            for (const auto& t : tiles) {
                ASSERT_GT(t.owned, 0u);
                ASSERT_LE(t.owned, t.ids.size());
                EXPECT_LE(t.ids.size(), std::min<std::size_t>(patch, cloud.size()));
                EXPECT_TRUE(std::is_sorted(t.ids.begin(), t.ids.begin() + static_cast<std::ptrdiff_t>(t.owned)));
                std::vector<PointId> sorted = t.ids;
                std::sort(sorted.begin(), sorted.end());
                EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
                for (std::size_t i = 0; i < t.owned; ++i) ++owned[static_cast<std::size_t>(t.ids[i])];
            }
            for (int h : owned) ASSERT_EQ(h, 1) << "patch " << patch << " sigma " << sigma;
            if (patch >= cloud.size()) EXPECT_EQ(tiles.size(), 1u);
        }
    }
}

TEST(Tiling, MatchesTrainingDensity) {
    const PointCloud cloud = synth_scene(benchmark_scene_spec());
    Rng rng(2);
    // 24 m scene, sigma 8: a single block split into 8 sparse tiles of 512
    const auto tiles = tile_cloud(cloud, 512, 8.0, rng);
    ASSERT_EQ(tiles.size(), 8u);
    for (const auto& t : tiles) {
        EXPECT_EQ(t.owned, 512u);
        double lo = 1e9, hi = -1e9;
        for (PointId id : t.ids) {
            lo = std::min(lo, cloud.positions[3 * static_cast<std::size_t>(id)]);
            hi = std::max(hi, cloud.positions[3 * static_cast<std::size_t>(id)]);
        }
        EXPECT_GT(hi - lo, 20.0);
    }
    // small sigma: many blocks, each one padded or split
    Rng again(2);
    EXPECT_GT(tile_cloud(cloud, 512, 2.0, again).size(), 8u);
}

TEST(Tiling, DeterministicAndValidated) {
    const PointCloud cloud = synth_scene(benchmark_scene_spec());
    Rng a(3), b(3), c(3);
    const auto x = tile_cloud(cloud, 256, 4.0, a), y = tile_cloud(cloud, 256, 4.0, b);
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(x[i].ids, y[i].ids);
        EXPECT_EQ(x[i].owned, y[i].owned);
    }
    EXPECT_THROW(tile_cloud(cloud, 0, 4.0, c), ContractError);
    EXPECT_THROW(tile_cloud(cloud, 256, 0.0, c), ContractError);
}

TEST(Evaluate, PredictsEveryPointOnce) {
    ModelConfig cfg = tiny_config();
    Model m = build_model(cfg);
    const PointCloud data = small_scene(100);
    train(m, data);
    const Evaluation e = evaluate(m, data);
    ASSERT_EQ(e.predictions.size(), data.size());
    for (int p : e.predictions) {
        EXPECT_GE(p, 0);
        EXPECT_LT(p, 3);
    }
    EXPECT_EQ(e.confusion.total(), data.size());
    EXPECT_EQ(e.report.per_class.size(), 3u);
    EXPECT_EQ(e.report.per_class[0].name, "ground");
    EXPECT_EQ(evaluate(m, data).predictions, e.predictions);
}

TEST(Evaluate, NoVotingIsPointHeadArgmax) {
    ModelConfig cfg = tiny_config();
    cfg.ablation.nv = false;
    Model m = build_model(cfg);
    const PointCloud data = small_scene(100);
    train(m, data);
    std::vector<double> logits;
    const auto pred = predict(m, data, &logits);
    EXPECT_EQ(pred, argmax_baseline(NDArray({data.size(), 3}, logits)));
}

TEST(Checkpoint, RoundTripIsExact) {
    Model m = build_model(tiny_config());
    const PointCloud data = small_scene(60);
    train(m, data);
    const auto path = temp_path("ckpt.json");
    save_checkpoint(m, path);
    Model back = load_checkpoint(path);
    EXPECT_EQ(snapshot(back, false), snapshot(m, false));
    EXPECT_EQ(checkpoint_json(back).dump(), checkpoint_json(m).dump());
    EXPECT_EQ(predict(back, data), predict(m, data));

    nlohmann::json j = checkpoint_json(m);
    j["parameters"].erase("stem.weight");
    EXPECT_THROW(model_from_checkpoint(j), FormatError);
    j = checkpoint_json(m);
    j["parameters"]["stem.bias"]["shape"] = {99};
    EXPECT_THROW(model_from_checkpoint(j), FormatError);
    {
        std::ofstream bad(path);
        bad << "{ not json";
    }
    EXPECT_THROW(load_checkpoint(path), FormatError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Report, JsonOmitsWallClockByDefault) {
    RunReport r;
    r.config_hash = "abc";
    r.epoch_loss = {1.0, 0.5};
    r.wall_clock_seconds = 3.0;
    EXPECT_FALSE(r.to_json().contains("wall_clock_seconds"));
    EXPECT_EQ(r.to_json(true)["wall_clock_seconds"], 3.0);
    EXPECT_TRUE(r.to_json()["metrics"].is_null());
}

TEST(Ablate, ProducesRowsAToE) {
    ModelConfig cfg = tiny_config();
    cfg.epochs = 2;
    const auto rows = ablate(small_scene(60), cfg);
    ASSERT_EQ(rows.size(), 5u);
    const char* names[] = {"A", "B", "C", "D", "E"};
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(rows[i].model, names[i]);
        ASSERT_TRUE(rows[i].report.metrics.has_value());
        EXPECT_TRUE(std::isfinite(rows[i].report.metrics->miou));
        for (double v : rows[i].report.epoch_loss) EXPECT_TRUE(std::isfinite(v));
    }
    EXPECT_FALSE(rows[0].flags.sws);
    EXPECT_FALSE(rows[1].flags.mcae);
    EXPECT_FALSE(rows[2].flags.pcsp);
    EXPECT_FALSE(rows[3].flags.nv);
    EXPECT_EQ(rows[4].flags, AblationFlags{});
    const auto table = ablation_table_json(rows);
    EXPECT_EQ(table["rows"].size(), 5u);
    EXPECT_EQ(table["rows"][4]["model"], "E");
    EXPECT_TRUE(table["rows"][2].contains("miou"));
}

TEST(KSweep, SingleRowAndDeterminism) {
    ModelConfig cfg = tiny_config();
    cfg.epochs = 2;
    const PointCloud data = small_scene(60);
    const auto one = ksweep(data, cfg, {9});
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].k, 9u);
    const auto a = ksweep(data, cfg, {4, 9});
    const auto b = ksweep(data, cfg, {4, 9});
    EXPECT_EQ(ksweep_table_json(a).dump(), ksweep_table_json(b).dump());
    EXPECT_EQ(ksweep_table_json(a)["rows"][0]["k"], 4);
    EXPECT_EQ(kDefaultSweepKs, (std::vector<std::size_t>{9, 16, 25, 36}));
    EXPECT_THROW(ksweep(data, cfg, {}), ConfigError);
    EXPECT_THROW(ksweep(data, cfg, {0}), ConfigError);
}
