#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mcnet/errors.hpp"
#include "mcnet/gradcheck.hpp"
#include "mcnet/voting.hpp"
#include "test_support.hpp"
#include "vote_scenes.hpp"

using namespace mcnet;
using namespace mcnet::testing;

TEST(HeadNei, SelfOnlyNeighborhoodIsPlainFc) {
    Rng rng(1);
    auto x = random_array({5, 4}, rng, false);
    auto fc = LinearParams::create(4, 3, rng, 1.0);
    NeighborIndex self{5, 1, {0, 1, 2, 3, 4}, {0, 0, 0, 0, 0}};
    auto a = head_nei(x, self, fc);
    auto b = dense(x, fc);
    ASSERT_EQ(a.shape(), (Shape{5, 3}));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(a.data()[i], b.data()[i]);
}

TEST(HeadNei, ConstantFeaturesGiveConstantLogits) {
    Rng rng(2);
    NDArray x = NDArray::full({12, 4}, 0.375);
    auto fc = LinearParams::create(4, 3, rng, 1.0);
    auto nb = random_neighbor_index(12, 5, 12, rng);
    auto y = head_nei(x, nb, fc);
    for (std::size_t i = 1; i < 12; ++i) {
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.data()[i * 3 + c], y.data()[c]);
    }
    EXPECT_THROW(head_nei(NDArray::zeros({12, 5}), nb, fc), DimensionError);
}

TEST(HeadNei, Gradcheck) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(10 + seed);
        auto x = random_array({8, 5}, rng);
        auto fc = LinearParams::create(5, 3, rng, 1.0);
        auto nb = random_neighbor_index(8, 4, 8, rng);
        auto r = random_array({8, 3}, rng, false);
        auto loss = [&] { return projection_loss(head_nei(x, nb, fc), r); };
        auto res = check_gradients(loss, {x, fc.weight, fc.bias});
        EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
    }
}

TEST(Vote, UnanimousConfidentPoints) {
    constexpr std::size_t n = 6, k = 3;
    std::vector<double> logits;
    for (std::size_t i = 0; i < n; ++i) logits.insert(logits.end(), {0.0, 5.0, 1.0});
    NeighborIndex nb;
    nb.rows = n;
    nb.k = k;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < k; ++s) {
            nb.indices.push_back(static_cast<PointId>((i + s) % n));
            nb.distances.push_back(static_cast<double>(s));
        }
    }
    NDArray l({n, 3}, logits);
    auto r = vote({l, l, nb});
    for (std::size_t i = 0; i < n; ++i) {
        EXPECT_EQ(r.final_labels[i], 1);
        EXPECT_EQ(r.candidate_labels[i], 1);
        EXPECT_EQ(r.support_counts[i], k);
    }
    EXPECT_EQ(argmax_baseline(l), r.final_labels);
}

TEST(Vote, SelfOnlyNeighborhoodKeepsCandidate) {
    NeighborIndex nb{1, 1, {0}, {0.0}};
    NDArray pt({1, 3}, {0.2, 0.1, 0.3});
    NDArray ne({1, 3}, {3.0, 0.0, 0.0});
    auto r = vote({pt, ne, nb});
    EXPECT_EQ(r.candidate_labels[0], 0);
    EXPECT_EQ(r.final_labels[0], 0);
    EXPECT_EQ(r.support_counts[0], 1u);
}

TEST(Vote, HeadTieGoesToPointHead) {
    NeighborIndex nb{1, 1, {0}, {0.0}};
    NDArray pt({1, 2}, {1.0, 0.0});
    NDArray ne({1, 2}, {0.0, 1.0});
    EXPECT_EQ(vote({pt, ne, nb}).candidate_labels[0], 0);
}

TEST(Vote, FlippedLogitsSceneIsRepaired) {
    auto scene = flipped_logits_scene();
    const auto base = argmax_baseline(scene.inputs.logits_point);
    for (auto f : scene.flipped) ASSERT_NE(base[f], scene.truth[f]);
    const auto r = vote(scene.inputs);
    std::size_t fixed = 0;
    for (auto f : scene.flipped) fixed += r.final_labels[f] == scene.truth[f];
    EXPECT_GE(fixed, 8u);
    EXPECT_GE(accuracy(r.final_labels, scene.truth), accuracy(base, scene.truth));
}

TEST(Vote, UnanimousControlMatchesArgmax) {
    auto scene = unanimous_control_scene();
    const auto base = argmax_baseline(scene.inputs.logits_point);
    const auto r = vote(scene.inputs);
    EXPECT_EQ(r.final_labels, base);
    EXPECT_GE(accuracy(r.final_labels, scene.truth), accuracy(base, scene.truth));
}

TEST(Vote, ShiftInvariantPerPoint) {
    auto scene = flipped_logits_scene();
    const auto r0 = vote(scene.inputs);
    auto shifted = scene.inputs;
    std::vector<double> a(shifted.logits_point.data().begin(), shifted.logits_point.data().end());
    std::vector<double> b(shifted.logits_nei.data().begin(), shifted.logits_nei.data().end());
    const std::size_t c = shifted.logits_point.dim(1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] += static_cast<double>(i / c % 7) * 4.0 - 12.0;
        b[i] += static_cast<double>(i / c % 5) * 8.0;
    }
    shifted.logits_point = NDArray(shifted.logits_point.shape(), a);
    shifted.logits_nei = NDArray(shifted.logits_nei.shape(), b);
    const auto r1 = vote(shifted);
    EXPECT_EQ(r0.candidate_labels, r1.candidate_labels);
    EXPECT_EQ(r0.final_labels, r1.final_labels);
    EXPECT_EQ(r0.support_counts, r1.support_counts);
}

TEST(Vote, Deterministic) {
    auto scene = flipped_logits_scene();
    const auto a = vote(scene.inputs);
    const auto b = vote(scene.inputs);
    EXPECT_EQ(a.final_labels, b.final_labels);
    EXPECT_EQ(a.support_counts, b.support_counts);
}

TEST(Vote, NeighborHeadMatchMode) {
    auto scene = flipped_logits_scene();
    scene.inputs.match_mode = VoteMatchMode::neighbor_head;
    const auto r = vote(scene.inputs);
    std::size_t fixed = 0;
    for (auto f : scene.flipped) fixed += r.final_labels[f] == scene.truth[f];
    EXPECT_GE(fixed, 8u);
    EXPECT_EQ(vote_match_mode_from_string(to_string(VoteMatchMode::neighbor_head)), VoteMatchMode::neighbor_head);
    EXPECT_THROW(vote_match_mode_from_string("majority"), ConfigError);
}

TEST(Vote, InvalidInputs) {
    NeighborIndex nb{2, 1, {0, 1}, {0, 0}};
    NDArray ok({2, 2}, {0, 1, 1, 0});
    NDArray bad({2, 2}, {0, std::numeric_limits<double>::quiet_NaN(), 1, 0});
    EXPECT_THROW(vote({bad, ok, nb}), NumericError);
    EXPECT_THROW(vote({ok, NDArray::zeros({2, 3}), nb}), DimensionError);
    NeighborIndex out_of_range{2, 1, {0, 2}, {0, 0}};
    EXPECT_THROW(vote({ok, ok, out_of_range}), IndexError);
}

TEST(ArgmaxBaseline, TieRule) {
    EXPECT_EQ(argmax_baseline(NDArray({1, 2}, {0.1, 0.9})), (std::vector<int>{1}));
    EXPECT_EQ(argmax_baseline(NDArray({1, 2}, {0.5, 0.5})), (std::vector<int>{0}));
}
