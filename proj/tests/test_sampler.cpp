#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "mcnet/errors.hpp"
#include "mcnet/sampler.hpp"

using namespace mcnet;

namespace {

PointCloud colocated_two_class(std::size_t per_class) {
    PointCloud cloud;
    cloud.num_classes = 2;
    cloud.labels.emplace();
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        cloud.positions.insert(cloud.positions.end(), {1.0, 2.0, 3.0});
        cloud.colors.insert(cloud.colors.end(), {0.5, 0.5, 0.5});
        cloud.labels->push_back(i < per_class ? 0 : 1);
    }
    return cloud;
}

PointCloud spread_cloud(std::size_t n, std::size_t classes, Rng& rng) {
    PointCloud cloud;
    cloud.num_classes = classes;
    cloud.labels.emplace();
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) cloud.positions.push_back(rng.uniform(0.0, 4.0));
        cloud.colors.insert(cloud.colors.end(), {0.1, 0.2, 0.3});
        cloud.labels->push_back(static_cast<int>(i % classes));
    }
    return cloud;
}

}  // namespace

TEST(ClassWeights, FromFrequencies) {
    const std::vector<double> even{0.5, 0.5};
    EXPECT_EQ(class_weights_from_frequencies(even).weights, (std::vector<double>{1.0, 1.0}));

    const std::vector<double> skewed{0.99, 0.01};
    auto w = class_weights_from_frequencies(skewed);
    EXPECT_NEAR(w.weights[1] / w.weights[0], std::sqrt(0.99 / 0.01), 1e-12);
    EXPECT_NEAR(w.weights[1] / w.weights[0], 9.95, 5e-3);
    EXPECT_NEAR((w.weights[0] + w.weights[1]) / 2.0, 1.0, 1e-12);
    w.validate();

    const std::vector<double> with_zero{0.7, 0.3, 0.0};
    auto z = class_weights_from_frequencies(with_zero);
    EXPECT_TRUE(std::isfinite(z.weights[2]));
    EXPECT_NEAR(z.weights[2] / z.weights[0], std::sqrt(0.7 / kFrequencyFloor), 1e-9);

    const std::vector<double> zeros{0.0, 0.0};
    EXPECT_THROW(class_weights_from_frequencies(zeros), ContractError);
}

TEST(DrawPatch, ExhaustiveDistinctAndErrors) {
    Rng rng(1);
    auto cloud = spread_cloud(50, 3, rng);
    auto weights = class_weights_from_frequencies(std::vector<double>{0.5, 0.3, 0.2});
    auto all = draw_patch(cloud, weights, 50, 1.0, rng);
    std::vector<PointId> expect(50);
    std::iota(expect.begin(), expect.end(), 0);
    EXPECT_EQ(all.point_ids, expect);

    for (int trial = 0; trial < 20; ++trial) {
        auto d = draw_patch(cloud, weights, 17, 0.5, rng);
        EXPECT_EQ(d.point_ids.size(), 17u);
        EXPECT_EQ(std::set<PointId>(d.point_ids.begin(), d.point_ids.end()).size(), 17u);
        for (double p : d.probabilities_used) EXPECT_GT(p, 0.0);
    }
    // Far points underflow exp() but keep a positive weight.
    auto tight = draw_patch(cloud, weights, 50, 1e-3, rng);
    for (double p : tight.probabilities_used) EXPECT_GT(p, 0.0);

    EXPECT_THROW(draw_patch(cloud, weights, 51, 1.0, rng), ContractError);
    EXPECT_THROW(draw_patch(cloud, weights, 5, 0.0, rng), ContractError);
}

TEST(DrawPatch, ScaledWeightsGiveIdenticalDraws) {
    Rng gen(2);
    auto cloud = spread_cloud(200, 4, gen);
    ClassWeights w{{0.4, 1.6, 0.8, 1.2}};
    ClassWeights scaled{{0.4 * 3.5, 1.6 * 3.5, 0.8 * 3.5, 1.2 * 3.5}};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng a(seed), b(seed);
        EXPECT_EQ(draw_patch(cloud, w, 40, 1.5, a).point_ids, draw_patch(cloud, scaled, 40, 1.5, b).point_ids);
    }
}

TEST(DrawPatch, UniformWeightsInfiniteSigmaIsUniform) {
    Rng rng(3);
    auto cloud = spread_cloud(20, 2, rng);
    const auto w = ClassWeights::uniform(2);
    std::vector<double> counts(20, 0.0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[draw_patch(cloud, w, 1, INFINITY, rng).point_ids[0]];
    const double p = 1.0 / 20.0;
    const double sd = std::sqrt(draws * p * (1 - p));
    for (double c : counts) EXPECT_LT(std::abs(c - draws * p), 3.0 * sd);
}

TEST(DrawPatch, ClassWeightsTwoToOne) {
    Rng rng(4);
    auto cloud = colocated_two_class(10);
    ClassWeights w{{4.0 / 3.0, 2.0 / 3.0}};
    const int draws = 100000;
    int class0 = 0;
    for (int i = 0; i < draws; ++i) {
        const auto id = draw_patch(cloud, w, 1, 1.0, rng).point_ids[0];
        class0 += (*cloud.labels)[static_cast<std::size_t>(id)] == 0;
    }
    const double p = 2.0 / 3.0;
    EXPECT_LT(std::abs(class0 - draws * p), 3.0 * std::sqrt(draws * p * (1 - p)));
}

TEST(DrawPatch, ClassFrequencyMatchesWeightedGaussianModel) {
    Rng gen(5);
    auto cloud = spread_cloud(30, 3, gen);
    ClassWeights w{{0.5, 1.0, 1.5}};
    const double sigma = 1.2;
    // Exact selection probability of each class for a single-point draw,
    // averaged over the uniformly chosen center.
    std::vector<double> model(3, 0.0);
    for (std::size_t c = 0; c < 30; ++c) {
        std::vector<double> p(30);
        double z = 0.0;
        for (std::size_t i = 0; i < 30; ++i) {
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) d2 += std::pow(cloud.positions[3 * i + a] - cloud.positions[3 * c + a], 2);
            p[i] = w.weights[static_cast<std::size_t>((*cloud.labels)[i])] * std::exp(-d2 / (sigma * sigma));
            z += p[i];
        }
        for (std::size_t i = 0; i < 30; ++i) model[static_cast<std::size_t>((*cloud.labels)[i])] += p[i] / z / 30.0;
    }
    Rng rng(6);
    const int draws = 100000;
    std::vector<double> counts(3, 0.0);
    for (int i = 0; i < draws; ++i) {
        const auto id = draw_patch(cloud, w, 1, sigma, rng).point_ids[0];
        ++counts[static_cast<std::size_t>((*cloud.labels)[static_cast<std::size_t>(id)])];
    }
    for (std::size_t c = 0; c < 3; ++c) {
        const double sd = std::sqrt(draws * model[c] * (1 - model[c]));
        EXPECT_LT(std::abs(counts[c] - draws * model[c]), 3.0 * sd) << "class " << c;
    }
}

TEST(Decimate, SizesAndDeterminism) {
    Rng rng(7);
    std::vector<PointId> ids(4096);
    std::iota(ids.begin(), ids.end(), 0);
    EXPECT_EQ(decimate(ids, 1, rng), ids);
    auto quarter = decimate(ids, 4, rng);
    EXPECT_EQ(quarter.size(), 1024u);
    EXPECT_EQ(std::set<PointId>(quarter.begin(), quarter.end()).size(), 1024u);
    std::vector<PointId> odd(10);
    std::iota(odd.begin(), odd.end(), 100);
    EXPECT_EQ(decimate(odd, 4, rng).size(), 3u);
    Rng a(99), b(99);
    EXPECT_EQ(decimate(ids, 4, a), decimate(ids, 4, b));
    EXPECT_THROW(decimate(ids, 0, rng), ContractError);
}
