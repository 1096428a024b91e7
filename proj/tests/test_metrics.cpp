#include <gtest/gtest.h>

#include "mcnet/errors.hpp"
#include "mcnet/metrics.hpp"
#include "mcnet/rng.hpp"

using namespace mcnet;

TEST(Confusion, DiagonalAndEmpty) {
    ConfusionMatrix cm(3);
    std::vector<int> t{0, 1, 2, 2};
    cm.accumulate(t, t);
    EXPECT_EQ(cm.count(2, 2), 2u);
    EXPECT_EQ(cm.total(), 4u);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            if (i != j) EXPECT_EQ(cm.count(i, j), 0u);
        }
    }
    const auto before = cm.counts();
    cm.accumulate({}, {});
    EXPECT_EQ(cm.counts(), before);
}

TEST(Confusion, InvalidLabels) {
    ConfusionMatrix cm(2);
    std::vector<int> t{0, 2}, p{0, 1};
    EXPECT_THROW(cm.accumulate(t, p), ContractError);
    EXPECT_EQ(cm.total(), 0u);
    std::vector<int> neg{-1};
    std::vector<int> one{0};
    EXPECT_THROW(cm.accumulate(one, neg), ContractError);
    EXPECT_THROW(cm.accumulate(one, p), ContractError);
}

TEST(Confusion, IncrementalEqualsOneShot) {
    Rng rng(4);
    std::vector<int> t(1000), p(1000);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<int>(rng.below(5));
        p[i] = static_cast<int>(rng.below(5));
    }
    ConfusionMatrix one(5), inc(5), merged(5);
    one.accumulate(t, p);
    for (std::size_t s = 0; s < 1000; s += 137) {
        const std::size_t e = std::min<std::size_t>(s + 137, 1000);
        inc.accumulate(std::span(t).subspan(s, e - s), std::span(p).subspan(s, e - s));
        ConfusionMatrix part(5);
        part.accumulate(std::span(t).subspan(s, e - s), std::span(p).subspan(s, e - s));
        merged.merge(part);
    }
    EXPECT_EQ(one.counts(), inc.counts());
    EXPECT_EQ(one.counts(), merged.counts());
}

TEST(Metrics, HandComputedTwoClass) {
    auto cm = ConfusionMatrix::from_counts(2, {1, 1, 0, 2});
    EXPECT_EQ(overall_accuracy(cm), 0.75);
    const auto iou = iou_per_class(cm);
    EXPECT_EQ(*iou[0], 0.5);
    EXPECT_EQ(*iou[1], 2.0 / 3.0);
    EXPECT_EQ(mean_iou(cm), (0.5 + 2.0 / 3.0) / 2.0);
    EXPECT_NEAR(mean_iou(cm), 7.0 / 12.0, 1e-15);
}

TEST(Metrics, PerfectAndAllWrong) {
    auto perfect = ConfusionMatrix::from_counts(2, {3, 0, 0, 5});
    EXPECT_EQ(overall_accuracy(perfect), 1.0);
    EXPECT_EQ(*iou_per_class(perfect)[0], 1.0);
    EXPECT_EQ(*iou_per_class(perfect)[1], 1.0);
    EXPECT_EQ(mean_iou(perfect), 1.0);
    auto wrong = ConfusionMatrix::from_counts(2, {0, 4, 6, 0});
    EXPECT_EQ(overall_accuracy(wrong), 0.0);
    EXPECT_EQ(mean_iou(wrong), 0.0);
}

TEST(Metrics, AbsentClassExcluded) {
    auto cm = ConfusionMatrix::from_counts(3, {1, 1, 0, 0, 2, 0, 0, 0, 0});
    const auto iou = iou_per_class(cm);
    EXPECT_FALSE(iou[2].has_value());
    EXPECT_NEAR(mean_iou(cm), 7.0 / 12.0, 1e-15);
}

TEST(Metrics, EmptyMatrixIsAnError) {
    ConfusionMatrix cm(3);
    EXPECT_THROW(overall_accuracy(cm), ContractError);
    EXPECT_THROW(iou_per_class(cm), ContractError);
    EXPECT_THROW(mean_iou(cm), ContractError);
}

TEST(Metrics, RelabelingInvariance) {
    Rng rng(9);
    std::vector<int> t(500), p(500);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<int>(rng.below(4));
        p[i] = rng.uniform() < 0.7 ? t[i] : static_cast<int>(rng.below(4));
    }
    const std::vector<int> perm{2, 0, 3, 1};
    std::vector<int> tp(500), pp(500);
    for (std::size_t i = 0; i < t.size(); ++i) {
        tp[i] = perm[static_cast<std::size_t>(t[i])];
        pp[i] = perm[static_cast<std::size_t>(p[i])];
    }
    ConfusionMatrix a(4), b(4);
    a.accumulate(t, p);
    b.accumulate(tp, pp);
    EXPECT_EQ(overall_accuracy(a), overall_accuracy(b));
    EXPECT_NEAR(mean_iou(a), mean_iou(b), 1e-15);
    const auto ia = iou_per_class(a), ib = iou_per_class(b);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(*ia[c], *ib[static_cast<std::size_t>(perm[c])]);
    double best = 0.0;
    for (const auto& v : ia) best = std::max(best, *v);
    EXPECT_LE(mean_iou(a), best);
}

TEST(Metrics, JsonReport) {
    auto cm = ConfusionMatrix::from_counts(3, {1, 1, 0, 0, 2, 0, 0, 0, 0});
    auto r = make_report(cm, {"ground", "building"});
    auto j = r.to_json();
    EXPECT_EQ(j["oa"].get<double>(), 0.75);
    EXPECT_EQ(j["per_class"].size(), 3u);
    EXPECT_EQ(j["per_class"][0]["name"], "ground");
    EXPECT_EQ(j["per_class"][2]["name"], "class_2");
    EXPECT_TRUE(j["per_class"][2]["iou"].is_null());
    auto back = MetricsReport::from_json(j);
    EXPECT_EQ(back.miou, r.miou);
    EXPECT_EQ(back.per_class[1].iou, r.per_class[1].iou);
}
