#include "mcnet/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "mcnet/errors.hpp"
#include "mcnet/gradcheck.hpp"
#include "mcnet/model.hpp"
#include "mcnet/ops.hpp"
#include "mcnet/pcsp.hpp"
#include "mcnet/spatial_index.hpp"
#include "mcnet/voting.hpp"

namespace mcnet {

namespace {

NDArray random_array(Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return NDArray(std::move(shape), std::move(v), requires_grad);
}

std::vector<double> random_points(std::size_t n, Rng& rng) {
    std::vector<double> v(3 * n);
    for (double& x : v) x = rng.uniform(0.0, 1.0);
    return v;
}

NeighborIndex random_neighbors(std::size_t rows, std::size_t k, std::size_t n, Rng& rng) {
    NeighborIndex idx;
    idx.rows = rows;
    idx.k = k;
    for (std::size_t i = 0; i < rows * k; ++i) {
        idx.indices.push_back(static_cast<PointId>(rng.below(n)));
        idx.distances.push_back(0.0);
    }
    return idx;
}

// Builds (loss, leaves) for one seed.
using CaseBuilder = std::function<std::pair<std::function<NDArray()>, std::vector<NDArray>>(Rng&)>;

struct CaseSpec {
    std::string module;
    std::string name;
    CaseBuilder build;
    double tolerance = kOpGradTolerance;
    std::size_t max_entries_per_leaf = 0;
    std::size_t max_seeds = 0;  // 0 = as requested
};

// Loss functions must rebuild the graph from the leaves; the projection
// weights are drawn once per seed and captured.
template <class F>
std::function<NDArray()> projected(F f, Rng& rng) {
    NoGradGuard guard;
    const NDArray y = f();
    const NDArray r = random_array(y.shape(), rng, false);
    return [f, r] { return ops::sum(ops::mul(f(), r)); };
}

std::vector<CaseSpec> all_cases() {
    std::vector<CaseSpec> cases;
    auto add = [&](const char* module, const char* name, CaseBuilder b, double tol = kOpGradTolerance,
                   std::size_t per_leaf = 0, std::size_t max_seeds = 0) {
        cases.push_back({module, name, std::move(b), tol, per_leaf, max_seeds});
    };

    add("tensor-core", "matmul", [](Rng& rng) {
        auto a = random_array({4, 5}, rng), b = random_array({5, 3}, rng);
        return std::pair{projected([=] { return ops::matmul(a, b); }, rng), std::vector{a, b}};
    });
    add("tensor-core", "linear", [](Rng& rng) {
        auto x = random_array({3, 4, 5}, rng), w = random_array({5, 2}, rng), b = random_array({2}, rng);
        return std::pair{projected([=] { return ops::linear(x, w, b); }, rng), std::vector{x, w, b}};
    });
    add("tensor-core", "concat", [](Rng& rng) {
        auto a = random_array({3, 2, 4}, rng), b = random_array({3, 3, 4}, rng);
        return std::pair{projected([=] { return ops::concat({a, b}, 1); }, rng), std::vector{a, b}};
    });
    add("tensor-core", "gather_rows", [](Rng& rng) {
        auto x = random_array({5, 3}, rng);
        std::vector<PointId> ids(9);
        for (auto& id : ids) id = static_cast<PointId>(rng.below(5));
        return std::pair{projected([=] { return ops::gather_rows(x, ids); }, rng), std::vector{x}};
    });
    add("tensor-core", "gather_neighbors", [](Rng& rng) {
        auto x = random_array({6, 3}, rng);
        auto nb = random_neighbors(6, 4, 6, rng);
        return std::pair{projected([=] { return ops::gather_neighbors(x, nb); }, rng), std::vector{x}};
    });
    add("tensor-core", "max_over_neighbors", [](Rng& rng) {
        auto x = random_array({5, 4, 3}, rng);
        return std::pair{projected([=] { return ops::max_over_neighbors(x); }, rng), std::vector{x}};
    });
    add("tensor-core", "mean_over_neighbors", [](Rng& rng) {
        auto x = random_array({5, 4, 3}, rng);
        return std::pair{projected([=] { return ops::mean_over_neighbors(x); }, rng), std::vector{x}};
    });
    add("tensor-core", "softmax", [](Rng& rng) {
        auto x = random_array({3, 5, 2}, rng, true, -3, 3);
        return std::pair{projected([=] { return ops::softmax(x, 1); }, rng), std::vector{x}};
    });
    add("tensor-core", "weighted_sum_over_neighbors", [](Rng& rng) {
        auto x = random_array({4, 5, 3}, rng), s = random_array({4, 5, 3}, rng);
        return std::pair{projected([=] { return ops::weighted_sum_over_neighbors(x, s); }, rng), std::vector{x, s}};
    });
    add("tensor-core", "leaky_relu", [](Rng& rng) {
        auto x = random_array({4, 6}, rng);
        return std::pair{projected([=] { return ops::leaky_relu(x, 0.2); }, rng), std::vector{x}};
    });
    add("tensor-core", "cbl", [](Rng& rng) {
        auto x = random_array({12, 5}, rng);
        auto p = std::make_shared<CBLParams>(CBLParams::create(5, 4, rng));
        return std::pair{projected([=] { return cbl(x, *p, true); }, rng),
                         std::vector{x, p->weight, p->bias, p->bn_gamma, p->bn_beta}};
    });
    add("tensor-core", "residual_block", [](Rng& rng) {
        auto x = random_array({12, 4}, rng);
        auto p = std::make_shared<ResidualParams>(ResidualParams::create(4, rng));
        return std::pair{projected([=] { return residual_block(x, *p, true); }, rng),
                         std::vector{x, p->first.weight, p->first.bn_gamma, p->second.weight, p->second.bn_beta}};
    });
    add("tensor-core", "weighted_cross_entropy", [](Rng& rng) {
        auto logits = random_array({6, 4}, rng, true, -2, 2);
        std::vector<int> truth(6);
        for (auto& t : truth) t = static_cast<int>(rng.below(4));
        std::vector<double> w(4);
        for (auto& v : w) v = rng.uniform(0.25, 2.0);
        return std::pair{std::function<NDArray()>([=] { return ops::weighted_cross_entropy(logits, truth, w); }),
                         std::vector{logits}};
    });

    add("mcae-encoder", "encode_relative_position", [](Rng& rng) {
        auto pos = random_points(12, rng);
        auto nb = self_neighbors(pos, 5);
        auto p = std::make_shared<CBLParams>(CBLParams::create(7, 4, rng));
        return std::pair{projected([=] { return encode_relative_position(pos, nb, *p, true); }, rng),
                         std::vector{p->weight, p->bn_gamma}};
    });
    add("mcae-encoder", "attention_pool", [](Rng& rng) {
        auto x = random_array({5, 6, 4}, rng);
        auto fc = LinearParams::create(4, 4, rng, 1.0);
        return std::pair{projected([=] { return attention_pool(x, fc); }, rng), std::vector{x, fc.weight, fc.bias}};
    });
    add("mcae-encoder", "mcae_block", [](Rng& rng) {
        auto pos = random_points(32, rng), col = random_points(32, rng);
        auto feats = random_array({32, 4}, rng);
        auto level = std::make_shared<LevelState>(make_input_level(pos, col, feats, 9));
        auto p = std::make_shared<MCAEParams>(MCAEParams::create(4, 8, 1, rng));
        const std::uint64_t salt = rng.next_u64();
        auto f = [=] {
            Rng local(salt);
            return mcae_block(*level, *p, {9, 4}, local, true).features;
        };
        return std::pair{projected(f, rng), std::vector{feats, p->pre_cbl.weight, p->pos_fc.weight, p->col_fc.bn_gamma,
                                                        p->fuse_cbl.weight, p->residual[0].second.weight,
                                                        p->attn_fc.weight, p->post_cbl.bn_beta}};
    }, kOpGradTolerance, 24);

    add("pcsp-decoder", "upsample", [](Rng& rng) {
        auto x = random_array({4, 3}, rng);
        auto p = std::make_shared<CBLParams>(CBLParams::create(3, 3, rng));
        std::vector<PointId> map(10);
        for (std::size_t i = 0; i < map.size(); ++i) map[i] = static_cast<PointId>(i < 4 ? i : rng.below(4));
        return std::pair{projected([=] { return upsample(x, map, *p, true); }, rng), std::vector{x, p->weight, p->bn_gamma}};
    });
    add("pcsp-decoder", "pcsp_block", [](Rng& rng) {
        auto pos = random_points(16, rng);
        auto nb = self_neighbors(pos, 5);
        auto x = random_array({16, 8}, rng);
        auto p = std::make_shared<PCSPParams>(PCSPParams::create(8, 6, rng));
        return std::pair{projected([=] { return pcsp_block(x, nb, *p, true); }, rng),
                         std::vector{x, p->branch_a_cbl.weight, p->branch_b_cbl.weight, p->branch_b_residual.first.weight,
                                     p->merge_cbl.weight, p->merge_cbl.bn_gamma}};
    });

    add("voting", "head_nei", [](Rng& rng) {
        auto x = random_array({8, 5}, rng);
        auto fc = LinearParams::create(5, 3, rng, 1.0);
        auto nb = random_neighbors(8, 4, 8, rng);
        return std::pair{projected([=] { return head_nei(x, nb, fc); }, rng), std::vector{x, fc.weight, fc.bias}};
    });

    add("harness", "network", [](Rng& rng) {
        ModelConfig cfg = ModelConfig::test_profile();
        cfg.seed = rng.next_u64() % 1000;
        auto model = std::make_shared<Model>(build_model(cfg));
        auto pos = random_points(64, rng), col = random_points(64, rng);
        for (double& v : pos) v *= 10.0;
        std::vector<int> truth(64);
        for (auto& t : truth) t = static_cast<int>(rng.below(cfg.num_classes));
        const ClassWeights w{{0.7, 1.1, 1.2}};
        const std::uint64_t salt = rng.next_u64();
        std::vector<NDArray> leaves;
        for (const auto& p : model->parameters()) {
            if (p.trainable) leaves.push_back(p.array);
        }
        auto loss = [=] {
            Rng local(salt);
            return patch_loss(forward(*model, pos, col, local, true), truth, w);
        };
        return std::pair{std::function<NDArray()>(loss), leaves};
    }, kNetworkGradTolerance, 3, 3);
    return cases;
}

}  // namespace

std::vector<std::string> gradcheck_modules() {
    return {"tensor-core", "mcae-encoder", "pcsp-decoder", "voting", "harness"};
}

std::vector<GradcheckCase> run_gradcheck_suite(const std::string& module, std::size_t seeds) {
    const auto modules = gradcheck_modules();
    if (!module.empty() && std::find(modules.begin(), modules.end(), module) == modules.end()) {
        throw ConfigError("unknown gradcheck module '" + module + "'");
    }
    if (seeds == 0) throw ConfigError("gradcheck needs at least one seed");
    std::vector<GradcheckCase> out;
    for (const auto& spec : all_cases()) {
        if (!module.empty() && spec.module != module) continue;
        GradcheckCase c{spec.module, spec.name, 0, 0, 0.0, spec.tolerance, ""};
        const std::size_t n = spec.max_seeds > 0 ? std::min(seeds, spec.max_seeds) : seeds;
        for (std::size_t s = 0; s < n; ++s) {
            Rng rng(0xC0FFEEull + 7919ull * s);
            auto [loss, leaves] = spec.build(rng);
            const auto res = check_gradients(loss, leaves, 1e-5, 1e-4, spec.max_entries_per_leaf);
            ++c.seeds;
            c.entries += res.entries;
            if (res.max_rel_error >= c.max_rel_error) {
                c.max_rel_error = res.max_rel_error;
                c.worst = "seed " + std::to_string(s) + " " + res.worst;
            }
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace mcnet
