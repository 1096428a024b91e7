#include "mcnet/layers.hpp"

#include <cmath>

#include "mcnet/errors.hpp"
#include "mcnet/ops.hpp"

namespace mcnet {

namespace {

// Kaiming-style uniform bound for a LeakyReLU of the given slope.
NDArray fan_in_uniform(std::size_t c_in, std::size_t c_out, Rng& rng, double slope) {
    const double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(c_in)));
    std::vector<double> w(c_in * c_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    return NDArray({c_in, c_out}, std::move(w), true);
}

}  // namespace

LinearParams LinearParams::create(std::size_t c_in, std::size_t c_out, Rng& rng, double gain_slope) {
    if (c_in == 0 || c_out == 0) throw ConfigError("linear layer with zero width");
    return {fan_in_uniform(c_in, c_out, rng, gain_slope), NDArray::zeros({c_out}, true)};
}

void LinearParams::collect(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, true});
}

CBLParams CBLParams::create(std::size_t c_in, std::size_t c_out, Rng& rng, double leaky_slope) {
    if (c_in == 0 || c_out == 0) throw ConfigError("CBL layer with zero width");
    CBLParams p;
    p.weight = fan_in_uniform(c_in, c_out, rng, leaky_slope);
    p.bias = NDArray::zeros({c_out}, true);
    p.bn_gamma = NDArray::full({c_out}, 1.0, true);
    p.bn_beta = NDArray::zeros({c_out}, true);
    p.bn_running_mean = NDArray::zeros({c_out});
    p.bn_running_var = NDArray::full({c_out}, 1.0);
    p.leaky_slope = leaky_slope;
    return p;
}

void CBLParams::collect(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, true});
    out.push_back({prefix + ".bn_gamma", bn_gamma, true});
    out.push_back({prefix + ".bn_beta", bn_beta, true});
    out.push_back({prefix + ".bn_running_mean", bn_running_mean, false});
    out.push_back({prefix + ".bn_running_var", bn_running_var, false});
}

ResidualParams ResidualParams::create(std::size_t channels, Rng& rng, double leaky_slope) {
    ResidualParams p;
    p.first = CBLParams::create(channels, channels, rng, leaky_slope);
    p.second = CBLParams::create(channels, channels, rng, leaky_slope);
    return p;
}

void ResidualParams::collect(const std::string& prefix, ParameterList& out) const {
    first.collect(prefix + ".first", out);
    second.collect(prefix + ".second", out);
}

NDArray batch_norm(const NDArray& x, const NDArray& gamma, const NDArray& beta,
                   NDArray& running_mean, NDArray& running_var, bool training) {
    if (x.rank() == 0) throw DimensionError("batch_norm: scalar input");
    const std::size_t c = x.shape().back();
    if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
        throw DimensionError("batch_norm: " + std::to_string(c) + " channels in " +
                             shape_string(x.shape()) + " but parameters of width " +
                             std::to_string(gamma.size()));
    }
    const std::size_t rows = x.size() / c;
    if (training && rows < 2) {
        throw ContractError("batch_norm: training batch of " + std::to_string(rows) +
                            " row(s); variance is undefined");
    }
    const double* X = x.data().data();
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    if (training) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) mean[j] += X[r * c + j];
        for (double& m : mean) m /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) {
                const double d = X[r * c + j] - mean[j];
                var[j] += d * d;
            }
        for (double& v : var) v /= static_cast<double>(rows);
        auto rm = running_mean.mutable_data();
        auto rv = running_var.mutable_data();
        for (std::size_t j = 0; j < c; ++j) {
            rm[j] = kBatchNormMomentum * rm[j] + (1.0 - kBatchNormMomentum) * mean[j];
            rv[j] = kBatchNormMomentum * rv[j] + (1.0 - kBatchNormMomentum) * var[j];
        }
    } else {
        std::copy(running_mean.data().begin(), running_mean.data().end(), mean.begin());
        std::copy(running_var.data().begin(), running_var.data().end(), var.begin());
    }
    std::vector<double> inv_std(c);
    for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEpsilon);

    std::vector<double> xhat(x.size());
    std::vector<double> out(x.size());
    const double* G = gamma.data().data();
    const double* B = beta.data().data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) {
            const std::size_t at = r * c + j;
            xhat[at] = (X[at] - mean[j]) * inv_std[j];
            out[at] = G[j] * xhat[at] + B[j];
        }

    return NDArray::from_op(x.shape(), std::move(out), "batch_norm", {x, gamma, beta},
                            [rows, c, training, inv_std = std::move(inv_std),
                             xhat = std::move(xhat)](detail::Node& self) {
        const double* g = self.grad.data();
        const double* gamma_v = self.parents[1]->value.data();
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) {
                sum_g[j] += g[r * c + j];
                sum_gx[j] += g[r * c + j] * xhat[r * c + j];
            }
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        if (pg.requires_grad)
            for (std::size_t j = 0; j < c; ++j) pg.grad[j] += sum_gx[j];
        if (pb.requires_grad)
            for (std::size_t j = 0; j < c; ++j) pb.grad[j] += sum_g[j];
        if (!px.requires_grad) return;
        const double inv_rows = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) {
                const std::size_t at = r * c + j;
                if (training) {
                    px.grad[at] += gamma_v[j] * inv_std[j] *
                                   (g[at] - inv_rows * sum_g[j] - xhat[at] * inv_rows * sum_gx[j]);
                } else {
                    px.grad[at] += gamma_v[j] * inv_std[j] * g[at];
                }
            }
    });
}

NDArray dense(const NDArray& x, const LinearParams& p) { return ops::linear(x, p.weight, p.bias); }

NDArray conv_bn(const NDArray& x, CBLParams& p, bool training) {
    return batch_norm(ops::linear(x, p.weight, p.bias), p.bn_gamma, p.bn_beta, p.bn_running_mean,
                      p.bn_running_var, training);
}

NDArray cbl(const NDArray& x, CBLParams& p, bool training) {
    return ops::leaky_relu(conv_bn(x, p, training), p.leaky_slope);
}

NDArray residual_block(const NDArray& x, ResidualParams& p, bool training) {
    const std::size_t c = x.rank() ? x.shape().back() : 0;
    if (p.first.in_channels() != c || p.second.out_channels() != c) {
        throw DimensionError("residual_block: input has " + std::to_string(c) +
                             " channels, block maps " + std::to_string(p.first.in_channels()) +
                             " -> " + std::to_string(p.second.out_channels()));
    }
    const NDArray inner = conv_bn(cbl(x, p.first, training), p.second, training);
    return ops::leaky_relu(ops::add(x, inner), p.second.leaky_slope);
}

void sgd_step(ParameterList& params, double learning_rate) {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ContractError("sgd_step: learning rate must be positive and finite, got " +
                            std::to_string(learning_rate));
    }
    for (const auto& p : params) {
        if (!p.trainable) continue;
        for (double g : p.array.grad()) {
            if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite gradient in " + p.name);
        }
    }
    for (auto& p : params) {
        if (!p.trainable) continue;
        const auto g = p.array.grad();
        if (g.empty()) continue;
        auto v = p.array.mutable_data();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate * g[i];
    }
}

std::size_t count_trainable(const ParameterList& params) {
    std::size_t n = 0;
    for (const auto& p : params)
        if (p.trainable) n += p.array.size();
    return n;
}

}  // namespace mcnet
