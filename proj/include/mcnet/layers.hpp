#pragma once

#include <string>
#include <vector>

#include "mcnet/rng.hpp"
#include "mcnet/tensor.hpp"

namespace mcnet {

inline constexpr double kDefaultLeakySlope = 0.2;
inline constexpr double kBatchNormEpsilon = 1e-5;
// running = momentum * running + (1 - momentum) * batch
inline constexpr double kBatchNormMomentum = 0.99;

struct NamedParameter {
    std::string name;
    NDArray array;
    bool trainable = true;  // false for batch-norm running statistics
};

using ParameterList = std::vector<NamedParameter>;

// Fully connected layer without normalization (attention scores, class heads).
struct LinearParams {
    NDArray weight;  // [C_in, C_out]
    NDArray bias;    // [C_out]

    static LinearParams create(std::size_t c_in, std::size_t c_out, Rng& rng, double gain_slope);
    void collect(const std::string& prefix, ParameterList& out) const;
    std::size_t in_channels() const { return weight.dim(0); }
    std::size_t out_channels() const { return weight.dim(1); }
};

// Pointwise linear map, batch normalization and LeakyReLU.
struct CBLParams {
    NDArray weight;  // [C_in, C_out]
    NDArray bias;    // [C_out]
    NDArray bn_gamma;
    NDArray bn_beta;
    NDArray bn_running_mean;
    NDArray bn_running_var;
    double leaky_slope = kDefaultLeakySlope;

    static CBLParams create(std::size_t c_in, std::size_t c_out, Rng& rng,
                            double leaky_slope = kDefaultLeakySlope);
    void collect(const std::string& prefix, ParameterList& out) const;
    std::size_t in_channels() const { return weight.dim(0); }
    std::size_t out_channels() const { return weight.dim(1); }
};

// x + CBL(CBL(x)), with the second stage's activation applied after the sum.
struct ResidualParams {
    CBLParams first;
    CBLParams second;

    static ResidualParams create(std::size_t channels, Rng& rng,
                                 double leaky_slope = kDefaultLeakySlope);
    void collect(const std::string& prefix, ParameterList& out) const;
};

// Batch normalization over every row of x[..., C]. Training mode normalizes
// with the batch statistics (biased variance) and folds them into the running
// buffers; inference mode uses the running buffers.
NDArray batch_norm(const NDArray& x, const NDArray& gamma, const NDArray& beta,
                   NDArray& running_mean, NDArray& running_var, bool training);

NDArray dense(const NDArray& x, const LinearParams& p);

// Linear + batch norm, no activation.
NDArray conv_bn(const NDArray& x, CBLParams& p, bool training);
NDArray cbl(const NDArray& x, CBLParams& p, bool training);
NDArray residual_block(const NDArray& x, ResidualParams& p, bool training);

// p <- p - lr * grad for every trainable entry. All gradients are checked
// before anything is written, so a NaN leaves the parameters untouched.
void sgd_step(ParameterList& params, double learning_rate);

std::size_t count_trainable(const ParameterList& params);

}  // namespace mcnet
