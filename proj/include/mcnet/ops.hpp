#pragma once

#include <span>
#include <vector>

#include "mcnet/neighbor_index.hpp"
#include "mcnet/tensor.hpp"

// Differentiable operations used by the network. Arrays are row-major; the
// "[N,K,C]" layout means point, neighbor slot, channel.
namespace mcnet::ops {

NDArray matmul(const NDArray& a, const NDArray& b);

// x[..., C_in] * weight[C_in, C_out] + bias[C_out], applied to every row of x.
NDArray linear(const NDArray& x, const NDArray& weight, const NDArray& bias);

NDArray add(const NDArray& a, const NDArray& b);
NDArray mul(const NDArray& a, const NDArray& b);
NDArray scale(const NDArray& x, double factor);
NDArray sum(const NDArray& x);
NDArray reshape(const NDArray& x, Shape shape);
NDArray leaky_relu(const NDArray& x, double slope);

NDArray concat(const std::vector<NDArray>& arrays, std::size_t axis);

// out[i, :] = x[ids[i], :]
NDArray gather_rows(const NDArray& x, std::span<const PointId> ids);

// out[i, j, :] = features[index(i, j), :]
NDArray gather_neighbors(const NDArray& features, const NeighborIndex& index);

// [N,K,C] -> [N,C]. Gradient goes to the first maximal neighbor slot.
NDArray max_over_neighbors(const NDArray& x);
NDArray mean_over_neighbors(const NDArray& x);
// out[i,c] = sum_k x[i,k,c] * s[i,k,c]
NDArray weighted_sum_over_neighbors(const NDArray& x, const NDArray& s);

NDArray softmax(const NDArray& x, std::size_t axis);

// Mean over rows of weight[truth] * -log softmax(logits)[truth].
NDArray weighted_cross_entropy(const NDArray& logits, std::span<const int> truth,
                               std::span<const double> class_weights);

}  // namespace mcnet::ops
