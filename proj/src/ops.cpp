#include "mcnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mcnet/errors.hpp"

namespace mcnet::ops {

namespace {

using detail::Node;

// Grad buffer of a parent, or nullptr when it does not take gradients.
double* grad_of(Node& self, std::size_t parent) {
    Node& p = *self.parents[parent];
    return p.requires_grad ? p.grad.data() : nullptr;
}

void require_rank(const NDArray& x, std::size_t rank, const char* op) {
    if (x.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                             ", got shape " + shape_string(x.shape()));
    }
}

void require_same_shape(const NDArray& a, const NDArray& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                             " vs " + shape_string(b.shape()));
    }
}

}  // namespace

NDArray matmul(const NDArray& a, const NDArray& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) +
                             " x " + shape_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    const auto A = a.data();
    const auto B = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            const double* brow = B.data() + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return NDArray::from_op({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
        const double* g = self.grad.data();
        const double* A = self.parents[0]->value.data();
        const double* B = self.parents[1]->value.data();
        if (double* ga = grad_of(self, 0)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
                    ga[i * k + p] += acc;
                }
        }
        if (double* gb = grad_of(self, 1)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = A[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
                }
        }
    });
}

NDArray linear(const NDArray& x, const NDArray& weight, const NDArray& bias) {
    require_rank(weight, 2, "linear");
    const std::size_t cin = weight.dim(0), cout = weight.dim(1);
    if (x.rank() == 0 || x.shape().back() != cin) {
        throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                             shape_string(weight.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != cout) {
        throw DimensionError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                             shape_string(weight.shape()));
    }
    const std::size_t rows = x.size() / cin;
    Shape shape = x.shape();
    shape.back() = cout;
    std::vector<double> out(rows * cout);
    const double* X = x.data().data();
    const double* W = weight.data().data();
    const double* b = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        double* orow = out.data() + r * cout;
        std::copy(b, b + cout, orow);
        for (std::size_t p = 0; p < cin; ++p) {
            const double xv = X[r * cin + p];
            const double* wrow = W + p * cout;
            for (std::size_t j = 0; j < cout; ++j) orow[j] += xv * wrow[j];
        }
    }
    return NDArray::from_op(std::move(shape), std::move(out), "linear", {x, weight, bias},
                            [rows, cin, cout](Node& self) {
        const double* g = self.grad.data();
        const double* X = self.parents[0]->value.data();
        const double* W = self.parents[1]->value.data();
        if (double* gx = grad_of(self, 0)) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t p = 0; p < cin; ++p) {
                    double acc = 0.0;
                    const double* wrow = W + p * cout;
                    const double* grow = g + r * cout;
                    for (std::size_t j = 0; j < cout; ++j) acc += grow[j] * wrow[j];
                    gx[r * cin + p] += acc;
                }
        }
        if (double* gw = grad_of(self, 1)) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t p = 0; p < cin; ++p) {
                    const double xv = X[r * cin + p];
                    double* wrow = gw + p * cout;
                    const double* grow = g + r * cout;
                    for (std::size_t j = 0; j < cout; ++j) wrow[j] += xv * grow[j];
                }
        }
        if (double* gb = grad_of(self, 2)) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < cout; ++j) gb[j] += g[r * cout + j];
        }
    });
}

NDArray add(const NDArray& a, const NDArray& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return NDArray::from_op(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
        for (std::size_t p = 0; p < 2; ++p)
            if (double* gp = grad_of(self, p))
                for (std::size_t i = 0; i < self.grad.size(); ++i) gp[i] += self.grad[i];
    });
}

NDArray mul(const NDArray& a, const NDArray& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return NDArray::from_op(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (double* ga = grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * bv[i];
        if (double* gb = grad_of(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * av[i];
    });
}

NDArray scale(const NDArray& x, double factor) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
    return NDArray::from_op(x.shape(), std::move(out), "scale", {x}, [factor](Node& self) {
        if (double* gx = grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * factor;
    });
}

NDArray sum(const NDArray& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return NDArray::from_op({}, {total}, "sum", {x}, [](Node& self) {
        if (double* gx = grad_of(self, 0)) {
            const double g = self.grad[0];
            for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) gx[i] += g;
        }
    });
}

NDArray reshape(const NDArray& x, Shape shape) {
    if (shape_size(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                             shape_string(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return NDArray::from_op(std::move(shape), std::move(out), "reshape", {x}, [](Node& self) {
        if (double* gx = grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    });
}

NDArray leaky_relu(const NDArray& x, double slope) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
    if (auto& trace = detail::branch_trace(); trace.active) {
        for (std::size_t i = 0; i < out.size(); ++i) trace.record(2 * i + (x[i] > 0.0));
    }
    return NDArray::from_op(x.shape(), std::move(out), "leaky_relu", {x}, [slope](Node& self) {
        if (double* gx = grad_of(self, 0)) {
            const auto& xv = self.parents[0]->value;
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                gx[i] += xv[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
        }
    });
}

NDArray concat(const std::vector<NDArray>& arrays, std::size_t axis) {
    if (arrays.empty()) throw ContractError("concat: no inputs");
    const Shape& first = arrays.front().shape();
    if (axis >= first.size()) {
        throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                             shape_string(first));
    }
    Shape shape = first;
    shape[axis] = 0;
    for (const auto& a : arrays) {
        if (a.rank() != first.size()) {
            throw DimensionError("concat: rank mismatch " + shape_string(first) + " vs " +
                                 shape_string(a.shape()));
        }
        for (std::size_t d = 0; d < first.size(); ++d) {
            if (d != axis && a.dim(d) != first[d]) {
                throw DimensionError("concat: non-axis dimension mismatch " + shape_string(first) +
                                     " vs " + shape_string(a.shape()));
            }
        }
        shape[axis] += a.dim(axis);
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
    const std::size_t out_row = shape[axis] * inner;

    std::vector<std::size_t> offsets;
    std::vector<std::size_t> widths;
    std::vector<double> out(shape_size(shape));
    std::size_t offset = 0;
    for (const auto& a : arrays) {
        const std::size_t w = a.dim(axis) * inner;
        offsets.push_back(offset);
        widths.push_back(w);
        const auto src = a.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(src.data() + o * w, w, out.data() + o * out_row + offset);
        offset += w;
    }
    return NDArray::from_op(std::move(shape), std::move(out), "concat", arrays,
                            [outer, out_row, offsets, widths](Node& self) {
        for (std::size_t p = 0; p < offsets.size(); ++p) {
            double* gp = grad_of(self, p);
            if (!gp) continue;
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < widths[p]; ++j)
                    gp[o * widths[p] + j] += self.grad[o * out_row + offsets[p] + j];
        }
    });
}

namespace {

// Shared body of gather_rows / gather_neighbors: out row r copies x row ids[r].
NDArray gather_impl(const NDArray& x, std::span<const PointId> ids, Shape out_shape, const char* op) {
    require_rank(x, 2, op);
    const std::size_t n = x.dim(0), c = x.dim(1);
    for (PointId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= n) {
            throw IndexError(std::string(op) + ": index " + std::to_string(id) +
                             " out of range [0," + std::to_string(n) + ")");
        }
    }
    std::vector<double> out(ids.size() * c);
    const double* X = x.data().data();
    for (std::size_t r = 0; r < ids.size(); ++r)
        std::copy_n(X + static_cast<std::size_t>(ids[r]) * c, c, out.data() + r * c);
    std::vector<PointId> captured(ids.begin(), ids.end());
    return NDArray::from_op(std::move(out_shape), std::move(out), op, {x},
                            [c, captured = std::move(captured)](Node& self) {
        if (double* gx = grad_of(self, 0)) {
            for (std::size_t r = 0; r < captured.size(); ++r) {
                double* dst = gx + static_cast<std::size_t>(captured[r]) * c;
                const double* src = self.grad.data() + r * c;
                for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
            }
        }
    });
}

}  // namespace

NDArray gather_rows(const NDArray& x, std::span<const PointId> ids) {
    require_rank(x, 2, "gather_rows");
    return gather_impl(x, ids, {ids.size(), x.dim(1)}, "gather_rows");
}

NDArray gather_neighbors(const NDArray& features, const NeighborIndex& index) {
    require_rank(features, 2, "gather_neighbors");
    if (index.indices.size() != index.rows * index.k) {
        throw ContractError("gather_neighbors: neighbor index holds " +
                            std::to_string(index.indices.size()) + " ids for " +
                            std::to_string(index.rows) + "x" + std::to_string(index.k));
    }
    return gather_impl(features, index.indices, {index.rows, index.k, features.dim(1)},
                       "gather_neighbors");
}

NDArray max_over_neighbors(const NDArray& x) {
    require_rank(x, 3, "max_over_neighbors");
    const std::size_t n = x.dim(0), k = x.dim(1), c = x.dim(2);
    if (k == 0) throw ContractError("max_over_neighbors: empty neighborhood (K = 0)");
    std::vector<double> out(n * c);
    std::vector<std::uint32_t> arg(n * c, 0);
    const double* X = x.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* base = X + i * k * c;
        std::copy_n(base, c, out.data() + i * c);
        for (std::size_t j = 1; j < k; ++j)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v = base[j * c + ch];
                if (v > out[i * c + ch]) {
                    out[i * c + ch] = v;
                    arg[i * c + ch] = static_cast<std::uint32_t>(j);
                }
            }
    }
    if (auto& trace = detail::branch_trace(); trace.active) {
        for (std::size_t idx = 0; idx < arg.size(); ++idx) trace.record(idx * 131 + arg[idx]);
    }
    return NDArray::from_op({n, c}, std::move(out), "max_over_neighbors", {x},
                            [k, c, arg = std::move(arg)](Node& self) {
        if (double* gx = grad_of(self, 0)) {
            for (std::size_t idx = 0; idx < arg.size(); ++idx) {
                const std::size_t i = idx / c, ch = idx % c;
                gx[(i * k + arg[idx]) * c + ch] += self.grad[idx];
            }
        }
    });
}

NDArray mean_over_neighbors(const NDArray& x) {
    require_rank(x, 3, "mean_over_neighbors");
    const std::size_t n = x.dim(0), k = x.dim(1), c = x.dim(2);
    if (k == 0) throw ContractError("mean_over_neighbors: empty neighborhood (K = 0)");
    std::vector<double> out(n * c, 0.0);
    const double* X = x.data().data();
    const double inv = 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] += X[(i * k + j) * c + ch];
        for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] *= inv;
    }
    return NDArray::from_op({n, c}, std::move(out), "mean_over_neighbors", {x},
                            [n, k, c, inv](Node& self) {
        if (double* gx = grad_of(self, 0)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < k; ++j)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        gx[(i * k + j) * c + ch] += self.grad[i * c + ch] * inv;
        }
    });
}

NDArray weighted_sum_over_neighbors(const NDArray& x, const NDArray& s) {
    require_rank(x, 3, "weighted_sum_over_neighbors");
    require_same_shape(x, s, "weighted_sum_over_neighbors");
    const std::size_t n = x.dim(0), k = x.dim(1), c = x.dim(2);
    std::vector<double> out(n * c, 0.0);
    const double* X = x.data().data();
    const double* S = s.data().data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t at = (i * k + j) * c + ch;
                out[i * c + ch] += X[at] * S[at];
            }
    return NDArray::from_op({n, c}, std::move(out), "weighted_sum_over_neighbors", {x, s},
                            [n, k, c](Node& self) {
        const double* X = self.parents[0]->value.data();
        const double* S = self.parents[1]->value.data();
        double* gx = grad_of(self, 0);
        double* gs = grad_of(self, 1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t at = (i * k + j) * c + ch;
                    const double g = self.grad[i * c + ch];
                    if (gx) gx[at] += g * S[at];
                    if (gs) gs[at] += g * X[at];
                }
    });
}

NDArray softmax(const NDArray& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                             shape_string(x.shape()));
    }
    for (double v : x.data()) {
        if (std::isnan(v)) throw NumericError("softmax: NaN input");
    }
    std::size_t outer = 1, inner = 1;
    const std::size_t len = x.dim(axis);
    for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
    for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    std::vector<double> out(x.size());
    const double* X = x.data().data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = X[base];
            for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, X[base + t * inner]);
            double z = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                const double e = std::exp(X[base + t * inner] - mx);
                out[base + t * inner] = e;
                z += e;
            }
            for (std::size_t t = 0; t < len; ++t) out[base + t * inner] /= z;
        }
    return NDArray::from_op(x.shape(), std::move(out), "softmax", {x},
                            [outer, inner, len](Node& self) {
        double* gx = grad_of(self, 0);
        if (!gx) return;
        const double* Y = self.value.data();
        const double* G = self.grad.data();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::size_t t = 0; t < len; ++t) dot += G[base + t * inner] * Y[base + t * inner];
                for (std::size_t t = 0; t < len; ++t) {
                    const std::size_t at = base + t * inner;
                    gx[at] += Y[at] * (G[at] - dot);
                }
            }
    });
}

NDArray weighted_cross_entropy(const NDArray& logits, std::span<const int> truth,
                               std::span<const double> class_weights) {
    require_rank(logits, 2, "weighted_cross_entropy");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (truth.size() != n) {
        throw DimensionError("weighted_cross_entropy: " + std::to_string(truth.size()) +
                             " labels for " + std::to_string(n) + " rows");
    }
    if (class_weights.size() != c) {
        throw DimensionError("weighted_cross_entropy: " + std::to_string(class_weights.size()) +
                             " class weights for " + std::to_string(c) + " classes");
    }
    if (n == 0) throw ContractError("weighted_cross_entropy: empty batch");
    for (int t : truth) {
        if (t < 0 || static_cast<std::size_t>(t) >= c) {
            throw ContractError("weighted_cross_entropy: label " + std::to_string(t) +
                                " outside [0," + std::to_string(c) + ")");
        }
    }
    const double* L = logits.data().data();
    std::vector<double> prob(n * c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = L + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        const double log_z = std::log(z) + mx;
        for (std::size_t j = 0; j < c; ++j) prob[i * c + j] = std::exp(row[j] - log_z);
        const auto t = static_cast<std::size_t>(truth[i]);
        total += class_weights[t] * (log_z - row[t]);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<int> labels(truth.begin(), truth.end());
    std::vector<double> weights(class_weights.begin(), class_weights.end());
    return NDArray::from_op({}, {total * inv_n}, "weighted_cross_entropy", {logits},
                            [n, c, inv_n, prob = std::move(prob), labels = std::move(labels),
                             weights = std::move(weights)](Node& self) {
        double* gl = grad_of(self, 0);
        if (!gl) return;
        const double g = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < n; ++i) {
            const auto t = static_cast<std::size_t>(labels[i]);
            const double w = weights[t] * g;
            for (std::size_t j = 0; j < c; ++j) gl[i * c + j] += w * prob[i * c + j];
            gl[i * c + t] -= w;
        }
    });
}

}  // namespace mcnet::ops
