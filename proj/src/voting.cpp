#include "mcnet/voting.hpp"

#include <algorithm>
#include <cmath>

#include "mcnet/errors.hpp"
#include "mcnet/ops.hpp"

namespace mcnet {

namespace {

void check_logits(const NDArray& logits, const char* what) {
    if (logits.rank() != 2 || logits.dim(1) == 0) {
        throw DimensionError(std::string(what) + " must be [N,C], got " + shape_string(logits.shape()));
    }
    for (double v : logits.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string(what) + " contains a non-finite value");
    }
}

int argmax_row(const double* row, std::size_t c) {
    return static_cast<int>(std::max_element(row, row + c) - row);
}

// Row-wise softmax of a [N,C] table, no autograd.
std::vector<double> probabilities(const NDArray& logits) {
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    std::vector<double> p(n * c);
    const auto x = logits.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (p[i * c + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < c; ++j) p[i * c + j] /= z;
    }
    return p;
}

}  // namespace

std::string to_string(VoteMatchMode mode) {
    return mode == VoteMatchMode::candidate ? "candidate" : "neighbor_head";
}

VoteMatchMode vote_match_mode_from_string(const std::string& name) {
    if (name == "candidate") return VoteMatchMode::candidate;
    if (name == "neighbor_head") return VoteMatchMode::neighbor_head;
    throw ConfigError("unknown vote_match_mode '" + name + "' (expected candidate or neighbor_head)");
}

NDArray head_nei(const NDArray& features, const NeighborIndex& neighbors, const LinearParams& fc) {
    if (features.rank() != 2 || features.dim(1) != fc.in_channels()) {
        throw DimensionError("head_nei: features " + shape_string(features.shape()) + " for an FC of width " +
                             std::to_string(fc.in_channels()));
    }
    return dense(ops::mean_over_neighbors(ops::gather_neighbors(features, neighbors)), fc);
}

VoteResult vote(const VoteInputs& in) {
    check_logits(in.logits_point, "point logits");
    check_logits(in.logits_nei, "neighborhood logits");
    if (in.logits_point.shape() != in.logits_nei.shape()) {
        throw DimensionError("vote: point logits " + shape_string(in.logits_point.shape()) +
                             " vs neighborhood logits " + shape_string(in.logits_nei.shape()));
    }
    const std::size_t n = in.logits_point.dim(0), c = in.logits_point.dim(1);
    const NeighborIndex& nb = in.neighbors;
    if (nb.rows != n) {
        throw DimensionError("vote: " + std::to_string(nb.rows) + " neighbor rows for " + std::to_string(n) +
                             " points");
    }
    for (PointId j : nb.indices) {
        if (j < 0 || static_cast<std::size_t>(j) >= n) {
            throw IndexError("vote: neighbor id " + std::to_string(j) + " outside [0," + std::to_string(n) + ")");
        }
    }

    const auto p_pt = probabilities(in.logits_point);
    const auto p_ne = probabilities(in.logits_nei);

    VoteResult out;
    out.candidate_labels.resize(n);
    std::vector<int> nei_labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* a = p_pt.data() + i * c;
        const double* b = p_ne.data() + i * c;
        const int la = argmax_row(a, c), lb = argmax_row(b, c);
        nei_labels[i] = lb;
        out.candidate_labels[i] = b[lb] > a[la] ? lb : la;
    }
    const std::vector<int>& match_labels =
        in.match_mode == VoteMatchMode::candidate ? out.candidate_labels : nei_labels;

    out.final_labels.resize(n);
    out.support_counts.resize(n);
    std::vector<double> acc(c);
    for (std::size_t i = 0; i < n; ++i) {
        const int cand = out.candidate_labels[i];
        std::fill(acc.begin(), acc.end(), 0.0);
        std::size_t support = 0;
        bool other = false;
        for (std::size_t s = 0; s < nb.k; ++s) {
            const auto j = static_cast<std::size_t>(nb.at(i, s));
            if (match_labels[j] != cand) continue;
            ++support;
            other = other || j != i;
            for (std::size_t q = 0; q < c; ++q) acc[q] += p_pt[j * c + q];
        }
        out.support_counts[i] = support;
        out.final_labels[i] = other ? argmax_row(acc.data(), c) : cand;
    }
    return out;
}

std::vector<int> argmax_baseline(const NDArray& logits_point) {
    check_logits(logits_point, "point logits");
    const std::size_t n = logits_point.dim(0), c = logits_point.dim(1);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = argmax_row(logits_point.data().data() + i * c, c);
    return labels;
}

}  // namespace mcnet
