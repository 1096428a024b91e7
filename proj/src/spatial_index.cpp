#include "mcnet/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "mcnet/errors.hpp"

namespace mcnet {

namespace {

using Candidate = std::pair<double, PointId>;  // (squared distance, id)

inline double squared_distance(const double* a, const double* b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

std::size_t point_count(std::span<const double> positions, const char* what) {
    if (positions.size() % 3 != 0) {
        throw DimensionError(std::string(what) + ": position array of length " +
                             std::to_string(positions.size()) + " is not [N,3]");
    }
    return positions.size() / 3;
}

void check_k(std::size_t k, std::size_t n) {
    if (k == 0) throw ContractError("knn: k must be at least 1");
    if (k > n) {
        throw ContractError("knn: k = " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                            " base points");
    }
}

NeighborIndex make_index(std::size_t rows, std::size_t k) {
    NeighborIndex idx;
    idx.rows = rows;
    idx.k = k;
    idx.indices.resize(rows * k);
    idx.distances.resize(rows * k);
    return idx;
}

}  // namespace

NeighborIndex NeighborIndex::select_rows(std::span<const PointId> rows_to_keep) const {
    NeighborIndex out;
    out.rows = rows_to_keep.size();
    out.k = k;
    out.indices.reserve(out.rows * k);
    out.distances.reserve(out.rows * k);
    for (PointId r : rows_to_keep) {
        if (r < 0 || static_cast<std::size_t>(r) >= rows) {
            throw IndexError("select_rows: row " + std::to_string(r) + " out of range [0," +
                             std::to_string(rows) + ")");
        }
        const auto at = static_cast<std::size_t>(r) * k;
        out.indices.insert(out.indices.end(), indices.begin() + at, indices.begin() + at + k);
        out.distances.insert(out.distances.end(), distances.begin() + at, distances.begin() + at + k);
    }
    return out;
}

NeighborIndex knn_bruteforce(std::span<const double> query_positions,
                             std::span<const double> base_positions, std::size_t k) {
    const std::size_t m = point_count(query_positions, "knn_bruteforce");
    const std::size_t n = point_count(base_positions, "knn_bruteforce");
    check_k(k, n);
    NeighborIndex idx = make_index(m, k);
    std::vector<Candidate> all(n);
    for (std::size_t q = 0; q < m; ++q) {
        const double* qp = query_positions.data() + 3 * q;
        for (std::size_t i = 0; i < n; ++i) {
            all[i] = {squared_distance(qp, base_positions.data() + 3 * i), static_cast<PointId>(i)};
        }
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
        for (std::size_t j = 0; j < k; ++j) {
            idx.indices[q * k + j] = all[j].second;
            idx.distances[q * k + j] = std::sqrt(all[j].first);
        }
    }
    return idx;
}

UniformGrid::UniformGrid(std::span<const double> base_positions, double cell_size)
    : base_(base_positions), n_(point_count(base_positions, "UniformGrid")) {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
        throw ContractError("UniformGrid: cell_size must be positive and finite, got " +
                            std::to_string(cell_size));
    }
    if (n_ == 0) throw ContractError("UniformGrid: empty base set");
    double hi[3];
    for (int a = 0; a < 3; ++a) origin_[a] = hi[a] = base_[a];
    for (std::size_t i = 0; i < n_; ++i)
        for (int a = 0; a < 3; ++a) {
            origin_[a] = std::min(origin_[a], base_[3 * i + a]);
            hi[a] = std::max(hi[a], base_[3 * i + a]);
        }
    // A cell size far below the point spacing only adds empty cells; grow it
    // until the grid holds at most ~2 cells per point.
    const double cap = 2.0 * static_cast<double>(n_) + 8.0;
    cell_ = cell_size;
    for (;;) {
        double total = 1.0;
        double per_axis[3];
        for (int a = 0; a < 3; ++a) {
            per_axis[a] = std::floor((hi[a] - origin_[a]) / cell_) + 1.0;
            total *= per_axis[a];
        }
        if (total <= cap) {
            for (int a = 0; a < 3; ++a) dims_[a] = static_cast<long>(per_axis[a]);
            break;
        }
        cell_ *= std::max(1.1, std::cbrt(total / cap));
    }

    const std::size_t cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    std::vector<std::size_t> cell_of(n_);
    cell_start_.assign(cells + 1, 0);
    for (std::size_t i = 0; i < n_; ++i) {
        long c[3];
        for (int a = 0; a < 3; ++a) {
            c[a] = static_cast<long>(std::floor((base_[3 * i + a] - origin_[a]) / cell_));
            c[a] = std::clamp(c[a], 0L, dims_[a] - 1);
        }
        cell_of[i] = static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
        ++cell_start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) cell_start_[c + 1] += cell_start_[c];
    cell_points_.resize(n_);
    std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < n_; ++i) cell_points_[fill[cell_of[i]]++] = static_cast<PointId>(i);
}

void UniformGrid::query(const double* point, std::size_t k, PointId* ids_out, double* dist_out) const {
    check_k(k, n_);
    long cq[3];
    long max_reach = 0;
    for (int a = 0; a < 3; ++a) {
        const double rel = std::floor((point[a] - origin_[a]) / cell_);
        cq[a] = static_cast<long>(std::clamp(rel, -1e9, 1e9));
        max_reach = std::max({max_reach, std::abs(cq[a]), std::abs(cq[a] - (dims_[a] - 1))});
    }
    double scale = cell_;
    for (int a = 0; a < 3; ++a) scale = std::max(scale, std::abs(point[a]) + std::abs(origin_[a]));
    const double slack = 1e-9 * scale;

    std::vector<Candidate> heap;
    heap.reserve(k + 1);
    auto consider = [&](std::size_t cell) {
        for (std::size_t s = cell_start_[cell]; s < cell_start_[cell + 1]; ++s) {
            const PointId id = cell_points_[s];
            const Candidate cand{squared_distance(point, base_.data() + 3 * id), id};
            if (heap.size() < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end());
            } else if (cand < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end());
            }
        }
    };

    for (long r = 0;; ++r) {
        long lo[3], hi[3];
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::max(cq[a] - r, 0L);
            hi[a] = std::min(cq[a] + r, dims_[a] - 1);
        }
        for (long x = lo[0]; x <= hi[0]; ++x)
            for (long y = lo[1]; y <= hi[1]; ++y)
                for (long z = lo[2]; z <= hi[2]; ++z) {
                    const long ring = std::max({std::abs(x - cq[0]), std::abs(y - cq[1]), std::abs(z - cq[2])});
                    if (ring != r) continue;
                    consider(static_cast<std::size_t>((x * dims_[1] + y) * dims_[2] + z));
                }
        if (r >= max_reach) break;
        if (heap.size() == k) {
            // Every unvisited point lies outside the box of cells within ring r.
            double bound = std::numeric_limits<double>::infinity();
            for (int a = 0; a < 3; ++a) {
                const double box_lo = origin_[a] + static_cast<double>(cq[a] - r) * cell_;
                const double box_hi = origin_[a] + static_cast<double>(cq[a] + r + 1) * cell_;
                bound = std::min({bound, point[a] - box_lo, box_hi - point[a]});
            }
            bound -= slack;
            if (bound > 0.0 && heap.front().first < bound * bound) break;
        }
    }
    std::sort_heap(heap.begin(), heap.end());
    for (std::size_t j = 0; j < k; ++j) {
        ids_out[j] = heap[j].second;
        dist_out[j] = std::sqrt(heap[j].first);
    }
}

NeighborIndex knn_grid(std::span<const double> query_positions,
                       std::span<const double> base_positions, std::size_t k, double cell_size) {
    const std::size_t m = point_count(query_positions, "knn_grid");
    const std::size_t n = point_count(base_positions, "knn_grid");
    check_k(k, n);
    const UniformGrid grid(base_positions, cell_size);
    NeighborIndex idx = make_index(m, k);
    for (std::size_t q = 0; q < m; ++q) {
        grid.query(query_positions.data() + 3 * q, k, idx.indices.data() + q * k,
                   idx.distances.data() + q * k);
    }
    return idx;
}

double default_cell_size(std::span<const double> positions) {
    const std::size_t n = point_count(positions, "default_cell_size");
    if (n == 0) return 1.0;
    double lo[3], hi[3];
    for (int a = 0; a < 3; ++a) lo[a] = hi[a] = positions[a];
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], positions[3 * i + a]);
            hi[a] = std::max(hi[a], positions[3 * i + a]);
        }
    const double diag = std::sqrt((hi[0] - lo[0]) * (hi[0] - lo[0]) + (hi[1] - lo[1]) * (hi[1] - lo[1]) +
                                  (hi[2] - lo[2]) * (hi[2] - lo[2]));
    const double cell = diag / std::cbrt(static_cast<double>(n));
    return cell > 0.0 ? cell : 1.0;
}

NeighborIndex self_neighbors(std::span<const double> positions, std::size_t k) {
    NeighborIndex idx = knn_grid(positions, positions, k, default_cell_size(positions));
    for (std::size_t i = 0; i < idx.rows; ++i) {
        PointId* row = idx.indices.data() + i * k;
        double* dist = idx.distances.data() + i * k;
        const auto self = static_cast<PointId>(i);
        if (row[0] == self) continue;
        // Coincident points with lower ids sort ahead of the query itself.
        std::size_t at = 0;
        while (at < k && row[at] != self) ++at;
        if (at == k) at = k - 1;
        std::rotate(row, row + at, row + at + 1);
        std::rotate(dist, dist + at, dist + at + 1);
        row[0] = self;
        dist[0] = 0.0;
    }
    return idx;
}

std::vector<PointId> subsample_index(std::span<const double> positions,
                                     std::span<const PointId> sampled_ids) {
    const std::size_t n = point_count(positions, "subsample_index");
    if (sampled_ids.empty()) throw ContractError("subsample_index: empty sampled set");
    std::vector<char> used(n, 0);
    std::vector<double> coarse;
    coarse.reserve(sampled_ids.size() * 3);
    for (PointId id : sampled_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= n) {
            throw IndexError("subsample_index: sampled id " + std::to_string(id) + " out of range [0," +
                             std::to_string(n) + ")");
        }
        if (used[static_cast<std::size_t>(id)]++) {
            throw ContractError("subsample_index: sampled id " + std::to_string(id) + " repeated");
        }
        coarse.insert(coarse.end(), positions.begin() + 3 * id, positions.begin() + 3 * id + 3);
    }
    const NeighborIndex nearest = knn_grid(positions, coarse, 1, default_cell_size(coarse));
    return nearest.indices;
}

}  // namespace mcnet
