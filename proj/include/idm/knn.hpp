#pragma once

#include "idm/types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace idm {

namespace detail {

// Neighbors of row i, excluding i itself, ordered by (distance, index).
// Exact search: every candidate is scored with the same squaredNorm
// reduction, so results are reproducible across thread counts.
inline void knn_row(const Matrix& pts, Index i, int count,
                    std::vector<std::pair<double, Index>>& scratch,
                    int* idx_out, double* dist_out) {
    const Index n = pts.rows();
    scratch.clear();
    scratch.reserve(static_cast<size_t>(n - 1));
    for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        scratch.emplace_back((pts.row(j) - pts.row(i)).squaredNorm(), j);
    }
    auto cmp = [](const std::pair<double, Index>& a, const std::pair<double, Index>& b) {
        return a.first < b.first || (a.first == b.first && a.second < b.second);
    };
    const auto m = static_cast<size_t>(count);
    if (m < scratch.size()) {
        std::nth_element(scratch.begin(), scratch.begin() + static_cast<long>(m),
                         scratch.end(), cmp);
        scratch.resize(m);
    }
    std::sort(scratch.begin(), scratch.end(), cmp);
    for (size_t r = 0; r < scratch.size(); ++r) {
        idx_out[r] = static_cast<int>(scratch[r].second);
        dist_out[r] = std::sqrt(scratch[r].first);
    }
}

} // namespace detail

/// Exact Euclidean k-nearest neighbors, self included as the first entry
/// of each row at distance 0. Ties broken by ascending index.
inline NeighborGraph knn(const PointCloud& cloud, int k) {
    const Index n = cloud.size();
    if (k < 1) throw ParameterError("knn: k must be at least 1");
    if (k > n) throw ParameterError("knn: k = " + std::to_string(k) +
                                    " exceeds point count " + std::to_string(n));
    NeighborGraph g;
    g.indices.setZero(n, k);
    g.distances.setZero(n, k);

#ifdef _OPENMP
#pragma omp parallel
#endif
    {
        std::vector<std::pair<double, Index>> scratch;
        std::vector<int> idx(static_cast<size_t>(std::max(0, k - 1)));
        std::vector<double> dist(static_cast<size_t>(std::max(0, k - 1)));
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
        for (Index i = 0; i < n; ++i) {
            g.indices(i, 0) = static_cast<int>(i);
            g.distances(i, 0) = 0.0;
            if (k > 1) {
                detail::knn_row(cloud.points, i, k - 1, scratch, idx.data(), dist.data());
                for (int r = 0; r < k - 1; ++r) {
                    g.indices(i, r + 1) = idx[static_cast<size_t>(r)];
                    g.distances(i, r + 1) = dist[static_cast<size_t>(r)];
                }
            }
        }
    }
    return g;
}

/// Nearest `count` rows of `pts` to an arbitrary query point, as
/// (index, distance) pairs ordered like a knn row (no self handling).
inline std::vector<std::pair<int, double>> nearest_to(const Matrix& pts,
                                                      const Eigen::Ref<const Eigen::RowVectorXd>& q,
                                                      int count) {
    const Index n = pts.rows();
    if (count < 1 || count > n) throw ParameterError("nearest_to: bad neighbor count");
    std::vector<std::pair<double, Index>> all;
    all.reserve(static_cast<size_t>(n));
    for (Index j = 0; j < n; ++j)
        all.emplace_back((pts.row(j) - q).squaredNorm(), j);
    auto cmp = [](const std::pair<double, Index>& a, const std::pair<double, Index>& b) {
        return a.first < b.first || (a.first == b.first && a.second < b.second);
    };
    std::nth_element(all.begin(), all.begin() + count, all.end(), cmp);
    all.resize(static_cast<size_t>(count));
    std::sort(all.begin(), all.end(), cmp);
    std::vector<std::pair<int, double>> out;
    out.reserve(all.size());
    for (auto& [d2, j] : all) out.emplace_back(static_cast<int>(j), std::sqrt(d2));
    return out;
}

} // namespace idm
