#include <catch2/catch.hpp>

#include "idm/fixtures.hpp"
#include "idm/knn.hpp"

#include <random>

using namespace idm;

namespace {

// Independent oracle: full sort of every candidate by (distance, index),
// self forced first.
NeighborGraph knn_oracle(const PointCloud& cloud, int k) {
    const Index n = cloud.size();
    NeighborGraph g;
    g.indices.resize(n, k);
    g.distances.resize(n, k);
    for (Index i = 0; i < n; ++i) {
        std::vector<std::pair<double, Index>> all;
        for (Index j = 0; j < n; ++j) {
            if (j == i) continue;
            all.emplace_back((cloud.points.row(j) - cloud.points.row(i)).squaredNorm(), j);
        }
        std::sort(all.begin(), all.end());
        g.indices(i, 0) = static_cast<int>(i);
        g.distances(i, 0) = 0.0;
        for (int r = 1; r < k; ++r) {
            g.indices(i, r) = static_cast<int>(all[static_cast<size_t>(r - 1)].second);
            g.distances(i, r) = std::sqrt(all[static_cast<size_t>(r - 1)].first);
        }
    }
    return g;
}

void require_identical(const NeighborGraph& a, const NeighborGraph& b) {
    REQUIRE(a.indices.rows() == b.indices.rows());
    REQUIRE(a.k() == b.k());
    REQUIRE((a.indices.array() == b.indices.array()).all());
    REQUIRE((a.distances.array() == b.distances.array()).all());
}

} // namespace

TEST_CASE("collinear points") {
    Matrix pts(3, 1);
    pts << 0.0, 1.0, 3.0;
    NeighborGraph g = knn(PointCloud{pts}, 2);
    REQUIRE(g.indices(1, 0) == 1);
    REQUIRE(g.indices(1, 1) == 0);
    REQUIRE(g.distances(1, 1) == 1.0);
}

TEST_CASE("k equals one keeps only the self neighbor") {
    Matrix pts = Matrix::Random(7, 3);
    NeighborGraph g = knn(PointCloud{pts}, 1);
    for (Index i = 0; i < 7; ++i) {
        REQUIRE(g.indices(i, 0) == static_cast<int>(i));
        REQUIRE(g.distances(i, 0) == 0.0);
    }
}

TEST_CASE("parameter errors") {
    Matrix pts = Matrix::Random(5, 2);
    REQUIRE_THROWS_AS(knn(PointCloud{pts}, 6), ParameterError);
    REQUIRE_THROWS_AS(knn(PointCloud{pts}, 0), ParameterError);
}

TEST_CASE("matches the exhaustive oracle on the circle") {
    Fixture f = circle(2000);
    NeighborGraph g = knn(f.cloud, 500);
    require_identical(g, knn_oracle(f.cloud, 500));
}

TEST_CASE("matches the oracle on random clouds with duplicates") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 3; ++trial) {
        Index n = 150 + 50 * trial;
        Matrix pts(n, 3);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < 3; ++j)
                pts(i, j) = std::floor(10.0 * static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0)) / 10.0;
        PointCloud cloud{pts};
        int k = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n));
        require_identical(knn(cloud, k), knn_oracle(cloud, k));
    }
}

TEST_CASE("distance columns are sane") {
    Fixture f = sphere(300, 5);
    NeighborGraph g = knn(f.cloud, 40);
    REQUIRE((g.distances.col(0).array() == 0.0).all());
    for (Index i = 0; i < g.size(); ++i)
        for (int j = 1; j < g.k(); ++j)
            REQUIRE(g.distances(i, j) >= g.distances(i, j - 1));
}
