#include <catch2/catch.hpp>

#include "idm/fixtures.hpp"
#include "idm/kernel.hpp"
#include "idm/knn.hpp"

using namespace idm;

namespace {

DerivativeField constant_field(Index n, const Matrix& dh) {
    DerivativeField f;
    f.derivs.assign(static_cast<size_t>(n), dh);
    f.local_dim = Vector::Constant(n, 1.0);
    f.density = Vector::Constant(n, 1.0);
    f.epsilons = Vector::Constant(n, 1.0);
    f.rank_deficient.assign(static_cast<size_t>(n), 0);
    return f;
}

} // namespace

TEST_CASE("tau zero reduces to euclidean distances exactly") {
    Fixture f = annulus(300, 2);
    NeighborGraph g = knn(f.cloud, 40);
    DerivativeField field = constant_field(f.cloud.size(), Matrix::Random(1, 2));
    AnisotropicDistance d = anisotropic_distance(f.cloud, g, field, 0.0);
    REQUIRE((d.values.array() == g.distances.array()).all());
}

TEST_CASE("identity derivative keeps distances under full anisotropy") {
    // on a linear manifold with H = identity the feature term equals the
    // euclidean distance
    Matrix pts = Matrix::Random(200, 2);
    PointCloud cloud{pts};
    NeighborGraph g = knn(cloud, 30);
    DerivativeField field = constant_field(cloud.size(), Matrix::Identity(2, 2));
    AnisotropicDistance d = anisotropic_distance(cloud, g, field, 1.0);
    REQUIRE((d.values - g.distances).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("radial feature shrinks same-radius distances on the annulus") {
    Fixture f = annulus(2000, 7);
    NeighborGraph g = knn(f.cloud, 200);
    // analytic radial derivative as the field
    DerivativeField field;
    const Index n = f.cloud.size();
    field.derivs.resize(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) field.derivs[static_cast<size_t>(i)] = f.feature_gradients.at("radius")(i);
    field.local_dim = Vector::Constant(n, 2.0);
    field.density = Vector::Constant(n, 1.0);
    field.epsilons = Vector::Constant(n, 1.0);
    field.rank_deficient.assign(static_cast<size_t>(n), 0);

    AnisotropicDistance d = anisotropic_distance(f.cloud, g, field, 0.65);

    Index base = 0;
    double th0 = f.params(base, 0), r0 = f.params(base, 1);
    int same_radius = -1, same_angle = -1;
    for (int j = 1; j < g.k(); ++j) {
        Index nb = g.indices(base, j);
        double dth = std::abs(std::remainder(f.params(nb, 0) - th0, 2.0 * M_PI));
        double dr = std::abs(f.params(nb, 1) - r0);
        if (same_radius < 0 && dr < 0.02 && dth > 0.05) same_radius = j;
        if (same_angle < 0 && dth < 0.02 && dr > 0.05) same_angle = j;
    }
    REQUIRE(same_radius > 0);
    REQUIRE(same_angle > 0);
    // same-radius neighbors get closer than their euclidean distance ...
    REQUIRE(d.values(base, same_radius) < 0.6 * g.distances(base, same_radius));
    // ... while same-angle (radial) neighbors do not shrink meaningfully
    REQUIRE(d.values(base, same_angle) > 0.85 * g.distances(base, same_angle));
}

TEST_CASE("anisotropy ratio decreases monotonically in tau") {
    Fixture f = annulus(2000, 7);
    NeighborGraph g = knn(f.cloud, 200);
    DerivativeField field;
    const Index n = f.cloud.size();
    field.derivs.resize(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) field.derivs[static_cast<size_t>(i)] = f.feature_gradients.at("radius")(i);
    field.local_dim = Vector::Constant(n, 2.0);
    field.density = Vector::Constant(n, 1.0);
    field.epsilons = Vector::Constant(n, 1.0);
    field.rank_deficient.assign(static_cast<size_t>(n), 0);

    Index base = 3;
    double th0 = f.params(base, 0), r0 = f.params(base, 1);
    int same_radius = -1, same_angle = -1;
    for (int j = 1; j < g.k(); ++j) {
        Index nb = g.indices(base, j);
        double dth = std::abs(std::remainder(f.params(nb, 0) - th0, 2.0 * M_PI));
        double dr = std::abs(f.params(nb, 1) - r0);
        if (same_radius < 0 && dr < 0.02 && dth > 0.05) same_radius = j;
        if (same_angle < 0 && dth < 0.02 && dr > 0.05) same_angle = j;
    }
    double prev = std::numeric_limits<double>::infinity();
    for (double tau : {0.0, 0.3, 0.6, 0.9}) {
        AnisotropicDistance d = anisotropic_distance(f.cloud, g, field, tau);
        double ratio = d.values(base, same_radius) / d.values(base, same_angle);
        REQUIRE(ratio < prev);
        prev = ratio;
    }
}

TEST_CASE("global bandwidth hand computation") {
    Matrix pts(2, 1);
    pts << 0.0, 1.0;
    PointCloud cloud{pts};
    NeighborGraph g = knn(cloud, 2);
    DerivativeField field = constant_field(2, Matrix::Identity(1, 1));
    AnisotropicDistance d = anisotropic_distance(cloud, g, field, 0.0);
    REQUIRE(global_bandwidth(d, 2) == 0.5);

    AnisotropicDistance zero;
    zero.values = Matrix::Zero(4, 3);
    REQUIRE_THROWS_AS(global_bandwidth(zero, 3), DegenerateGeometryError);
    REQUIRE_THROWS_AS(global_bandwidth(d, 5), ParameterError);
}

TEST_CASE("global bandwidth scales quadratically with coordinates") {
    Fixture f = torus(20);
    NeighborGraph g = knn(f.cloud, 40);
    DerivativeField field = constant_field(f.cloud.size(), Matrix::Identity(3, 3));
    AnisotropicDistance d1 = anisotropic_distance(f.cloud, g, field, 0.0);
    double e1 = global_bandwidth(d1, 32);
    REQUIRE(e1 > 0.0);

    PointCloud doubled{(2.0 * f.cloud.points).eval()};
    NeighborGraph g2 = knn(doubled, 40);
    AnisotropicDistance d2 = anisotropic_distance(doubled, g2, field, 0.0);
    REQUIRE(global_bandwidth(d2, 32) == Approx(4.0 * e1).epsilon(1e-12));

    // identity feature: tau has no effect on the bandwidth
    AnisotropicDistance d3 = anisotropic_distance(f.cloud, g, field, 1.0);
    REQUIRE(global_bandwidth(d3, 32) == Approx(e1).epsilon(1e-10));
}

TEST_CASE("kernel entry at distance sqrt(2 eps)") {
    double eps = 0.37;
    Matrix pts(2, 1);
    pts << 0.0, std::sqrt(2.0 * eps);
    PointCloud cloud{pts};
    NeighborGraph g = knn(cloud, 2);
    DerivativeField field = constant_field(2, Matrix::Identity(1, 1));
    AnisotropicDistance d = anisotropic_distance(cloud, g, field, 0.0);
    SparseKernel kern = assemble_kernel(d, eps, g);
    REQUIRE(kern.entries.coeff(0, 1) == Approx(std::exp(-1.0)).epsilon(1e-14));
    REQUIRE(kern.entries.coeff(0, 0) == 1.0);
    REQUIRE(kern.entries.coeff(1, 1) == 1.0);
}

TEST_CASE("one-sided stencil entries are halved") {
    // 0 and 1 are mutual neighbors; 2 lists 1 but 1 does not list 2
    Matrix pts(3, 1);
    pts << 0.0, 1.0, 2.5;
    PointCloud cloud{pts};
    NeighborGraph g = knn(cloud, 2);
    REQUIRE(g.indices(1, 1) == 0);
    REQUIRE(g.indices(2, 1) == 1);
    AnisotropicDistance d;
    d.values = g.distances;
    double eps = 10.0;
    SparseKernel kern = assemble_kernel(d, eps, g);
    double full = std::exp(-1.5 * 1.5 / (2.0 * eps));
    REQUIRE(kern.entries.coeff(1, 2) == Approx(0.5 * full).epsilon(1e-14));
    REQUIRE(kern.entries.coeff(2, 1) == Approx(0.5 * full).epsilon(1e-14));

    SparseKernel sum = assemble_kernel(d, eps, g, SymmetrizeRule::Sum);
    REQUIRE(sum.entries.coeff(1, 2) == Approx(full).epsilon(1e-14));
    REQUIRE(sum.entries.coeff(0, 0) == 2.0);
}

TEST_CASE("tau zero kernel matches the dense isotropic oracle") {
    Fixture f = circle(400);
    NeighborGraph g = knn(f.cloud, 120);
    AnisotropicDistance d;
    d.values = g.distances;
    // bandwidth small enough that the kernel support sits inside the stencil
    double rk = g.distances.col(g.k() - 1).minCoeff();
    double eps = rk * rk / 80.0;
    SparseKernel kern = assemble_kernel(d, eps, g);

    Matrix dense(400, 400);
    for (Index i = 0; i < 400; ++i)
        for (Index j = 0; j < 400; ++j) {
            double dist2 = (f.cloud.points.row(i) - f.cloud.points.row(j)).squaredNorm();
            double v = std::exp(-dist2 / (2.0 * eps));
            dense(i, j) = v < 1e-15 ? 0.0 : v;
        }
    Matrix sparse_full = Matrix(kern.entries);
    REQUIRE((sparse_full - dense).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("kernel invariants on fixtures") {
    for (auto* fx : {"annulus", "sphere"}) {
        Fixture f = std::string(fx) == "annulus" ? annulus(500, 3) : sphere(500, 3);
        NeighborGraph g = knn(f.cloud, 60);
        AnisotropicDistance d;
        d.values = g.distances;
        double eps = global_bandwidth(d, 16);
        SparseKernel kern = assemble_kernel(d, eps, g);
        SparseMatrix diff = SparseMatrix(kern.entries.transpose()) - kern.entries;
        REQUIRE(Matrix(diff).cwiseAbs().maxCoeff() < 1e-14);
        Matrix full(kern.entries);
        REQUIRE(full.minCoeff() >= 0.0);
        REQUIRE(full.maxCoeff() <= 1.0);
        for (Index i = 0; i < f.cloud.size(); ++i) {
            REQUIRE(full(i, i) == 1.0);
            REQUIRE(full.row(i).cwiseAbs().sum() > 0.0);
        }
    }
}

TEST_CASE("covariance distance form") {
    Matrix pts = Matrix::Random(100, 2);
    PointCloud cloud{pts};
    NeighborGraph g = knn(cloud, 20);
    Matrix dh(1, 2);
    dh << 1.0, 0.0;
    DerivativeField field = constant_field(cloud.size(), dh);
    double tau = 0.4;
    AnisotropicDistance blend = anisotropic_distance(cloud, g, field, tau, DistanceForm::Blend);
    AnisotropicDistance cov = anisotropic_distance(cloud, g, field, tau, DistanceForm::Covariance);
    for (Index i = 0; i < 5; ++i) {
        for (int j = 1; j < 5; ++j) {
            double d = g.distances(i, j);
            Eigen::RowVector2d delta =
                cloud.points.row(g.indices(i, j)) - cloud.points.row(i);
            double feat = std::abs(delta(0));
            REQUIRE(blend.values(i, j) == Approx((1 - tau) * d + tau * feat).epsilon(1e-12));
            REQUIRE(cov.values(i, j) ==
                    Approx(std::sqrt((1 - tau) * d * d + tau * feat * feat)).epsilon(1e-12));
        }
    }
}
