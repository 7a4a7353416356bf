#include <catch2/catch.hpp>

#include "idm/align.hpp"
#include "idm/fixtures.hpp"
#include "idm/pipeline.hpp"

using namespace idm;

namespace {

IdmParams small_params() {
    IdmParams p;
    p.k = 120;
    p.k2 = 16;
    p.bandwidth_grid = 60;
    p.modes = 30;
    p.iterations = 1;
    return p;
}

} // namespace

TEST_CASE("parameter validation") {
    IdmParams p = small_params();
    p.tau = 1.0;
    REQUIRE_THROWS_AS(p.validate(500), ParameterError);
    p.tau = 0.5;
    p.k = 600;
    REQUIRE_THROWS_AS(p.validate(500), ParameterError);
    p.k = 120;
    p.k2 = 200;
    REQUIRE_THROWS_AS(p.validate(500), ParameterError);
}

TEST_CASE("iterated identity on a small circle") {
    Fixture f = circle(500);
    IdmParams p = small_params();
    DiffusionMapResult first = run_diffusion_map(f.cloud, p);

    PointCloud embedded{first.embedding.coords};
    DiffusionMapResult second = run_diffusion_map(embedded, p);

    // eigenvalues reproduce within 5%
    for (int r = 1; r <= 6; ++r)
        REQUIRE(second.decomposition.lambda(r) ==
                Approx(first.decomposition.lambda(r)).epsilon(0.05));

    // eigenfunctions reproduce after per-block alignment
    AlignmentResult align =
        align_blocks(second.decomposition.phi.rightCols(second.decomposition.modes() - 1),
                     first.decomposition.phi.rightCols(first.decomposition.modes() - 1),
                     first.decomposition.lambda.tail(first.decomposition.modes() - 1), 6, 0.05);
    for (int r = 0; r < 6; ++r) REQUIRE(align.correlations(r) > 0.99);
}

TEST_CASE("tau zero idm run reproduces the diffusion map and records artifacts") {
    Fixture f = circle(400);
    IdmParams p = small_params();
    p.tau = 0.0;
    p.iterations = 2;
    FeatureSet identity{f.cloud.points};
    IdmTrajectory traj = idm_run(f.cloud, identity, p);
    REQUIRE(traj.embeddings.size() == 3);
    REQUIRE(traj.embeddings[0].iteration == 0);
    REQUIRE((traj.embeddings[0].coords.array() == f.cloud.points.array()).all());
    REQUIRE(traj.iterations.size() == 2);
    for (const auto& it : traj.iterations) {
        REQUIRE(it.global_epsilon > 0.0);
        REQUIRE(it.s == Approx(10.0 * it.global_epsilon));
        REQUIRE(it.check.xi0_error < 1e-6);
        REQUIRE(it.check.phi0_cv < 0.05);
        REQUIRE(it.check.max_norm_error < 1e-10);
    }

    DiffusionMapResult dm = run_diffusion_map(f.cloud, p);
    REQUIRE((traj.embeddings[1].coords.array() == dm.embedding.coords.array()).all());
}

TEST_CASE("determinism under a fixed seed") {
    Fixture f = annulus(400, 3);
    IdmParams p = small_params();
    p.tau = 0.5;
    p.iterations = 2;
    p.modes = 20;
    IdmTrajectory t1 = idm_run(f.cloud, f.features.at("radius"), p);
    IdmTrajectory t2 = idm_run(f.cloud, f.features.at("radius"), p);
    REQUIRE(t1.embeddings.size() == t2.embeddings.size());
    for (size_t i = 0; i < t1.embeddings.size(); ++i)
        REQUIRE((t1.embeddings[i].coords.array() == t2.embeddings[i].coords.array()).all());
}

TEST_CASE("decoder on the identity task") {
    Fixture f = circle(400);
    IdmParams p = small_params();
    p.tau = 0.0;
    FeatureSet identity{f.cloud.points};
    IdmTrajectory traj = idm_run(f.cloud, identity, p);
    // the feature embedding is the same spectral problem
    DiffusionMapResult feat = run_diffusion_map(f.cloud, p);
    LinearFeatureDecoder dec = fit_decoder(traj, feat.embedding);
    REQUIRE(dec.residual < 1e-6);
}

TEST_CASE("random features admit no linear readout") {
    Fixture f = circle(400);
    IdmParams p = small_params();
    p.tau = 0.0;
    FeatureSet identity{f.cloud.points};
    IdmTrajectory traj = idm_run(f.cloud, identity, p);

    detail::Rng rng(77);
    Matrix noise(400, 3);
    for (Index i = 0; i < 400; ++i)
        for (Index j = 0; j < 3; ++j) noise(i, j) = rng.normal();
    LinearFeatureDecoder dec = fit_linear_decoder(traj.final_embedding().coords, noise);
    REQUIRE(dec.residual > 0.5);
}

TEST_CASE("fixed point residuals") {
    Fixture f = circle(600);
    FeatureSet same{f.cloud.points};
    double r_same = fixed_point_residual(f.cloud, same, 150, 60);
    REQUIRE(r_same < 0.1);

    FeatureSet doubled{(2.0 * f.cloud.points).eval()};
    double r_doubled = fixed_point_residual(f.cloud, doubled, 150, 60);
    REQUIRE(r_doubled == Approx(1.0).margin(0.2));
}

TEST_CASE("neighbor evolution starts from the euclidean neighbors") {
    Fixture f = annulus(400, 5);
    IdmParams p = small_params();
    p.tau = 0.5;
    p.modes = 20;
    IdmTrajectory traj = idm_run(f.cloud, f.features.at("radius"), p);
    auto evo = neighbor_evolution(traj, 7, 20);
    REQUIRE(evo.size() == traj.embeddings.size());
    NeighborGraph g = knn(f.cloud, 20);
    for (int j = 0; j < 20; ++j) REQUIRE(evo[0][static_cast<size_t>(j)] == g.indices(7, j));
    REQUIRE(evo[0][0] == 7);
}

TEST_CASE("cross-validation stop records residuals") {
    Fixture f = annulus(400, 11);
    IdmParams p = small_params();
    p.tau = 0.4;
    p.modes = 20;
    p.iterations = 3;
    p.cross_validation_stop = true;
    DiffusionMapResult feat = run_diffusion_map(PointCloud{f.features.at("radius").values}, [&] {
        IdmParams q = small_params();
        q.modes = 20;
        return q;
    }());
    IdmTrajectory traj = idm_run(f.cloud, f.features.at("radius"), p, &feat.embedding);
    REQUIRE(!traj.iterations.empty());
    for (const auto& it : traj.iterations) REQUIRE(std::isfinite(it.cv_residual));
}

TEST_CASE("stage errors carry iteration context") {
    // two tight clusters, far apart, with stencils that never cross
    Matrix pts(6, 2);
    pts << 0, 0, 0.01, 0, 0, 0.01, 100, 100, 100.01, 100, 100, 100.01;
    PointCloud cloud{pts};
    FeatureSet feat{pts};
    IdmParams p;
    p.k = 3;
    p.k2 = 2;
    p.bandwidth_grid = 20;
    p.modes = 3;
    p.iterations = 1;
    p.tau = 0.3;
    try {
        idm_run(cloud, feat, p);
        FAIL("expected connectivity error");
    } catch (const ConnectivityError& e) {
        REQUIRE(std::string(e.what()).find("iteration 1") != std::string::npos);
    }
}
