#include <catch2/catch.hpp>

#include "idm/flow.hpp"

#include <random>

using namespace idm;

namespace {

Matrix random_spd(Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix g(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            g(i, j) = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0) - 0.5;
    return g * g.transpose() + 0.5 * Matrix::Identity(d, d);
}

} // namespace

TEST_CASE("product block system contracts the irrelevant factor") {
    Matrix gN = random_spd(2, 1);
    Matrix gP = random_spd(2, 2);
    FlowState st;
    st.g = Matrix::Zero(4, 4);
    st.g.topLeftCorner(2, 2) = gN;
    st.g.bottomRightCorner(2, 2) = gP;
    st.dh = Matrix::Zero(2, 4);
    st.dh(0, 0) = 1.0;
    st.dh(1, 1) = 1.0;  // DH^T DH = diag(I, 0)
    st.dt = 1e-3;

    auto traj = flow_integrate(st, 1000, FlowScheme::Euler);
    const Matrix& gT = traj.back();
    // feature block untouched, bitwise
    REQUIRE((gT.topLeftCorner(2, 2) - gN).cwiseAbs().maxCoeff() <= 1e-12);
    // irrelevant block decays like exp(-t)
    Matrix expected = std::exp(-1.0) * gP;
    REQUIRE((gT.bottomRightCorner(2, 2) - expected).norm() / expected.norm() < 0.02);
}

TEST_CASE("identity derivative is an equilibrium") {
    FlowState st;
    st.g = random_spd(3, 3);
    st.dh = Matrix::Identity(3, 3);
    st.dt = 1e-2;
    auto traj = flow_integrate(st, 50, FlowScheme::Euler);
    REQUIRE((traj.back() - st.g).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("multiplicative and euler steps agree to second order") {
    FlowState st;
    st.g = random_spd(4, 5);
    std::mt19937_64 rng(8);
    st.dh = Matrix(3, 4);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j)
            st.dh(i, j) = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0) - 0.5;

    auto one_step_diff = [&](double dt) {
        FlowState s = st;
        s.dt = dt;
        Matrix ge = flow_integrate(s, 1, FlowScheme::Euler).back();
        Matrix gm = flow_integrate(s, 1, FlowScheme::Multiplicative).back();
        return (ge - gm).norm();
    };
    double d1 = one_step_diff(1e-2);
    double d2 = one_step_diff(5e-3);
    REQUIRE(d1 / d2 == Approx(4.0).margin(1.0));
}

TEST_CASE("multiplicative scheme preserves positive definiteness") {
    FlowState st;
    st.g = random_spd(3, 9);
    st.dh = Matrix::Zero(1, 3);
    st.dh(0, 0) = 1.0;
    st.dt = 0.05;
    auto traj = flow_integrate(st, 200, FlowScheme::Multiplicative);
    for (const auto& g : traj) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
        REQUIRE(eig.eigenvalues()(0) > 0.0);
        REQUIRE((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("non-spd input is rejected") {
    FlowState st;
    st.g = Matrix::Identity(2, 2);
    st.g(1, 1) = -1.0;
    st.dh = Matrix::Identity(2, 2);
    REQUIRE_THROWS_AS(flow_integrate(st, 1), NumericalError);

    FlowState asym;
    asym.g = Matrix::Identity(2, 2);
    asym.g(0, 1) = 0.5;
    asym.dh = Matrix::Identity(2, 2);
    REQUIRE_THROWS_AS(flow_integrate(asym, 1), ParameterError);
}
