#pragma once

#include "idm/common.hpp"

#include <Eigen/Eigenvalues>

#include <string>
#include <vector>

namespace idm {

/// Frozen-coefficient state of the metric flow
///   dg/dt = -g + (1/2)(DH^T DH g + g DH^T DH).
/// Used as a reference oracle for the product-manifold contraction law;
/// not part of the data pipeline.
struct FlowState {
    Matrix g;    // d x d symmetric positive definite
    Matrix dh;   // feature derivative, n x d (held fixed per step)
    double dt = 1e-3;
};

enum class FlowScheme {
    Euler,           // g += dt (-g + (Q g + g Q)/2)
    Multiplicative,  // g <- B g B with B = ((1-dt) I + dt Q)^{1/2}
};

namespace detail {

inline void check_spd(const Matrix& g, int step) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success || eig.eigenvalues()(0) <= 0.0)
        throw NumericalError("flow_integrate: metric not positive definite at step " +
                             std::to_string(step));
}

inline Matrix sqrt_spd(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
    if (eig.info() != Eigen::Success || eig.eigenvalues()(0) < 0.0)
        throw NumericalError("flow_integrate: discretization matrix not positive semidefinite");
    return eig.eigenvectors() * eig.eigenvalues().array().sqrt().matrix().asDiagonal() *
           eig.eigenvectors().transpose();
}

} // namespace detail

/// Integrates the flow for `steps` steps and returns the metric after each
/// one (entry 0 is the initial state). Symmetry and positive definiteness
/// are verified at every accepted step.
inline std::vector<Matrix> flow_integrate(const FlowState& state, int steps,
                                          FlowScheme scheme = FlowScheme::Euler) {
    if (steps < 0) throw ParameterError("flow_integrate: negative step count");
    const Index d = state.g.rows();
    if (state.g.cols() != d) throw ShapeError("flow_integrate: metric must be square");
    if ((state.g - state.g.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw ParameterError("flow_integrate: metric must be symmetric");
    if (state.dh.cols() != d) throw ShapeError("flow_integrate: DH column count mismatch");
    if (!(state.dt > 0.0)) throw ParameterError("flow_integrate: dt must be positive");

    Matrix q = state.dh.transpose() * state.dh;
    Matrix b;
    if (scheme == FlowScheme::Multiplicative)
        b = detail::sqrt_spd(((1.0 - state.dt) * Matrix::Identity(d, d) + state.dt * q).eval());

    std::vector<Matrix> traj;
    traj.reserve(static_cast<size_t>(steps) + 1);
    Matrix g = state.g;
    detail::check_spd(g, 0);
    traj.push_back(g);
    for (int step = 1; step <= steps; ++step) {
        if (scheme == FlowScheme::Euler) {
            Matrix rhs = -g + 0.5 * (q * g + g * q);
            g += state.dt * rhs;
        } else {
            g = b * g * b;
        }
        g = 0.5 * (g + g.transpose());
        detail::check_spd(g, step);
        traj.push_back(g);
    }
    return traj;
}

} // namespace idm
