#pragma once

#include "idm/bandwidth.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace idm {

/// Kernel density estimate at the chart's base point. The weight sum
/// scales like N (2 pi eps)^{d/2} q, so dividing recovers the sampling
/// density with respect to the manifold volume (doubling the sampling
/// rate doubles q; the estimate is invariant to the selected bandwidth).
inline double density_estimate(const LocalChart& chart, double d) {
    if (!(d > 0.0)) throw ParameterError("density_estimate: dimension must be positive");
    double norm = std::pow(2.0 * M_PI * chart.epsilon, d / 2.0);
    return chart.weight_sum / (static_cast<double>(chart.cloud_size) * norm);
}

struct RegressionResult {
    Matrix derivative;          // n x m
    bool rank_deficient = false;
};

/// Weighted least-squares derivative estimate: the minimizer G of
/// ||Y - X G^T||_F, returned as the n x m matrix G. Rank-deficient
/// normal equations fall back to an eigenvalue-truncated pseudo-inverse
/// (threshold lambda_max * 1e-8) and are flagged.
inline RegressionResult estimate_derivative(const LocalChart& chart) {
    if (!chart.has_features())
        throw ParameterError("estimate_derivative: chart has no feature targets");
    const Index m = chart.X.cols();
    Matrix A = chart.X.transpose() * chart.X;       // m x m
    Matrix B = chart.X.transpose() * chart.Y;       // m x n

    Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
    if (eig.info() != Eigen::Success)
        throw SolverError("estimate_derivative: eigendecomposition of X^T X failed");
    const Vector& lam = eig.eigenvalues();          // ascending
    double lmax = lam(m - 1);
    double cutoff = lmax * 1e-8;

    RegressionResult r;
    Vector inv(m);
    for (Index j = 0; j < m; ++j) {
        if (lam(j) > cutoff && lam(j) > 0.0) {
            inv(j) = 1.0 / lam(j);
        } else {
            inv(j) = 0.0;
            r.rank_deficient = true;
        }
    }
    // G^T = A^+ B
    Matrix Gt = eig.eigenvectors() * (inv.asDiagonal() * (eig.eigenvectors().transpose() * B));
    r.derivative = Gt.transpose();
    return r;
}

/// Correlation estimate (1/eps) Y^T X. Converges to the derivative only
/// along tangent directions; kept as a diagnostic against the regression
/// estimate (its orthogonal component vanishes at rate eps).
inline Matrix correlation_derivative(const LocalChart& chart) {
    if (!chart.has_features())
        throw ParameterError("correlation_derivative: chart has no feature targets");
    return (chart.Y.transpose() * chart.X) / chart.epsilon;
}

/// Per-point outputs of the auto-tuned derivative sweep.
struct DerivativeField {
    std::vector<Matrix> derivs;       // n x m per point
    Vector local_dim;                 // d(i)
    Vector density;                   // q(i)
    Vector epsilons;                  // selected bandwidth per point
    Vector weight_sums;               // D(i) at the selected bandwidth
    std::vector<unsigned char> rank_deficient;

    Index size() const { return local_dim.size(); }
};

struct FieldParams {
    int bandwidth_grid = 100;        // L
    ScanMode mode = ScanMode::Simple;
};

/// Runs the bandwidth sweep, density estimate and regression at every
/// point. Feature targets stay in the original feature space no matter
/// which iteration's coordinates the cloud holds.
inline DerivativeField estimate_field(const PointCloud& cloud, const FeatureSet& features,
                                      const NeighborGraph& graph,
                                      const FieldParams& params = {}) {
    if (features.size() != cloud.size())
        throw ShapeError("estimate_field: feature rows do not match cloud");
    const Index n = cloud.size();
    DerivativeField f;
    f.derivs.resize(static_cast<size_t>(n));
    f.local_dim.resize(n);
    f.density.resize(n);
    f.epsilons.resize(n);
    f.weight_sums.resize(n);
    f.rank_deficient.assign(static_cast<size_t>(n), 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (Index i = 0; i < n; ++i) {
        BandwidthScan scan = bandwidth_scan(cloud, graph, i, params.bandwidth_grid, params.mode);
        LocalChart chart = build_chart(cloud, graph, i, scan.selected_epsilon, &features);
        RegressionResult reg = estimate_derivative(chart);
        f.derivs[static_cast<size_t>(i)] = std::move(reg.derivative);
        f.local_dim(i) = scan.selected_dim;
        f.density(i) = density_estimate(chart, scan.selected_dim);
        f.epsilons(i) = scan.selected_epsilon;
        f.weight_sums(i) = chart.weight_sum;
        f.rank_deficient[static_cast<size_t>(i)] = reg.rank_deficient ? 1 : 0;
    }
    return f;
}

} // namespace idm
