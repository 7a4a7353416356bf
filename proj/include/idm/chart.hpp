#pragma once

#include "idm/types.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <optional>

namespace idm {

/// Weighted local chart at one base point: Gaussian weights on the k-NN
/// stencil and the weighted difference matrices X (and Y when feature
/// targets are attached). Row j of X is sqrt(w_j/D) * (x_{I(j)} - x_i),
/// so row 0 (the self term, w = 1) is identically zero.
struct LocalChart {
    Index base_index = -1;
    double epsilon = 0.0;
    Index cloud_size = 0;     // N of the originating cloud
    Vector weights;           // k, weights(0) == 1
    double weight_sum = 0.0;  // D = sum of weights, >= 1
    Matrix X;                 // k x m
    Matrix Y;                 // k x n, empty when no features attached

    // filled by decompose()
    Vector singular_values;   // descending, min(k, m)
    Matrix right_vectors;     // m x min(k, m), columns are ambient directions

    bool has_features() const { return Y.size() > 0; }
    bool has_svd() const { return singular_values.size() > 0; }
};

inline LocalChart build_chart(const PointCloud& cloud, const NeighborGraph& graph,
                              Index i, double epsilon,
                              const FeatureSet* features = nullptr) {
    if (!(epsilon > 0.0)) throw ParameterError("build_chart: epsilon must be positive");
    if (i < 0 || i >= graph.size()) throw ParameterError("build_chart: base index out of range");
    const int k = graph.k();
    const Index m = cloud.dim();

    LocalChart c;
    c.base_index = i;
    c.epsilon = epsilon;
    c.cloud_size = cloud.size();
    c.weights.resize(k);
    for (int j = 0; j < k; ++j) {
        double d = graph.distances(i, j);
        c.weights(j) = std::exp(-d * d / (2.0 * epsilon));
    }
    c.weight_sum = c.weights.sum();

    c.X.resize(k, m);
    const auto xi = cloud.points.row(i);
    for (int j = 0; j < k; ++j) {
        double scale = std::sqrt(c.weights(j) / c.weight_sum);
        c.X.row(j) = scale * (cloud.points.row(graph.indices(i, j)) - xi);
    }
    if (features) {
        if (features->size() != cloud.size())
            throw ShapeError("build_chart: feature rows do not match cloud");
        const Index n = features->dim();
        c.Y.resize(k, n);
        const auto yi = features->values.row(i);
        for (int j = 0; j < k; ++j) {
            double scale = std::sqrt(c.weights(j) / c.weight_sum);
            c.Y.row(j) = scale * (features->values.row(graph.indices(i, j)) - yi);
        }
    }
    return c;
}

/// Computes and caches the thin SVD of X (singular values descending,
/// right vectors as ambient-space directions).
inline void decompose(LocalChart& chart) {
    if (chart.has_svd()) return;
    Eigen::BDCSVD<Matrix> svd(chart.X, Eigen::ComputeThinV);
    chart.singular_values = svd.singularValues();
    chart.right_vectors = svd.matrixV();
}

/// Orthonormal estimate of the tangent space at the chart's base point.
struct TangentFrame {
    Matrix basis;            // d x m, rows orthonormal
    Vector residual_values;  // trailing singular values
    bool ambiguous = false;  // sigma_d ~ sigma_{d+1}: span not well determined
};

inline TangentFrame tangent_frame(LocalChart& chart, int d) {
    decompose(chart);
    const Index nsv = chart.singular_values.size();
    if (d < 1 || d > nsv)
        throw ParameterError("tangent_frame: dimension out of range");
    TangentFrame f;
    f.basis = chart.right_vectors.leftCols(d).transpose();
    f.residual_values = chart.singular_values.tail(nsv - d);
    if (d < nsv) {
        double sd = chart.singular_values(d - 1);
        double sn = chart.singular_values(d);
        f.ambiguous = (sd - sn) <= 1e-8 * std::max(1.0, sd);
    }
    return f;
}

} // namespace idm
