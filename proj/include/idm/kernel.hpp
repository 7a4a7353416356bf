#pragma once

#include "idm/derivative.hpp"

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace idm {

/// Blend per Algorithm-style d_H = (1-tau) d + tau ||DH dx||; Covariance
/// is the Mahalanobis form sqrt((1-tau) d^2 + tau ||DH dx||^2) implied by
/// the covariance matrix ((1-tau) I + tau DH^T DH)^{-1}. The two differ;
/// Blend is the operational default.
enum class DistanceForm { Blend, Covariance };

/// Feature-biased distances aligned entry-for-entry with a NeighborGraph.
struct AnisotropicDistance {
    Matrix values;   // N x k
    double tau = 0.0;
    DistanceForm form = DistanceForm::Blend;
};

inline AnisotropicDistance anisotropic_distance(const PointCloud& cloud,
                                                const NeighborGraph& graph,
                                                const DerivativeField& derivs, double tau,
                                                DistanceForm form = DistanceForm::Blend) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ParameterError("anisotropic_distance: tau must be in [0,1]");
    if (derivs.size() != cloud.size())
        throw ShapeError("anisotropic_distance: derivative field does not match cloud");
    const Index n = cloud.size();
    const int k = graph.k();

    AnisotropicDistance out;
    out.tau = tau;
    out.form = form;
    out.values.resize(n, k);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (Index i = 0; i < n; ++i) {
        const Matrix& DH = derivs.derivs[static_cast<size_t>(i)];
        const auto xi = cloud.points.row(i);
        for (int j = 0; j < k; ++j) {
            double d = graph.distances(i, j);
            double feat = (DH * (cloud.points.row(graph.indices(i, j)) - xi).transpose()).norm();
            if (form == DistanceForm::Blend)
                out.values(i, j) = (1.0 - tau) * d + tau * feat;
            else
                out.values(i, j) = std::sqrt((1.0 - tau) * d * d + tau * feat * feat);
        }
    }
    return out;
}

/// Ad hoc global bandwidth: mean of the squared distances to the k2
/// nearest neighbors (self term included), averaged over the data set.
inline double global_bandwidth(const AnisotropicDistance& dist, int k2) {
    const Index n = dist.values.rows();
    const Index k = dist.values.cols();
    if (k2 < 1 || k2 > k) throw ParameterError("global_bandwidth: k2 must be in [1, k]");
    double sum = 0.0;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < k2; ++j)
            sum += dist.values(i, j) * dist.values(i, j);
    double eps = sum / (static_cast<double>(n) * static_cast<double>(k2));
    if (!(eps > 0.0))
        throw DegenerateGeometryError("global_bandwidth: all pairwise distances are zero");
    return eps;
}

enum class SymmetrizeRule { Average, Sum };

/// Sparse symmetric kernel on the union of the k-NN stencils.
struct SparseKernel {
    SparseMatrix entries;   // N x N
    double epsilon = 0.0;
    double tau = 0.0;
};

/// J(i,j) = exp(-d_H(i,j)^2 / (2 eps)) placed on the k-NN stencil, then
/// symmetrized: Average keeps (J + J^T)/2 (one-sided entries halve), Sum
/// keeps J + J^T. Entries below 1e-15 are dropped.
inline SparseKernel assemble_kernel(const AnisotropicDistance& dist, double epsilon,
                                    const NeighborGraph& graph,
                                    SymmetrizeRule rule = SymmetrizeRule::Average) {
    if (!(epsilon > 0.0)) throw ParameterError("assemble_kernel: epsilon must be positive");
    const Index n = dist.values.rows();
    const int k = graph.k();
    const double half = (rule == SymmetrizeRule::Average) ? 0.5 : 1.0;

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(n) * static_cast<size_t>(k) * 2);
    for (Index i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            double d = dist.values(i, j);
            double v = half * std::exp(-d * d / (2.0 * epsilon));
            Index col = graph.indices(i, j);
            trips.emplace_back(static_cast<int>(i), static_cast<int>(col), v);
            trips.emplace_back(static_cast<int>(col), static_cast<int>(i), v);
        }
    }
    SparseKernel kern;
    kern.epsilon = epsilon;
    kern.tau = dist.tau;
    kern.entries.resize(static_cast<int>(n), static_cast<int>(n));
    kern.entries.setFromTriplets(trips.begin(), trips.end());
    kern.entries.prune([](Index, Index, double v) { return v >= 1e-15; });
    kern.entries.makeCompressed();
    return kern;
}

} // namespace idm
