#pragma once

#include "idm/chart.hpp"

#include <cmath>
#include <limits>

namespace idm {

enum class ScanMode { Simple, Robust };

/// Log-spaced bandwidth sweep at one base point. d1 entries are assigned
/// to the left endpoint of each finite-difference pair, so d1, alpha, d2
/// and d_ave have L-1 rows and the agreement metric has L-2 (its own
/// finite differences need one more lookahead).
struct BandwidthScan {
    Index base_index = -1;
    ScanMode mode = ScanMode::Simple;
    Vector eps_grid;         // L, strictly increasing
    Vector weight_sums;      // D at each grid point
    Vector d1;               // L-1
    Matrix singular_values;  // L x min(k,m), robust mode only
    Matrix alpha;            // (L-1) x min(k,m), NaN where undefined
    Vector d2;               // L-1, robust mode only
    Vector d_ave;            // L-1, robust mode only
    Vector metric;           // L-2, robust mode only, NaN where undefined
    Index selected = -1;     // row into d1 (and alpha/d2/d_ave)
    double selected_epsilon = 0.0;  // eps_grid(selected + 1)
    double selected_dim = 0.0;
};

namespace detail {

inline Vector log_uniform_grid(double eps_min, double eps_max, int L) {
    Vector grid(L);
    double a = std::log(eps_min), b = std::log(eps_max);
    for (int l = 1; l <= L; ++l)
        grid(l - 1) = std::exp(a + (static_cast<double>(l) / L) * (b - a));
    return grid;
}

} // namespace detail

/// Per-singular-value scaling laws alpha(l, j) = dlog(sigma_j)/dlog(eps)
/// by finite differences over consecutive grid points. Entries touching a
/// zero singular value are NaN (exactly-zero case of linear manifolds).
inline Matrix scaling_laws(const Vector& eps_grid, const Matrix& singular_values) {
    const Index L = eps_grid.size();
    if (L < 2 || singular_values.rows() != L)
        throw ParameterError("scaling_laws: need singular values on at least 2 grid points");
    const Index nsv = singular_values.cols();
    Matrix alpha(L - 1, nsv);
    for (Index l = 0; l + 1 < L; ++l) {
        double dle = std::log(eps_grid(l + 1)) - std::log(eps_grid(l));
        for (Index j = 0; j < nsv; ++j) {
            double s0 = singular_values(l, j), s1 = singular_values(l + 1, j);
            if (s0 <= 0.0 || s1 <= 0.0)
                alpha(l, j) = std::numeric_limits<double>::quiet_NaN();
            else
                alpha(l, j) = (std::log(s1) - std::log(s0)) / dle;
        }
    }
    return alpha;
}

inline Matrix scaling_laws(const BandwidthScan& scan) {
    return scaling_laws(scan.eps_grid, scan.singular_values);
}

namespace detail {

// d2 = 2 * sum_{j <= floor(d1)} alpha_j + 2 * frac(d1) * alpha_{floor(d1)+1}.
// When floor(d1) = 0 this degenerates to 2 * d1 * alpha_1 (continuous limit);
// NaN scaling laws contribute zero.
inline double determinant_dimension(double d1, const Eigen::Ref<const Vector>& alpha_row) {
    if (!(d1 > 0.0)) return 0.0;
    const Index nsv = alpha_row.size();
    auto term = [&](Index j) {
        double a = alpha_row(j);
        return std::isnan(a) ? 0.0 : a;
    };
    Index d0 = static_cast<Index>(std::floor(d1));
    double frac = d1 - static_cast<double>(d0);
    double sum = 0.0;
    for (Index j = 0; j < d0 && j < nsv; ++j) sum += term(j);
    double d2 = 2.0 * sum;
    if (d0 < nsv) d2 += 2.0 * frac * term(d0);
    return d2;
}

} // namespace detail

/// Sweeps an explicit bandwidth grid at base point i. Simple mode tracks
/// only the weight sums; robust mode also records singular values per
/// grid point and the d2 / d_ave / agreement-metric columns.
inline BandwidthScan bandwidth_scan(const PointCloud& cloud, const NeighborGraph& graph,
                                    Index i, const Vector& eps_grid, ScanMode mode) {
    const Index L = eps_grid.size();
    if (L < 3) throw ParameterError("bandwidth_scan: grid needs at least 3 points");
    if (graph.k() < 2) throw ParameterError("bandwidth_scan: graph needs k >= 2");
    for (Index l = 0; l + 1 < L; ++l)
        if (!(eps_grid(l) < eps_grid(l + 1)))
            throw ParameterError("bandwidth_scan: grid must be strictly increasing");
    if (!(eps_grid(0) > 0.0)) throw ParameterError("bandwidth_scan: grid must be positive");

    BandwidthScan scan;
    scan.base_index = i;
    scan.mode = mode;
    scan.eps_grid = eps_grid;
    scan.weight_sums.resize(L);

    const int k = graph.k();
    Vector d2row = graph.distances.row(i).array().square();
    for (Index l = 0; l < L; ++l) {
        double D = 0.0;
        for (int j = 0; j < k; ++j) D += std::exp(-d2row(j) / (2.0 * eps_grid(l)));
        scan.weight_sums(l) = D;
    }

    scan.d1.resize(L - 1);
    for (Index l = 0; l + 1 < L; ++l) {
        double dle = std::log(eps_grid(l + 1)) - std::log(eps_grid(l));
        scan.d1(l) = 2.0 * (std::log(scan.weight_sums(l + 1)) - std::log(scan.weight_sums(l))) / dle;
    }

    if (mode == ScanMode::Robust) {
        Index nsv = std::min<Index>(k, cloud.dim());
        scan.singular_values.resize(L, nsv);
        for (Index l = 0; l < L; ++l) {
            LocalChart c = build_chart(cloud, graph, i, eps_grid(l));
            decompose(c);
            scan.singular_values.row(l) = c.singular_values.transpose();
        }
        scan.alpha = scaling_laws(scan.eps_grid, scan.singular_values);
        scan.d2.resize(L - 1);
        scan.d_ave.resize(L - 1);
        for (Index l = 0; l + 1 < L; ++l) {
            scan.d2(l) = detail::determinant_dimension(scan.d1(l), scan.alpha.row(l));
            scan.d_ave(l) = 0.5 * (scan.d1(l) + scan.d2(l));
        }
        scan.metric.resize(L - 2);
        for (Index l = 0; l + 2 < L; ++l) {
            double dle = std::log(eps_grid(l + 1)) - std::log(eps_grid(l));
            double nan = std::numeric_limits<double>::quiet_NaN();
            double m = nan;
            if (scan.d_ave(l) > 0.0 && scan.d1(l) > 0.0 && scan.d1(l + 1) > 0.0 &&
                scan.d2(l) > 0.0 && scan.d2(l + 1) > 0.0) {
                m = std::abs((scan.d1(l) - scan.d2(l)) / scan.d_ave(l)) +
                    std::abs((std::log(scan.d1(l + 1)) - std::log(scan.d1(l))) / dle) +
                    std::abs((std::log(scan.d2(l + 1)) - std::log(scan.d2(l))) / dle);
            }
            scan.metric(l) = m;
        }
        Index best = -1;
        double best_val = std::numeric_limits<double>::infinity();
        for (Index l = 0; l < scan.metric.size(); ++l) {
            if (std::isfinite(scan.metric(l)) && scan.metric(l) < best_val) {
                best_val = scan.metric(l);
                best = l;
            }
        }
        if (best < 0) throw DegenerateGeometryError(
            "bandwidth_scan: agreement metric undefined everywhere at point " + std::to_string(i));
        scan.selected = best;
        scan.selected_dim = scan.d_ave(best);
    } else {
        Index best = 0;
        scan.d1.maxCoeff(&best);
        scan.selected = best;
        scan.selected_dim = scan.d1(best);
    }
    scan.selected_epsilon = scan.eps_grid(scan.selected + 1);
    if (!(scan.selected_dim > 0.0))
        throw DegenerateGeometryError("bandwidth_scan: nonpositive dimension estimate at point " +
                                      std::to_string(i));
    return scan;
}

/// Auto-ranged sweep: eps_max = 10 * d(k) and eps_min is the bandwidth at
/// which the nearest non-self weight reaches machine precision,
/// d(2)^2 / (2 |log eps_mach|).
inline BandwidthScan bandwidth_scan(const PointCloud& cloud, const NeighborGraph& graph,
                                    Index i, int L, ScanMode mode = ScanMode::Simple) {
    if (L < 3) throw ParameterError("bandwidth_scan: L must be at least 3");
    const int k = graph.k();
    double dk = graph.distances(i, k - 1);
    if (!(dk > 0.0))
        throw DegenerateGeometryError("bandwidth_scan: all neighbors coincide with point " +
                                      std::to_string(i));
    double dnear = 0.0;
    for (int j = 1; j < k; ++j) {
        if (graph.distances(i, j) > 0.0) { dnear = graph.distances(i, j); break; }
    }
    if (dnear == 0.0)
        throw DegenerateGeometryError("bandwidth_scan: no distinct neighbor for point " +
                                      std::to_string(i));
    double log_mach = std::abs(std::log(std::numeric_limits<double>::epsilon()));
    double eps_min = dnear * dnear / (2.0 * log_mach);
    double eps_max = 10.0 * dk;
    return bandwidth_scan(cloud, graph, i, detail::log_uniform_grid(eps_min, eps_max, L), mode);
}

} // namespace idm
