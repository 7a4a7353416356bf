#pragma once

#include "idm/types.hpp"

#include <Eigen/Geometry>
#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>

namespace idm {

namespace detail {

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    double uniform() {  // [0, 1)
        return static_cast<double>(gen() >> 11) * (1.0 / 9007199254740992.0);
    }
    double normal() {  // Box-Muller, fully pinned down
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
};

} // namespace detail

/// Synthetic data set with matched feature sets and analytic oracles.
/// `params` holds the intrinsic coordinates each sample was generated
/// from; oracle closures are defined on exactly those samples.
struct Fixture {
    std::string name;
    PointCloud cloud;
    Matrix params;  // N x (intrinsic parameter count)
    std::map<std::string, FeatureSet> features;
    std::map<std::string, std::function<Matrix(Index)>> feature_gradients;  // ambient n x m
    std::function<Matrix(Index)> tangent;          // d x m orthonormal rows
    std::function<double(Index, Index)> geodesic;  // exact geodesic distance
    std::function<double(int)> spectrum_lambda;    // Laplace-Beltrami eigenvalues
    std::map<std::string, double> config;
    Matrix mixing;  // torus30 orthogonal mixing block
};

/// N points equally spaced on the unit circle.
inline Fixture circle(Index n) {
    if (n < 3) throw ParameterError("circle: need at least 3 points");
    Fixture f;
    f.name = "circle";
    f.config = {{"n", static_cast<double>(n)}};
    f.params.resize(n, 1);
    Matrix pts(n, 2);
    for (Index i = 0; i < n; ++i) {
        double th = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
        f.params(i, 0) = th;
        pts(i, 0) = std::cos(th);
        pts(i, 1) = std::sin(th);
    }
    f.cloud = PointCloud{std::move(pts)};
    f.features["identity"] = FeatureSet{f.cloud.points};
    const Matrix& P = f.params;
    f.tangent = [P](Index i) {
        Matrix t(1, 2);
        t << -std::sin(P(i, 0)), std::cos(P(i, 0));
        return t;
    };
    f.geodesic = [n](Index i, Index j) {
        Index d = std::abs(i - j);
        d = std::min(d, n - d);
        return 2.0 * M_PI * static_cast<double>(d) / static_cast<double>(n);
    };
    f.spectrum_lambda = [](int r) {
        double m = std::ceil(static_cast<double>(r) / 2.0);
        return -m * m;
    };
    return f;
}

/// Uniform samples of (theta, r) on [0, 2pi) x [1, 3], embedded as
/// (r cos theta, r sin theta). Features: radius and (sin, cos) of the angle.
inline Fixture annulus(Index n, std::uint64_t seed) {
    if (n < 100) throw ParameterError("annulus: need at least 100 points");
    detail::Rng rng(seed);
    Fixture f;
    f.name = "annulus";
    f.config = {{"n", static_cast<double>(n)}, {"seed", static_cast<double>(seed)}};
    f.params.resize(n, 2);
    Matrix pts(n, 2);
    Matrix rad(n, 1), ang(n, 2);
    for (Index i = 0; i < n; ++i) {
        double th = 2.0 * M_PI * rng.uniform();
        double r = 1.0 + 2.0 * rng.uniform();
        f.params(i, 0) = th;
        f.params(i, 1) = r;
        pts(i, 0) = r * std::cos(th);
        pts(i, 1) = r * std::sin(th);
        rad(i, 0) = r;
        ang(i, 0) = std::sin(th);
        ang(i, 1) = std::cos(th);
    }
    f.cloud = PointCloud{std::move(pts)};
    f.features["radius"] = FeatureSet{std::move(rad)};
    f.features["angle"] = FeatureSet{std::move(ang)};
    f.feature_gradients["radius"] = [X = f.cloud.points](Index i) {
        double x = X(i, 0), y = X(i, 1), r = std::hypot(x, y);
        Matrix g(1, 2);
        g << x / r, y / r;
        return g;
    };
    f.feature_gradients["angle"] = [X = f.cloud.points](Index i) {
        double x = X(i, 0), y = X(i, 1), r2 = x * x + y * y, r3 = r2 * std::sqrt(r2);
        Matrix g(2, 2);
        g << -x * y / r3, x * x / r3,   // grad sin(theta) = grad(y/r)
             y * y / r3, -x * y / r3;   // grad cos(theta) = grad(x/r)
        return g;
    };
    f.tangent = [](Index) { return Matrix::Identity(2, 2); };  // open subset of the plane
    return f;
}

namespace detail {

inline void torus_point(double th, double ph, double* out) {
    out[0] = (2.0 + std::cos(th)) * std::cos(ph);
    out[1] = (2.0 + std::cos(th)) * std::sin(ph);
    out[2] = std::sin(th);
}

} // namespace detail

/// gridSize x gridSize uniform (theta, phi) grid on the standard torus
/// ((2+cos th) cos ph, (2+cos th) sin ph, sin th).
inline Fixture torus(Index grid_size) {
    if (grid_size < 10) throw ParameterError("torus: grid size must be at least 10");
    const Index n = grid_size * grid_size;
    Fixture f;
    f.name = "torus";
    f.config = {{"grid", static_cast<double>(grid_size)}};
    f.params.resize(n, 2);
    Matrix pts(n, 3);
    Matrix phi_pair(n, 2), theta_pair(n, 2);
    for (Index a = 0; a < grid_size; ++a) {
        double th = 2.0 * M_PI * static_cast<double>(a) / static_cast<double>(grid_size);
        for (Index b = 0; b < grid_size; ++b) {
            double ph = 2.0 * M_PI * static_cast<double>(b) / static_cast<double>(grid_size);
            Index i = a * grid_size + b;
            f.params(i, 0) = th;
            f.params(i, 1) = ph;
            double xyz[3];
            detail::torus_point(th, ph, xyz);
            pts(i, 0) = xyz[0];
            pts(i, 1) = xyz[1];
            pts(i, 2) = xyz[2];
            phi_pair(i, 0) = std::sin(ph);
            phi_pair(i, 1) = std::cos(ph);
            theta_pair(i, 0) = std::sin(th);
            theta_pair(i, 1) = std::cos(th);
        }
    }
    f.cloud = PointCloud{std::move(pts)};
    f.features["phi_pair"] = FeatureSet{std::move(phi_pair)};
    f.features["theta_pair"] = FeatureSet{std::move(theta_pair)};
    const Matrix& P = f.params;
    f.tangent = [P](Index i) {
        double th = P(i, 0), ph = P(i, 1);
        Matrix t(2, 3);
        t.row(0) << -std::sin(th) * std::cos(ph), -std::sin(th) * std::sin(ph), std::cos(th);
        t.row(1) << -std::sin(ph), std::cos(ph), 0.0;  // d/dphi normalized by (2+cos th)
        return t;
    };
    f.feature_gradients["phi_pair"] = [X = f.cloud.points](Index i) {
        double x = X(i, 0), y = X(i, 1), r2 = x * x + y * y, r3 = r2 * std::sqrt(r2);
        Matrix g(2, 3);
        g << -x * y / r3, x * x / r3, 0.0,
             y * y / r3, -x * y / r3, 0.0;
        return g;
    };
    f.feature_gradients["theta_pair"] = [X = f.cloud.points](Index i) {
        double x = X(i, 0), y = X(i, 1), r = std::hypot(x, y);
        Matrix g(2, 3);
        g << 0.0, 0.0, 1.0,          // sin(theta) = z
             x / r, y / r, 0.0;      // cos(theta) = rho - 2
        return g;
    };
    return f;
}

/// High-curvature 30-dimensional torus embedding: the standard coordinates
/// followed by a seeded orthogonal mixing of the cubed coordinates / 30.
inline Fixture torus30(Index grid_size, std::uint64_t seed) {
    Fixture base = torus(grid_size);
    const Index n = base.cloud.size();
    detail::Rng rng(seed);
    Matrix gauss(27, 3);
    for (Index i = 0; i < 27; ++i)
        for (Index j = 0; j < 3; ++j) gauss(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(gauss);
    Matrix mix = qr.householderQ() * Matrix::Identity(27, 3);

    Matrix pts(n, 30);
    pts.leftCols(3) = base.cloud.points;
    Matrix cubes = base.cloud.points.array().cube() / 30.0;
    pts.rightCols(27) = cubes * mix.transpose();

    Fixture f;
    f.name = "torus30";
    f.config = base.config;
    f.config["seed"] = static_cast<double>(seed);
    f.params = base.params;
    f.cloud = PointCloud{std::move(pts)};
    f.features = base.features;
    f.mixing = mix;
    const Matrix& P = f.params;
    Matrix mixing = mix;
    f.tangent = [P, mixing](Index i) {
        double th = P(i, 0), ph = P(i, 1);
        double pt[3];
        detail::torus_point(th, ph, pt);
        Eigen::RowVector3d p(pt[0], pt[1], pt[2]);
        Eigen::RowVector3d dth(-std::sin(th) * std::cos(ph), -std::sin(th) * std::sin(ph),
                               std::cos(th));
        Eigen::RowVector3d dph(-(2.0 + std::cos(th)) * std::sin(ph),
                               (2.0 + std::cos(th)) * std::cos(ph), 0.0);
        auto lift = [&](const Eigen::RowVector3d& v) {
            Eigen::RowVectorXd out(30);
            out.head(3) = v;
            Eigen::RowVector3d cubed = (p.array().square() * v.array() * (3.0 / 30.0)).matrix();
            out.tail(27) = cubed * mixing.transpose();
            return out;
        };
        Matrix t(2, 30);
        t.row(0) = lift(dth);
        t.row(1) = lift(dph);
        // Gram-Schmidt
        t.row(0).normalize();
        t.row(1) -= t.row(0) * (t.row(0).dot(t.row(1)));
        t.row(1).normalize();
        return t;
    };
    return f;
}

/// Uniform samples on the unit sphere. Features: the x coordinate and the
/// twist sin(pi z / 2 + atan2(y, x)).
inline Fixture sphere(Index n, std::uint64_t seed) {
    if (n < 100) throw ParameterError("sphere: need at least 100 points");
    detail::Rng rng(seed);
    Fixture f;
    f.name = "sphere";
    f.config = {{"n", static_cast<double>(n)}, {"seed", static_cast<double>(seed)}};
    Matrix pts(n, 3);
    for (Index i = 0; i < n; ++i) {
        Eigen::RowVector3d v(rng.normal(), rng.normal(), rng.normal());
        while (v.norm() < 1e-8) v = Eigen::RowVector3d(rng.normal(), rng.normal(), rng.normal());
        pts.row(i) = v / v.norm();
    }
    f.params = pts;
    f.cloud = PointCloud{std::move(pts)};
    Matrix xfeat = f.cloud.points.col(0);
    Matrix twist(n, 1);
    for (Index i = 0; i < n; ++i) {
        double x = f.cloud.points(i, 0), y = f.cloud.points(i, 1), z = f.cloud.points(i, 2);
        twist(i, 0) = std::sin(M_PI * z / 2.0 + std::atan2(y, x));
    }
    f.name = "sphere";
    f.features["x"] = FeatureSet{std::move(xfeat)};
    f.features["twist"] = FeatureSet{std::move(twist)};
    f.feature_gradients["x"] = [](Index) {
        Matrix g(1, 3);
        g << 1.0, 0.0, 0.0;
        return g;
    };
    f.feature_gradients["twist"] = [X = f.cloud.points](Index i) {
        double x = X(i, 0), y = X(i, 1), z = X(i, 2);
        double r2 = x * x + y * y;
        double u = M_PI * z / 2.0 + std::atan2(y, x);
        Matrix g(1, 3);
        g << std::cos(u) * (-y / r2), std::cos(u) * (x / r2), std::cos(u) * (M_PI / 2.0);
        return g;
    };
    f.tangent = [X = f.cloud.points](Index i) {
        Eigen::RowVector3d nrm = X.row(i);
        // Householder-style complement of the normal
        Eigen::Vector3d a = nrm.transpose();
        Eigen::Vector3d e = Eigen::Vector3d::Zero();
        int piv = 0;
        a.cwiseAbs().minCoeff(&piv);
        e(piv) = 1.0;
        Eigen::Vector3d t1 = a.cross(e).normalized();
        Eigen::Vector3d t2 = a.cross(t1).normalized();
        Matrix t(2, 3);
        t.row(0) = t1.transpose();
        t.row(1) = t2.transpose();
        return t;
    };
    return f;
}

/// Scalar feature x y^2 + z with its analytic gradient (y^2, 2xy, 1).
inline FeatureSet scalar_feature_xyy_z(const PointCloud& cloud) {
    if (cloud.dim() != 3) throw ShapeError("scalar_feature_xyy_z: requires 3-D points");
    Matrix vals(cloud.size(), 1);
    for (Index i = 0; i < cloud.size(); ++i) {
        double x = cloud.points(i, 0), y = cloud.points(i, 1), z = cloud.points(i, 2);
        vals(i, 0) = x * y * y + z;
    }
    return FeatureSet{std::move(vals)};
}

inline Matrix scalar_feature_xyy_z_gradient(const PointCloud& cloud, Index i) {
    double x = cloud.points(i, 0), y = cloud.points(i, 1);
    Matrix g(1, 3);
    g << y * y, 2.0 * x * y, 1.0;
    return g;
}

/// Adds i.i.d. Gaussian noise with covariance scale * I_m, seeded.
inline PointCloud add_noise(const PointCloud& cloud, double covariance_scale,
                            std::uint64_t seed) {
    if (covariance_scale < 0.0) throw ParameterError("add_noise: negative covariance scale");
    if (covariance_scale == 0.0) return cloud;
    detail::Rng rng(seed);
    double sd = std::sqrt(covariance_scale);
    Matrix pts = cloud.points;
    for (Index i = 0; i < pts.rows(); ++i)
        for (Index j = 0; j < pts.cols(); ++j) pts(i, j) += sd * rng.normal();
    return PointCloud{std::move(pts)};
}

} // namespace idm
