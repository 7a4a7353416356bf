#pragma once

#include "idm/common.hpp"

#include <utility>

namespace idm {

/// N points in ambient dimension m, one point per row. Row i refers to
/// sample i everywhere in the pipeline; no operation reorders rows.
struct PointCloud {
    Matrix points;

    Index size() const { return points.rows(); }
    Index dim() const { return points.cols(); }

    static PointCloud validated(Matrix pts) {
        if (pts.rows() < 1 || pts.cols() < 1)
            throw ShapeError("point cloud must have at least one row and one column");
        if (!pts.allFinite())
            throw ValidationError("point cloud contains non-finite entries");
        return PointCloud{std::move(pts)};
    }
};

/// Feature values y_i paired row-by-row with a PointCloud.
struct FeatureSet {
    Matrix values;

    Index size() const { return values.rows(); }
    Index dim() const { return values.cols(); }

    static FeatureSet validated(Matrix vals, Index expected_rows = -1) {
        if (vals.rows() < 1 || vals.cols() < 1)
            throw ShapeError("feature set must have at least one row and one column");
        if (expected_rows >= 0 && vals.rows() != expected_rows)
            throw ShapeError("feature row count does not match point cloud");
        if (!vals.allFinite())
            throw ValidationError("feature set contains non-finite entries");
        return FeatureSet{std::move(vals)};
    }
};

/// Ordered k-nearest-neighbor lists. Column 0 is the point itself at
/// distance 0; distances are nondecreasing along each row, ties broken
/// by ascending index.
struct NeighborGraph {
    IndexMatrix indices;   // N x k
    Matrix distances;      // N x k

    Index size() const { return indices.rows(); }
    int k() const { return static_cast<int>(indices.cols()); }
};

/// Rescaled diffusion coordinates of one IDM iteration.
/// iteration 0 denotes the raw input cloud.
struct DiffusionEmbedding {
    Matrix coords;      // N x M
    int iteration = 0;
    double s = 0.0;     // diffusion time used (0 for raw data)
    Vector local_dims;  // per-point d(i) used in the rescaling prefactor

    Index size() const { return coords.rows(); }
    Index dim() const { return coords.cols(); }
};

} // namespace idm
