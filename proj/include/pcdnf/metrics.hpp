#pragma once

#include "pcdnf/dataset.hpp"

#include <string>

namespace pcdnf {

// Symmetric squared-distance Chamfer measure. Both clouds are rescaled by
// 1 / bbox_diag(b) first:
//   CD = 0.5 * mean_a min_b ||a-b||^2 + 0.5 * mean_b min_a ||a-b||^2
double chamfer_distance(const PointCloud& a, const PointCloud& b);

// Mean distance from the points of `a` to a reference surface, normalized
// by the reference bounding-box diagonal. The analytic overload uses exact
// closed-form distances; the cloud overload uses nearest reference points.
double point_to_surface(const PointCloud& a, ShapeKind analytic_kind);
double point_to_surface(const PointCloud& a, const PointCloud& reference);

// Root-mean-square unoriented angle between normal pairs, in degrees.
double normal_rmse_deg(const MatX3& estimated, const MatX3& truth);

// Per-point unoriented angles (degrees) between two normal sets.
VecX normal_angle_errors_deg(const MatX3& estimated, const MatX3& truth);

// Writes "x y z [nx ny nz] r g b" with a blue-to-red linear colormap over
// [0, cap].
void export_error_map(const std::string& path, const PointCloud& cloud, const VecX& errors,
                      double cap = 30.0);

}  // namespace pcdnf
