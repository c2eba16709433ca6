#pragma once

#include "pcdnf/point_cloud.hpp"

#include <string>

namespace pcdnf {

enum class ShapeKind { Sphere, Cube, Cylinder, Torus, Wedge };

ShapeKind shape_kind_from_string(const std::string& name);
std::string to_string(ShapeKind kind);

// Analytic desk-scale shapes. All have closed-form surfaces and normals:
//   sphere   radius 1, centered at origin
//   cube     [-1,1]^3 surface
//   cylinder radius 1, z in [-1,1], capped
//   torus    major radius 1, minor radius 0.4, z-axis
//   wedge    two unit-width half-planes meeting at 90 degrees along the x-axis
struct ShapeSpec {
    ShapeKind kind = ShapeKind::Sphere;
    int n_points = 2000;
    uint64_t seed = 0;
};

// n_points area-uniform surface samples with analytic normals.
PointCloud generate_shape(const ShapeSpec& spec);

// Exact distance from a point to the analytic surface.
double analytic_surface_distance(ShapeKind kind, const Vec3& p);

// Bounding-box diagonal of the analytic surface (not of a sample).
double analytic_bbox_diag(ShapeKind kind);

struct NoisySample {
    PointCloud noisy;   // positions perturbed, raw normals from PCA
    PointCloud clean;   // ground truth positions + analytic normals
    double noise_level = 0.0;  // fraction of the clean bounding-box diagonal
};

// Isotropic Gaussian displacement with per-axis std = level * clean.bbox_diag().
// Raw normals of the noisy cloud are re-estimated with PCA (k = 16).
// level == 0 returns the clean cloud unchanged.
NoisySample add_gaussian_noise(const PointCloud& clean, double level, uint64_t seed);

// Plain-text "x y z [nx ny nz]" rows, 17 significant digits.
void write_xyz(const std::string& path, const PointCloud& cloud);
PointCloud read_xyz(const std::string& path);

// Minimal binary_little_endian PLY reader: x/y/z plus optional nx/ny/nz,
// float or double properties.
PointCloud read_ply(const std::string& path);

}  // namespace pcdnf
