#include "pcdnf/metrics.hpp"

#include "pcdnf/kdtree.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace pcdnf {

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
    if (a.size() == 0 || b.size() == 0)
        throw std::invalid_argument("chamfer_distance: clouds must be nonempty");
    // rescaling by 1/diag(b) is applied to the collected squared distances,
    // which keeps the measure exactly translation invariant
    const double scale = 1.0 / b.bbox_diag();

    KdTree3 ta(a.points), tb(b.points);
    double sum_ab = 0.0;
    for (int i = 0; i < a.points.rows(); ++i) {
        double d2 = 0.0;
        tb.nearest(a.points.row(i).transpose(), &d2);
        sum_ab += d2;
    }
    double sum_ba = 0.0;
    for (int i = 0; i < b.points.rows(); ++i) {
        double d2 = 0.0;
        ta.nearest(b.points.row(i).transpose(), &d2);
        sum_ba += d2;
    }
    return (0.5 * sum_ab / a.points.rows() + 0.5 * sum_ba / b.points.rows()) * scale * scale;
}

double point_to_surface(const PointCloud& a, ShapeKind analytic_kind) {
    if (a.size() == 0) throw std::invalid_argument("point_to_surface: empty cloud");
    double sum = 0.0;
    for (int i = 0; i < a.size(); ++i)
        sum += analytic_surface_distance(analytic_kind, a.points.row(i).transpose());
    return sum / a.size() / analytic_bbox_diag(analytic_kind);
}

double point_to_surface(const PointCloud& a, const PointCloud& reference) {
    if (a.size() == 0 || reference.size() == 0)
        throw std::invalid_argument("point_to_surface: empty cloud");
    KdTree3 tree(reference.points);
    double sum = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        double d2 = 0.0;
        tree.nearest(a.points.row(i).transpose(), &d2);
        sum += std::sqrt(d2);
    }
    return sum / a.size() / reference.bbox_diag();
}

VecX normal_angle_errors_deg(const MatX3& estimated, const MatX3& truth) {
    if (estimated.rows() != truth.rows())
        throw std::invalid_argument("normal angle errors: row count mismatch");
    auto cross_norm = [](const Vec3& e, const Vec3& t) {
        return Vec3(e.y() * t.z() - e.z() * t.y(), e.z() * t.x() - e.x() * t.z(),
                    e.x() * t.y() - e.y() * t.x())
            .norm();
    };
    VecX errors(estimated.rows());
    for (int i = 0; i < estimated.rows(); ++i) {
        // atan2 form is stable near 0 and pi where acos loses precision;
        // angles below the resolution of stored unit vectors collapse to 0
        Vec3 e = estimated.row(i).transpose();
        Vec3 t = truth.row(i).transpose();
        double rad = std::atan2(cross_norm(e, t), std::abs(e.dot(t)));
        errors[i] = rad < 1e-10 ? 0.0 : rad * 180.0 / M_PI;
    }
    return errors;
}

double normal_rmse_deg(const MatX3& estimated, const MatX3& truth) {
    VecX errors = normal_angle_errors_deg(estimated, truth);
    return std::sqrt(errors.array().square().mean());
}

void export_error_map(const std::string& path, const PointCloud& cloud, const VecX& errors,
                      double cap) {
    if (errors.size() != cloud.size())
        throw std::invalid_argument("export_error_map: error count does not match point count");
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("export_error_map: cannot open " + path);
    const bool with_normals = cloud.has_normals();
    for (int i = 0; i < cloud.size(); ++i) {
        double t = std::clamp(errors[i] / cap, 0.0, 1.0);
        double r = t, g = 0.0, b = 1.0 - t;  // blue at 0, red at cap
        if (with_normals)
            std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g %.9g %.9g %.9g\n",
                         cloud.points(i, 0), cloud.points(i, 1), cloud.points(i, 2),
                         cloud.normals(i, 0), cloud.normals(i, 1), cloud.normals(i, 2), r, g, b);
        else
            std::fprintf(f, "%.17g %.17g %.17g %.9g %.9g %.9g\n", cloud.points(i, 0),
                         cloud.points(i, 1), cloud.points(i, 2), r, g, b);
    }
    std::fclose(f);
}

}  // namespace pcdnf
