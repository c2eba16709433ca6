#include "pcdnf/dataset.hpp"

#include "pcdnf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pcdnf {

namespace {

constexpr double kTorusMajor = 1.0;
constexpr double kTorusMinor = 0.4;

void sample_sphere(Rng& rng, Vec3& p, Vec3& n) {
    double z = rng.uniform(-1.0, 1.0);
    double phi = rng.uniform(0.0, 2.0 * M_PI);
    double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    p = Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
    n = p;
}

void sample_cube(Rng& rng, Vec3& p, Vec3& n) {
    int face = rng.uniform_int(6);
    int axis = face / 2;
    double sign = (face % 2 == 0) ? 1.0 : -1.0;
    double u = rng.uniform(-1.0, 1.0);
    double v = rng.uniform(-1.0, 1.0);
    p[axis] = sign;
    p[(axis + 1) % 3] = u;
    p[(axis + 2) % 3] = v;
    n = Vec3::Zero();
    n[axis] = sign;
}

void sample_cylinder(Rng& rng, Vec3& p, Vec3& n) {
    // lateral area 4*pi, each cap pi
    double pick = rng.uniform(0.0, 6.0);
    if (pick < 4.0) {
        double theta = rng.uniform(0.0, 2.0 * M_PI);
        double z = rng.uniform(-1.0, 1.0);
        p = Vec3(std::cos(theta), std::sin(theta), z);
        n = Vec3(std::cos(theta), std::sin(theta), 0.0);
    } else {
        double sign = pick < 5.0 ? 1.0 : -1.0;
        double rho = std::sqrt(rng.uniform01());
        double theta = rng.uniform(0.0, 2.0 * M_PI);
        p = Vec3(rho * std::cos(theta), rho * std::sin(theta), sign);
        n = Vec3(0.0, 0.0, sign);
    }
}

void sample_torus(Rng& rng, Vec3& p, Vec3& n) {
    double u = rng.uniform(0.0, 2.0 * M_PI);
    // area element ~ (R + a cos v); rejection keeps the sampling uniform
    double v;
    do {
        v = rng.uniform(0.0, 2.0 * M_PI);
    } while (rng.uniform(0.0, kTorusMajor + kTorusMinor) > kTorusMajor + kTorusMinor * std::cos(v));
    double ring = kTorusMajor + kTorusMinor * std::cos(v);
    p = Vec3(ring * std::cos(u), ring * std::sin(u), kTorusMinor * std::sin(v));
    n = Vec3(std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v));
}

void sample_wedge(Rng& rng, Vec3& p, Vec3& n) {
    double x = rng.uniform(-1.0, 1.0);
    double t = rng.uniform(0.0, 1.0);
    if (rng.uniform01() < 0.5) {
        p = Vec3(x, t, 0.0);  // horizontal half-plane
        n = Vec3(0.0, 0.0, 1.0);
    } else {
        p = Vec3(x, 0.0, t);  // vertical half-plane
        n = Vec3(0.0, 1.0, 0.0);
    }
}

double point_to_rect(const Vec3& p, int flat_axis, double lo0, double hi0, int ax0, double lo1,
                     double hi1, int ax1) {
    // distance to an axis-aligned rectangle sitting at coordinate 0 of flat_axis
    Vec3 q = p;
    q[flat_axis] = 0.0;
    q[ax0] = std::clamp(p[ax0], lo0, hi0);
    q[ax1] = std::clamp(p[ax1], lo1, hi1);
    return (p - q).norm();
}

}  // namespace

ShapeKind shape_kind_from_string(const std::string& name) {
    if (name == "sphere") return ShapeKind::Sphere;
    if (name == "cube") return ShapeKind::Cube;
    if (name == "cylinder") return ShapeKind::Cylinder;
    if (name == "torus") return ShapeKind::Torus;
    if (name == "wedge" || name == "dihedral-wedge") return ShapeKind::Wedge;
    throw std::invalid_argument("unknown shape kind: " + name);
}

std::string to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Cube: return "cube";
        case ShapeKind::Cylinder: return "cylinder";
        case ShapeKind::Torus: return "torus";
        case ShapeKind::Wedge: return "wedge";
    }
    throw std::invalid_argument("unknown shape kind");
}

PointCloud generate_shape(const ShapeSpec& spec) {
    if (spec.n_points < 100)
        throw std::invalid_argument("generate_shape: n_points must be >= 100");
    Rng rng(spec.seed);
    PointCloud cloud;
    cloud.points.resize(spec.n_points, 3);
    cloud.normals.resize(spec.n_points, 3);
    Vec3 p, n;
    for (int i = 0; i < spec.n_points; ++i) {
        switch (spec.kind) {
            case ShapeKind::Sphere: sample_sphere(rng, p, n); break;
            case ShapeKind::Cube: sample_cube(rng, p, n); break;
            case ShapeKind::Cylinder: sample_cylinder(rng, p, n); break;
            case ShapeKind::Torus: sample_torus(rng, p, n); break;
            case ShapeKind::Wedge: sample_wedge(rng, p, n); break;
        }
        cloud.points.row(i) = p.transpose();
        cloud.normals.row(i) = n.transpose();
    }
    return cloud;
}

double analytic_surface_distance(ShapeKind kind, const Vec3& p) {
    switch (kind) {
        case ShapeKind::Sphere:
            return std::abs(p.norm() - 1.0);
        case ShapeKind::Cube: {
            Vec3 q = p.cwiseAbs() - Vec3::Ones();
            double outside = q.cwiseMax(0.0).norm();
            double inside = std::min(q.maxCoeff(), 0.0);
            return std::abs(outside + inside);
        }
        case ShapeKind::Cylinder: {
            double drho = std::hypot(p.x(), p.y()) - 1.0;
            double dz = std::abs(p.z()) - 1.0;
            double outside = std::hypot(std::max(drho, 0.0), std::max(dz, 0.0));
            double inside = std::min(std::max(drho, dz), 0.0);
            return std::abs(outside + inside);
        }
        case ShapeKind::Torus: {
            double ring = std::hypot(p.x(), p.y()) - kTorusMajor;
            return std::abs(std::hypot(ring, p.z()) - kTorusMinor);
        }
        case ShapeKind::Wedge: {
            double da = point_to_rect(p, 2, -1.0, 1.0, 0, 0.0, 1.0, 1);
            double db = point_to_rect(p, 1, -1.0, 1.0, 0, 0.0, 1.0, 2);
            return std::min(da, db);
        }
    }
    throw std::invalid_argument("analytic_surface_distance: unknown kind");
}

double analytic_bbox_diag(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::Sphere:
        case ShapeKind::Cube:
        case ShapeKind::Cylinder:
            return Vec3(2.0, 2.0, 2.0).norm();
        case ShapeKind::Torus: {
            double w = 2.0 * (kTorusMajor + kTorusMinor);
            return Vec3(w, w, 2.0 * kTorusMinor).norm();
        }
        case ShapeKind::Wedge:
            return Vec3(2.0, 1.0, 1.0).norm();
    }
    throw std::invalid_argument("analytic_bbox_diag: unknown kind");
}

NoisySample add_gaussian_noise(const PointCloud& clean, double level, uint64_t seed) {
    if (level < 0.0) throw std::invalid_argument("add_gaussian_noise: level must be >= 0");
    NoisySample sample;
    sample.clean = clean;
    sample.noise_level = level;
    if (level == 0.0) {
        sample.noisy = clean;
        return sample;
    }
    double sigma = level * clean.bbox_diag();
    Rng rng(seed);
    sample.noisy.points.resize(clean.points.rows(), 3);
    for (int i = 0; i < clean.points.rows(); ++i)
        for (int c = 0; c < 3; ++c)
            sample.noisy.points(i, c) = clean.points(i, c) + sigma * rng.gaussian();
    sample.noisy.normals = estimate_normals_pca(sample.noisy, 16).normals;
    return sample;
}

void write_xyz(const std::string& path, const PointCloud& cloud) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("write_xyz: cannot open " + path);
    const bool with_normals = cloud.has_normals();
    for (int i = 0; i < cloud.size(); ++i) {
        if (with_normals)
            std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g\n", cloud.points(i, 0),
                         cloud.points(i, 1), cloud.points(i, 2), cloud.normals(i, 0),
                         cloud.normals(i, 1), cloud.normals(i, 2));
        else
            std::fprintf(f, "%.17g %.17g %.17g\n", cloud.points(i, 0), cloud.points(i, 1),
                         cloud.points(i, 2));
    }
    std::fclose(f);
}

PointCloud read_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_xyz: cannot open " + path);

    std::vector<double> rows;
    int fields_per_row = -1;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        double v[6];
        int count = 0;
        while (count < 6 && (ss >> v[count])) ++count;
        std::string trailing;
        if (ss >> trailing)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": too many fields (expected 3 or 6)");
        if (count == 0) continue;  // blank line
        if (count != 3 && count != 6)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 3 or 6 fields, got " +
                                     std::to_string(count));
        if (fields_per_row < 0) fields_per_row = count;
        if (count != fields_per_row)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": inconsistent field count");
        for (int c = 0; c < count; ++c) rows.push_back(v[c]);
    }
    if (fields_per_row < 0) throw std::runtime_error("read_xyz: " + path + " holds no points");

    const int n = static_cast<int>(rows.size()) / fields_per_row;
    PointCloud cloud;
    cloud.points.resize(n, 3);
    if (fields_per_row == 6) cloud.normals.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) cloud.points(i, c) = rows[i * fields_per_row + c];
        if (fields_per_row == 6)
            for (int c = 0; c < 3; ++c) cloud.normals(i, c) = rows[i * fields_per_row + 3 + c];
    }
    return cloud;
}

PointCloud read_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ply: cannot open " + path);

    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0)
        throw std::runtime_error("read_ply: not a PLY file: " + path);

    long vertex_count = -1;
    bool binary_le = false;
    struct Prop {
        std::string name;
        int bytes = 0;
    };
    std::vector<Prop> props;
    bool in_vertex_element = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            binary_le = (fmt == "binary_little_endian");
        } else if (tok == "element") {
            std::string name;
            long count;
            ss >> name >> count;
            in_vertex_element = (name == "vertex");
            if (in_vertex_element) vertex_count = count;
        } else if (tok == "property" && in_vertex_element) {
            std::string type, name;
            ss >> type >> name;
            int bytes;
            if (type == "float" || type == "float32" || type == "int" || type == "int32" ||
                type == "uint" || type == "uint32")
                bytes = 4;
            else if (type == "double" || type == "float64")
                bytes = 8;
            else if (type == "uchar" || type == "uint8" || type == "char" || type == "int8")
                bytes = 1;
            else if (type == "short" || type == "ushort" || type == "int16" || type == "uint16")
                bytes = 2;
            else
                throw std::runtime_error("read_ply: unsupported property type " + type);
            bool is_float = (bytes == 4 && (type == "float" || type == "float32")) || bytes == 8;
            props.push_back({is_float ? name : "", bytes});
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!binary_le) throw std::runtime_error("read_ply: only binary_little_endian is supported");
    if (vertex_count < 0) throw std::runtime_error("read_ply: no vertex element");

    int stride = 0;
    for (const Prop& p : props) stride += p.bytes;
    auto find_prop = [&](const std::string& name, int& offset, int& bytes) {
        int off = 0;
        for (const Prop& p : props) {
            if (p.name == name) {
                offset = off;
                bytes = p.bytes;
                return true;
            }
            off += p.bytes;
        }
        return false;
    };

    int ox[3], bx[3];
    const char* coords[3] = {"x", "y", "z"};
    for (int c = 0; c < 3; ++c)
        if (!find_prop(coords[c], ox[c], bx[c]))
            throw std::runtime_error("read_ply: missing coordinate property");
    int on[3], bn[3];
    const char* norms[3] = {"nx", "ny", "nz"};
    bool with_normals = true;
    for (int c = 0; c < 3; ++c)
        if (!find_prop(norms[c], on[c], bn[c])) with_normals = false;

    std::vector<char> buf(static_cast<size_t>(stride));
    auto read_scalar = [&](int offset, int bytes) -> double {
        if (bytes == 8) {
            double d;
            std::memcpy(&d, buf.data() + offset, 8);
            return d;
        }
        float f;
        std::memcpy(&f, buf.data() + offset, 4);
        return static_cast<double>(f);
    };

    PointCloud cloud;
    cloud.points.resize(vertex_count, 3);
    if (with_normals) cloud.normals.resize(vertex_count, 3);
    for (long i = 0; i < vertex_count; ++i) {
        if (!in.read(buf.data(), stride))
            throw std::runtime_error("read_ply: truncated vertex data");
        for (int c = 0; c < 3; ++c) cloud.points(i, c) = read_scalar(ox[c], bx[c]);
        if (with_normals)
            for (int c = 0; c < 3; ++c) cloud.normals(i, c) = read_scalar(on[c], bn[c]);
    }
    return cloud;
}

}  // namespace pcdnf
