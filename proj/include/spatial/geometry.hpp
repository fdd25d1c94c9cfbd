#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace spatial {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const;
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

// Unit quaternion, component order (w, x, y, z).
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static Quat identity() { return {}; }
    static Quat from_axis_angle(const Vec3& axis, double angle_rad);

    Quat operator*(const Quat& o) const;
    Quat conjugate() const { return {w, -x, -y, -z}; }
    double norm() const;
    Quat normalized() const;

    // Rotates p by this quaternion. Exact for unit quaternions; for non-unit
    // quaternions evaluates the same polynomial expression (the form whose
    // derivative pose_jacobians reports).
    Vec3 rotate(const Vec3& p) const;
};

struct Pose {
    Vec3 t;
    Quat q;

    void renormalize() { q = q.normalized(); }
    bool quaternion_normalized(double tol = 1e-6) const;
    Pose inverse() const;
};

struct PointCloud {
    std::vector<Vec3> points;

    std::size_t size() const { return points.size(); }
    // Throws invalid_argument on fewer than 4 points or non-finite coords.
    void validate() const;
};

// Two identified objects with poses; world z-axis is up, gravity (0,0,-1).
struct Scene {
    std::string id;
    std::string object_a_id, object_b_id;
    PointCloud cloud_a, cloud_b;
    Pose pose_a, pose_b;

    void validate() const;
};

// Similarity transform mapping world scene points into the unit cube:
// cube_point = (p - offset) * scale.
struct UnitCubeFrame {
    double scale = 1.0;
    Vec3 offset;

    Vec3 to_cube(const Vec3& p) const { return (p - offset) * scale; }
};

// Per-point derivative of R(q)p + t with respect to the quaternion.
// Row r, column c: d(out_r)/d(q_c), columns ordered (w,x,y,z).
using QuatJacobian = std::array<std::array<double, 4>, 3>;

// Applies R(q)p + t to every point. Throws on non-finite results.
PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

Vec3 transform_point(const Vec3& p, const Pose& pose);

// Fits the union bounding box into [0,1]^3: the longest axis spans exactly
// [0,1], the other axes are centered. Throws on a degenerate (zero extent
// on all axes) union.
UnitCubeFrame fit_unit_cube(const PointCloud& points_a, const PointCloud& points_b);

// d(R(q)p + t)/dq for one point; d/dt is always the 3x3 identity.
QuatJacobian quat_jacobian(const Vec3& p, const Quat& q);

// Scene text format round-trip. See README for the line grammar.
Scene read_scene(std::istream& in);
Scene load_scene(const std::string& path);
void write_scene(std::ostream& out, const Scene& scene);
void save_scene(const std::string& path, const Scene& scene);

}  // namespace spatial
