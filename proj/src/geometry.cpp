#include "spatial/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace spatial {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Quat Quat::from_axis_angle(const Vec3& axis, double angle_rad) {
    double n = axis.norm();
    if (n == 0.0) return Quat::identity();
    double half = 0.5 * angle_rad;
    double s = std::sin(half) / n;
    return Quat{std::cos(half), axis.x * s, axis.y * s, axis.z * s};
}

Quat Quat::operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
}

double Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quat Quat::normalized() const {
    double n = norm();
    if (n == 0.0) throw std::invalid_argument("cannot normalize zero quaternion");
    return {w / n, x / n, y / n, z / n};
}

Vec3 Quat::rotate(const Vec3& p) const {
    // p + 2w (v x p) + 2 v x (v x p), v = (x,y,z)
    Vec3 v{x, y, z};
    Vec3 c1 = v.cross(p);
    Vec3 c2 = v.cross(c1);
    return p + c1 * (2.0 * w) + c2 * 2.0;
}

bool Pose::quaternion_normalized(double tol) const {
    return std::abs(q.norm() - 1.0) <= tol;
}

Pose Pose::inverse() const {
    Quat qi = q.conjugate();
    return Pose{-qi.rotate(t), qi};
}

namespace {

bool finite(const Vec3& p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

}  // namespace

void PointCloud::validate() const {
    if (points.size() < 4)
        throw std::invalid_argument("point cloud has fewer than 4 points");
    for (const Vec3& p : points)
        if (!finite(p)) throw std::invalid_argument("point cloud has non-finite coordinate");
}

void Scene::validate() const {
    if (object_a_id == object_b_id)
        throw std::invalid_argument("scene object ids must be distinct");
    cloud_a.validate();
    cloud_b.validate();
    if (!pose_a.quaternion_normalized() || !pose_b.quaternion_normalized())
        throw std::invalid_argument("scene pose quaternion not normalized");
}

Vec3 transform_point(const Vec3& p, const Pose& pose) {
    return pose.q.rotate(p) + pose.t;
}

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
    PointCloud out;
    out.points.reserve(cloud.points.size());
    for (const Vec3& p : cloud.points) {
        Vec3 q = transform_point(p, pose);
        if (!finite(q)) throw std::invalid_argument("transform produced non-finite point");
        out.points.push_back(q);
    }
    return out;
}

UnitCubeFrame fit_unit_cube(const PointCloud& points_a, const PointCloud& points_b) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    Vec3 lo{inf, inf, inf}, hi{-inf, -inf, -inf};
    auto grow = [&](const PointCloud& c) {
        for (const Vec3& p : c.points) {
            lo.x = std::min(lo.x, p.x); hi.x = std::max(hi.x, p.x);
            lo.y = std::min(lo.y, p.y); hi.y = std::max(hi.y, p.y);
            lo.z = std::min(lo.z, p.z); hi.z = std::max(hi.z, p.z);
        }
    };
    grow(points_a);
    grow(points_b);
    if (points_a.points.empty() && points_b.points.empty())
        throw std::invalid_argument("fit_unit_cube: empty scene");

    Vec3 extent = hi - lo;
    double longest = std::max({extent.x, extent.y, extent.z});
    if (longest <= 0.0)
        throw std::invalid_argument("fit_unit_cube: degenerate scene (zero extent)");

    UnitCubeFrame frame;
    frame.scale = 1.0 / longest;
    // Longest axis spans [0,1]; the others are centered.
    Vec3 center = (lo + hi) * 0.5;
    auto off = [&](double lo_a, double c_a, double ext_a) {
        return (ext_a == longest) ? lo_a : c_a - 0.5 * longest;
    };
    frame.offset = {off(lo.x, center.x, extent.x),
                    off(lo.y, center.y, extent.y),
                    off(lo.z, center.z, extent.z)};
    return frame;
}

QuatJacobian quat_jacobian(const Vec3& p, const Quat& q) {
    // R(q)p = p + 2w (v x p) + 2 v x (v x p)
    // d/dw = 2 (v x p)
    // d/dv = 2 ((v.p) I + v p^T - 2 p v^T - w [p]x)
    Vec3 v{q.x, q.y, q.z};
    Vec3 vxp = v.cross(p);
    double vdotp = v.dot(p);

    QuatJacobian J{};
    double vv[3] = {v.x, v.y, v.z};
    double pp[3] = {p.x, p.y, p.z};
    double cxp[3] = {vxp.x, vxp.y, vxp.z};
    // [p]x matrix
    double px[3][3] = {{0, -p.z, p.y}, {p.z, 0, -p.x}, {-p.y, p.x, 0}};
    for (int r = 0; r < 3; ++r) {
        J[r][0] = 2.0 * cxp[r];
        for (int c = 0; c < 3; ++c) {
            double m = (r == c ? vdotp : 0.0) + vv[r] * pp[c] - 2.0 * pp[r] * vv[c]
                       - q.w * px[r][c];
            J[r][c + 1] = 2.0 * m;
        }
    }
    return J;
}

namespace {

std::string next_line(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        // skip blank lines
        if (line.find_first_not_of(" \t") != std::string::npos) return line;
    }
    throw std::runtime_error("scene file: unexpected end of input");
}

Pose parse_pose_line(const std::string& line) {
    std::istringstream ss(line);
    std::string tag;
    Pose p;
    ss >> tag >> p.t.x >> p.t.y >> p.t.z >> p.q.w >> p.q.x >> p.q.y >> p.q.z;
    if (!ss || tag != "pose") throw std::runtime_error("scene file: bad pose line: " + line);
    // Keep the parsed bits so save -> load round-trips exactly; the scene
    // validator still rejects quaternions off unit norm beyond tolerance.
    return p;
}

PointCloud parse_points(std::istream& in, const std::string& header) {
    std::istringstream hs(header);
    std::string tag;
    std::size_t n = 0;
    hs >> tag >> n;
    if (!hs || tag != "points") throw std::runtime_error("scene file: bad points header: " + header);
    PointCloud cloud;
    cloud.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::istringstream ls(next_line(in));
        Vec3 p;
        ls >> p.x >> p.y >> p.z;
        if (!ls) throw std::runtime_error("scene file: bad point line");
        cloud.points.push_back(p);
    }
    cloud.validate();
    return cloud;
}

}  // namespace

Scene read_scene(std::istream& in) {
    Scene s;
    {
        std::istringstream hs(next_line(in));
        std::string tag;
        hs >> tag >> s.id >> s.object_a_id >> s.object_b_id;
        if (!hs || tag != "scene") throw std::runtime_error("scene file: bad header line");
    }
    s.pose_a = parse_pose_line(next_line(in));
    s.pose_b = parse_pose_line(next_line(in));
    s.cloud_a = parse_points(in, next_line(in));
    s.cloud_b = parse_points(in, next_line(in));
    s.validate();
    return s;
}

Scene load_scene(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open scene file: " + path);
    return read_scene(f);
}

void write_scene(std::ostream& out, const Scene& scene) {
    out << std::setprecision(17);
    out << "scene " << scene.id << ' ' << scene.object_a_id << ' ' << scene.object_b_id << '\n';
    for (const Pose* p : {&scene.pose_a, &scene.pose_b})
        out << "pose " << p->t.x << ' ' << p->t.y << ' ' << p->t.z << ' '
            << p->q.w << ' ' << p->q.x << ' ' << p->q.y << ' ' << p->q.z << '\n';
    for (const PointCloud* c : {&scene.cloud_a, &scene.cloud_b}) {
        out << "points " << c->points.size() << '\n';
        for (const Vec3& p : c->points) out << p.x << ' ' << p.y << ' ' << p.z << '\n';
    }
}

void save_scene(const std::string& path, const Scene& scene) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open scene file for writing: " + path);
    write_scene(f, scene);
}

}  // namespace spatial
