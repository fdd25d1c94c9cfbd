#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "spatial/projection.hpp"

using namespace spatial;

namespace {

using Rng = std::mt19937_64;

std::array<std::vector<Vec3>, 2> single_point(const Vec3& p) {
    return {std::vector<Vec3>{p}, std::vector<Vec3>{}};
}

}  // namespace

TEST_CASE("single point at (0.5, 0.5, 1.0)") {
    const int res = 100;
    ProjectionResult r = project_points(single_point({0.5, 0.5, 1.0}), res);
    // top plane: distance to z-1=0 is 0 -> pixel 100
    // the point is at y=0.5 -> row bin(1-0.5)=50, col bin(0.5)=50
    CHECK(r.images.at(Plane::Top, 0, 50, 50) == 100.0);
    // front: distance along y = 0.5 -> 150, row bin(1-z=0) clamps to... z=1 -> row 0
    CHECK(r.images.at(Plane::Front, 0, 0, 50) == 150.0);
    // side: distance along x = 0.5 -> 150
    CHECK(r.images.at(Plane::Side, 0, 0, 50) == 150.0);
    // everything else is background
    double sum = 0.0;
    for (int pl = 0; pl < 3; ++pl)
        for (int ch = 0; ch < 2; ++ch)
            for (double v : r.images.planes[pl][ch]) sum += v;
    CHECK(sum == 100.0 + 150.0 + 150.0);
}

TEST_CASE("min distance wins on shared pixels") {
    std::array<std::vector<Vec3>, 2> pts;
    pts[0] = {{0.5, 0.5, 0.4}, {0.5, 0.5, 0.9}};  // same top pixel
    ProjectionResult r = project_points(pts, 100);
    // top distances are 1-z: 0.6 and 0.1 -> min 0.1 -> 110
    CHECK(r.images.at(Plane::Top, 0, 50, 50) == doctest::Approx(110.0).epsilon(1e-12));
    CHECK(r.ownership.owner[0][0][50 * 100 + 50] == 1);  // index of the z=0.9 point
}

TEST_CASE("empty channel stays background") {
    ProjectionResult r = project_points(single_point({0.25, 0.25, 0.25}), 32);
    for (int pl = 0; pl < 3; ++pl)
        for (double v : r.images.planes[pl][1]) CHECK(v == 0.0);
}

TEST_CASE("points outside the unit cube are rejected") {
    CHECK_THROWS_AS(project_points(single_point({1.1, 0.5, 0.5}), 32), std::domain_error);
    CHECK_THROWS_AS(project_points(single_point({0.5, -0.01, 0.5}), 32), std::domain_error);
    // within tolerance is fine
    CHECK_NOTHROW(project_points(single_point({1.0 + 5e-7, 0.5, 0.5}), 32));
}

TEST_CASE("object pixels stay in [100, 200], background exactly 0") {
    Rng rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<std::vector<Vec3>, 2> pts;
    for (int i = 0; i < 30; ++i) pts[0].push_back({u(rng), u(rng), u(rng)});
    for (int i = 0; i < 30; ++i) pts[1].push_back({u(rng), u(rng), u(rng)});
    ProjectionResult r = project_points(pts, 16);
    for (int pl = 0; pl < 3; ++pl)
        for (int ch = 0; ch < 2; ++ch)
            for (std::size_t i = 0; i < r.images.planes[pl][ch].size(); ++i) {
                double v = r.images.planes[pl][ch][i];
                if (r.ownership.owner[pl][ch][i] < 0) {
                    CHECK(v == 0.0);
                } else {
                    CHECK(v >= 100.0);
                    CHECK(v <= 200.0);
                }
            }
}

TEST_CASE("channel swap symmetry") {
    Rng rng(2);
    std::normal_distribution<double> nd(0.0, 0.3);
    Scene s;
    s.id = "swap";
    s.object_a_id = "a";
    s.object_b_id = "b";
    for (int i = 0; i < 10; ++i) s.cloud_a.points.push_back({nd(rng), nd(rng), nd(rng)});
    for (int i = 0; i < 10; ++i) s.cloud_b.points.push_back({nd(rng) + 1, nd(rng), nd(rng)});
    PointCloud wa = transform_cloud(s.cloud_a, s.pose_a);
    PointCloud wb = transform_cloud(s.cloud_b, s.pose_b);
    UnitCubeFrame f = fit_unit_cube(wa, wb);
    ProjectionResult ab = project(s, f, ChannelAssignment::AB, 32);
    ProjectionResult ba = project(s, f, ChannelAssignment::BA, 32);
    for (int pl = 0; pl < 3; ++pl)
        for (int ch = 0; ch < 2; ++ch) CHECK(ab.images.planes[pl][ch] == ba.images.planes[pl][1 - ch]);
}

TEST_CASE("forward determinism") {
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<std::vector<Vec3>, 2> pts;
    for (int i = 0; i < 40; ++i) pts[0].push_back({u(rng), u(rng), u(rng)});
    ProjectionResult r1 = project_points(pts, 64);
    ProjectionResult r2 = project_points(pts, 64);
    for (int pl = 0; pl < 3; ++pl) {
        CHECK(r1.images.planes[pl][0] == r2.images.planes[pl][0]);
        CHECK(r1.ownership.owner[pl][0] == r2.ownership.owner[pl][0]);
    }
}

TEST_CASE("brute-force per-pixel oracle matches bit-exactly") {
    Rng rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> count(4, 25);
    for (int trial = 0; trial < 100; ++trial) {
        std::array<std::vector<Vec3>, 2> pts;
        for (int ch = 0; ch < 2; ++ch) {
            int n = count(rng);
            for (int i = 0; i < n; ++i) pts[ch].push_back({u(rng), u(rng), u(rng)});
        }
        const int res = 32;
        ProjectionResult fast = project_points(pts, res);
        ProjectionResult slow = testhelpers::brute_force_project(pts, res);
        for (int pl = 0; pl < 3; ++pl)
            for (int ch = 0; ch < 2; ++ch) {
                CHECK(fast.images.planes[pl][ch] == slow.images.planes[pl][ch]);
                CHECK(fast.ownership.owner[pl][ch] == slow.ownership.owner[pl][ch]);
            }
    }
}

TEST_CASE("size-3 kernels match the classic stencils") {
    GradKernelPair k = make_grad_kernels(3);
    CHECK(k.sy == std::vector<double>{1, 2, 1, 0, 0, 0, -1, -2, -1});
    CHECK(k.sx == std::vector<double>{1, 0, -1, 2, 0, -2, 1, 0, -1});
    CHECK(k.smooth_sum == 4.0);
}

TEST_CASE("size-5 kernels match the binomial construction oracle") {
    GradKernelPair k = make_grad_kernels(5);
    const double deriv[5] = {1, 2, 0, -2, -1};
    const double smooth[5] = {1, 4, 6, 4, 1};
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) {
            CHECK(k.sy[r * 5 + c] == deriv[r] * smooth[c]);
            CHECK(k.sx[r * 5 + c] == smooth[r] * deriv[c]);
        }
    CHECK(k.smooth_sum == 16.0);
}

TEST_CASE("kernel antisymmetry and zero sum for all sizes") {
    for (int size : {3, 5, 7}) {
        GradKernelPair k = make_grad_kernels(size);
        double sum_y = 0.0, sum_x = 0.0;
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c) {
                sum_y += k.sy[r * size + c];
                sum_x += k.sx[r * size + c];
                CHECK(k.sy[r * size + c] == -k.sy[(size - 1 - r) * size + c]);
                CHECK(k.sx[r * size + c] == -k.sx[r * size + (size - 1 - c)]);
            }
        CHECK(sum_y == 0.0);
        CHECK(sum_x == 0.0);
    }
    CHECK_THROWS_AS(make_grad_kernels(4), std::invalid_argument);
    CHECK_THROWS_AS(make_grad_kernels(9), std::invalid_argument);
}

TEST_CASE("backward_project zero gradients give zero point gradients") {
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<std::vector<Vec3>, 2> pts;
    for (int i = 0; i < 10; ++i) pts[0].push_back({u(rng), u(rng), u(rng)});
    ProjectionResult r = project_points(pts, 16);
    GradImages zero;
    for (int pl = 0; pl < 3; ++pl)
        for (int ch = 0; ch < 2; ++ch) zero[pl][ch].assign(16 * 16, 0.0);
    auto grads = backward_project(zero, r.ownership, make_grad_kernels(3), 0.5, {10, 0});
    for (const Vec3& g : grads[0]) {
        CHECK(g.x == 0.0);
        CHECK(g.y == 0.0);
        CHECK(g.z == 0.0);
    }
}

TEST_CASE("single-pixel impulse: hand-evaluated 3x3 stencil") {
    // three points on the top plane at pixels (4,4), (4,3), (3,4) of an
    // 8x8 image; impulse dC/du = 1 at (4,4), cube scale 2.
    const int res = 8;
    auto at_pixel = [&](int row, int col) {
        return Vec3{(col + 0.5) / res, 1.0 - (row + 0.5) / res, 0.5};
    };
    std::array<std::vector<Vec3>, 2> pts;
    pts[0] = {at_pixel(4, 4), at_pixel(4, 3), at_pixel(3, 4)};
    ProjectionResult r = project_points(pts, res);
    REQUIRE(r.ownership.owner[0][0][4 * res + 4] == 0);
    REQUIRE(r.ownership.owner[0][0][4 * res + 3] == 1);
    REQUIRE(r.ownership.owner[0][0][3 * res + 4] == 2);

    GradImages grad;
    for (int pl = 0; pl < 3; ++pl)
        for (int ch = 0; ch < 2; ++ch) grad[pl][ch].assign(res * res, 0.0);
    grad[0][0][4 * res + 4] = 1.0;

    const double scale = 2.0;
    auto grads = backward_project(grad, r.ownership, make_grad_kernels(3), scale, {3, 0});

    // impulse owner: depth channel only (Sobel center taps are zero);
    // top-plane depth is 1-z, chain factor -100, then / scale
    CHECK(grads[0][0].x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(grads[0][0].y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(grads[0][0].z == doctest::Approx(-100.0 / scale).epsilon(1e-12));

    // left neighbor: S_x response -2, in-plane factor res/smooth_sum = 2,
    // col axis is world x with sign +1 -> x grad = -(-2)*2/scale = +2
    CHECK(grads[0][1].x == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(grads[0][1].y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(grads[0][1].z == doctest::Approx(0.0).epsilon(1e-12));

    // upper neighbor: S_y response -2, row axis is world y with sign -1
    // -> y grad = -1 * -(-2) * 2 / scale = -2
    CHECK(grads[0][2].x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(grads[0][2].y == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(grads[0][2].z == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("in-plane gradient mass is conserved per plane/channel") {
    Rng rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd;
    const int res = 16;
    std::array<std::vector<Vec3>, 2> pts;
    for (int i = 0; i < 20; ++i) pts[0].push_back({u(rng), u(rng), u(rng)});
    ProjectionResult r = project_points(pts, res);

    // random gradient only on the top plane, channel 0
    GradImages grad;
    for (int pl = 0; pl < 3; ++pl)
        for (int ch = 0; ch < 2; ++ch) grad[pl][ch].assign(res * res, 0.0);
    for (double& v : grad[0][0]) v = nd(rng);

    GradKernelPair k = make_grad_kernels(5);
    auto grads = backward_project(grad, r.ownership, k, 1.0, {20, 0});

    std::vector<double> ux = correlate2d_same(grad[0][0], res, res, k.sx, 5);
    std::vector<double> uy = correlate2d_same(grad[0][0], res, res, k.sy, 5);
    const double inplane = static_cast<double>(res) / k.smooth_sum;
    double expect_x = 0.0, expect_y = 0.0, expect_z = 0.0;
    for (std::size_t pix = 0; pix < ux.size(); ++pix) {
        if (r.ownership.owner[0][0][pix] < 0) continue;
        expect_x += -ux[pix] * inplane;         // col axis x, sign +1
        expect_y += -1.0 * -uy[pix] * inplane;  // row axis y, sign -1
        expect_z += -100.0 * grad[0][0][pix];   // depth 1-z
    }
    Vec3 total{};
    for (const Vec3& g : grads[0]) total += g;
    CHECK(total.x == doctest::Approx(expect_x).epsilon(1e-9));
    CHECK(total.y == doctest::Approx(expect_y).epsilon(1e-9));
    CHECK(total.z == doctest::Approx(expect_z).epsilon(1e-9));
}

TEST_CASE("directional sanity of the planted-pixel-shift objective") {
    double rate = testhelpers::direction_success_rate(123, 100, 32, 5);
    CHECK(rate >= 0.9);
}

TEST_CASE("PGM dump writes the documented mapping") {
    namespace fs = std::filesystem;
    std::array<std::vector<Vec3>, 2> pts;
    pts[0] = {{0.5, 0.5, 1.0}};  // top pixel 100
    pts[1] = {{0.25, 0.25, 0.0}};
    ProjectionResult r = project_points(pts, 8);
    fs::path dir = fs::temp_directory_path() / "proj_pgm_test";
    fs::create_directories(dir);
    auto paths = dump_projection_pgm(r.images, "sc", dir.string());
    CHECK(paths.size() == 6);
    CHECK(fs::path(paths[0]).filename().string() == std::string("sc_top_0.pgm"));

    std::ifstream f(paths[0], std::ios::binary);
    std::string magic;
    int w, h, maxv;
    f >> magic >> w >> h >> maxv;
    CHECK(magic == "P5");
    CHECK(w == 8);
    CHECK(maxv == 255);
    f.get();  // single whitespace after header
    std::vector<unsigned char> data(64);
    f.read(reinterpret_cast<char*>(data.data()), 64);
    // value 100 -> 55; background 0 -> 0
    int row = 3, col = 4;  // bin(1-0.5)*8=4? row = floor((1-0.5)*8) = 4
    row = 4;
    CHECK(static_cast<int>(data[row * 8 + col]) == 55);
    CHECK(static_cast<int>(data[0]) == 0);
    fs::remove_all(dir);
}
