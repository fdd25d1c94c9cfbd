#pragma once

// Shared helpers for the unit and acceptance test binaries.

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "spatial/projection.hpp"

namespace spatial::testhelpers {

// Brute-force per-pixel renderer: for every pixel, scan all points, bin,
// take the minimum distance. Independent loop order from project().
inline ProjectionResult brute_force_project(const std::array<std::vector<Vec3>, 2>& cube_points,
                                            int res) {
    ProjectionResult out;
    out.images.resolution = res;
    out.ownership.resolution = res;
    const std::size_t npix = static_cast<std::size_t>(res) * res;
    for (int pl = 0; pl < 3; ++pl) {
        const PlaneOrientation& o = plane_orientation(static_cast<Plane>(pl));
        for (int ch = 0; ch < 2; ++ch) {
            auto& img = out.images.planes[pl][ch];
            auto& own = out.ownership.owner[pl][ch];
            img.assign(npix, 0.0);
            own.assign(npix, -1);
            for (int row = 0; row < res; ++row)
                for (int col = 0; col < res; ++col) {
                    double best = -1.0;
                    std::int32_t owner = -1;
                    for (std::size_t i = 0; i < cube_points[ch].size(); ++i) {
                        const Vec3& p = cube_points[ch][i];
                        double cc = o.col_off + o.col_sign * p[o.col_axis];
                        double rc = o.row_off + o.row_sign * p[o.row_axis];
                        int bc = std::min(res - 1, std::max(0, static_cast<int>(std::floor(cc * res))));
                        int br = std::min(res - 1, std::max(0, static_cast<int>(std::floor(rc * res))));
                        if (bc != col || br != row) continue;
                        double d = o.depth_off + o.depth_sign * p[o.depth_axis];
                        if (owner < 0 || d < best) {
                            best = d;
                            owner = static_cast<std::int32_t>(i);
                        }
                    }
                    if (owner >= 0) {
                        img[row * res + col] = 100.0 + 100.0 * best;
                        own[row * res + col] = owner;
                    }
                }
        }
    }
    return out;
}

// Planted-pixel-shift objective: render a random cloud and the same cloud
// translated by +k pixels along one world axis, feed the image residual
// through backward_project, and test whether the summed translation
// gradient points downhill (negative along the shifted axis). Returns the
// success fraction over `trials`.
inline double direction_success_rate(std::uint64_t seed, int trials, int res, int kernel_size) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coord(0.25, 0.75);
    const GradKernelPair kernels = make_grad_kernels(kernel_size);
    int ok = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const int axis = static_cast<int>(rng() % 3);
        const int k = 1 + static_cast<int>(rng() % 3);
        const double delta = static_cast<double>(k) / res;

        std::array<std::vector<Vec3>, 2> pts, shifted;
        for (int i = 0; i < 25; ++i) {
            Vec3 p{coord(rng), coord(rng), coord(rng)};
            Vec3 q = p;
            (axis == 0 ? q.x : axis == 1 ? q.y : q.z) += delta;
            pts[0].push_back(p);
            shifted[0].push_back(q);
        }

        ProjectionResult cur = project_points(pts, res);
        ProjectionResult tgt = project_points(shifted, res);
        GradImages grad;
        for (int pl = 0; pl < 3; ++pl)
            for (int ch = 0; ch < 2; ++ch) {
                grad[pl][ch] = cur.images.planes[pl][ch];
                for (std::size_t i = 0; i < grad[pl][ch].size(); ++i)
                    grad[pl][ch][i] -= tgt.images.planes[pl][ch][i];
            }
        auto grads = backward_project(grad, cur.ownership, kernels, 1.0,
                                      {pts[0].size(), pts[1].size()});
        Vec3 total{};
        for (const Vec3& g : grads[0]) total += g;
        const double along = axis == 0 ? total.x : axis == 1 ? total.y : total.z;
        if (along < 0.0) ++ok;
    }
    return static_cast<double>(ok) / trials;
}

}  // namespace spatial::testhelpers
