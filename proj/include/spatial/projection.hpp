#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spatial/geometry.hpp"

namespace spatial {

enum class Plane : int { Top = 0, Front = 1, Side = 2 };
inline const char* plane_name(Plane p) {
    switch (p) {
        case Plane::Top: return "top";
        case Plane::Front: return "front";
        default: return "side";
    }
}

enum class ChannelAssignment { AB, BA };

// Orientation of one projection plane: which world axes map to image
// column / row / depth, with signs, plus the depth offset. For an axis a
// with sign s and offset o the plane coordinate is o + s * cube_coord(a).
// Centralized so the image conventions are auditable in one place.
struct PlaneOrientation {
    int col_axis; double col_sign; double col_off;
    int row_axis; double row_sign; double row_off;
    int depth_axis; double depth_sign; double depth_off;
};
const PlaneOrientation& plane_orientation(Plane p);

// One 2-channel depth image per plane, plane order [top, front, side].
// Pixel values: 0 background, 100 + 100*d for object pixels, d = smallest
// distance (in unit-cube units) of any point binned to that pixel.
struct DepthImageTriple {
    int resolution = 0;  // H == W
    // planes[plane][channel][row * W + col]
    std::array<std::array<std::vector<double>, 2>, 3> planes;

    double at(Plane p, int channel, int row, int col) const {
        return planes[static_cast<int>(p)][channel][row * resolution + col];
    }
};

// Index of the point realizing the per-pixel min distance, -1 for background.
// Indices refer to the owning object's cloud (channel-local).
struct PixelOwnership {
    int resolution = 0;
    std::array<std::array<std::vector<std::int32_t>, 2>, 3> owner;
};

// Odd-sized square derivative kernels: S_y approximates d/dy (rows),
// S_x approximates d/dx (cols). smooth_sum is the normalization weight
// (sum of the binomial smoothing vector).
struct GradKernelPair {
    int size = 3;
    std::vector<double> sy, sx;  // row-major size x size
    double smooth_sum = 4.0;
};

struct ProjectionResult {
    DepthImageTriple images;
    PixelOwnership ownership;
};

// Renders the scene (poses applied, then mapped through `frame`) to the
// three orthogonal depth images. Points outside [0,1]^3 beyond 1e-6 after
// mapping raise a domain error.
ProjectionResult project(const Scene& scene, const UnitCubeFrame& frame,
                         ChannelAssignment assignment, int resolution = 100);

// Same, over already unit-cube-mapped per-channel point sets.
ProjectionResult project_points(const std::array<std::vector<Vec3>, 2>& cube_points,
                                int resolution);

GradKernelPair make_grad_kernels(int size);

// Gradient images, same layout as DepthImageTriple.planes.
using GradImages = std::array<std::array<std::vector<double>, 2>, 3>;

// Routes image-space gradients back to per-point 3D gradients (in world
// meters, i.e. divided by the unit-cube scale). Output: one Vec3 per point
// per channel, indexed like the ownership's channel-local point indices.
std::array<std::vector<Vec3>, 2> backward_project(
    const GradImages& grad_images, const PixelOwnership& ownership,
    const GradKernelPair& kernels, double cube_scale,
    const std::array<std::size_t, 2>& point_counts);

// Same-size correlation with zero padding.
std::vector<double> correlate2d_same(const std::vector<double>& image, int h, int w,
                                     const std::vector<double>& kernel, int ksize);

// Debug dump: one PGM (maxval 255) per plane/channel, named
// <scene_id>_<plane>_<channel>.pgm. Returns written paths.
std::vector<std::string> dump_projection_pgm(const DepthImageTriple& images,
                                             const std::string& scene_id,
                                             const std::string& out_dir);

}  // namespace spatial
