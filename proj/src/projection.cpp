#include "spatial/projection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace spatial {

namespace {

constexpr double kPixelBias = 100.0;
constexpr double kDepthScale = 100.0;
constexpr double kDomainTol = 1e-6;

constexpr PlaneOrientation kOrientations[3] = {
    // top (z-1=0): col = x, row = 1-y, depth = 1-z
    {0, +1.0, 0.0, 1, -1.0, 1.0, 2, -1.0, 1.0},
    // front (y=0): col = x, row = 1-z, depth = y
    {0, +1.0, 0.0, 2, -1.0, 1.0, 1, +1.0, 0.0},
    // side (x=0): col = y, row = 1-z, depth = x
    {1, +1.0, 0.0, 2, -1.0, 1.0, 0, +1.0, 0.0},
};

int bin(double coord, int res) {
    int i = static_cast<int>(std::floor(coord * res));
    return std::clamp(i, 0, res - 1);
}

}  // namespace

const PlaneOrientation& plane_orientation(Plane p) {
    return kOrientations[static_cast<int>(p)];
}

ProjectionResult project_points(const std::array<std::vector<Vec3>, 2>& cube_points,
                                int resolution) {
    if (resolution <= 0) throw std::invalid_argument("projection resolution must be positive");
    ProjectionResult res;
    res.images.resolution = resolution;
    res.ownership.resolution = resolution;
    const std::size_t npix = static_cast<std::size_t>(resolution) * resolution;
    for (int pl = 0; pl < 3; ++pl)
        for (int ch = 0; ch < 2; ++ch) {
            res.images.planes[pl][ch].assign(npix, 0.0);
            res.ownership.owner[pl][ch].assign(npix, -1);
        }

    for (int ch = 0; ch < 2; ++ch) {
        const auto& pts = cube_points[ch];
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const Vec3& p = pts[i];
            for (double c : {p.x, p.y, p.z})
                if (c < -kDomainTol || c > 1.0 + kDomainTol)
                    throw std::domain_error("project: point outside unit cube");
            for (int pl = 0; pl < 3; ++pl) {
                const PlaneOrientation& o = kOrientations[pl];
                double cc = o.col_off + o.col_sign * p[o.col_axis];
                double rc = o.row_off + o.row_sign * p[o.row_axis];
                double d = o.depth_off + o.depth_sign * p[o.depth_axis];
                std::size_t idx =
                    static_cast<std::size_t>(bin(rc, resolution)) * resolution + bin(cc, resolution);
                double value = kPixelBias + kDepthScale * d;
                double& cell = res.images.planes[pl][ch][idx];
                if (cell == 0.0 || value < cell) {
                    cell = value;
                    res.ownership.owner[pl][ch][idx] = static_cast<std::int32_t>(i);
                }
            }
        }
    }
    return res;
}

ProjectionResult project(const Scene& scene, const UnitCubeFrame& frame,
                         ChannelAssignment assignment, int resolution) {
    PointCloud wa = transform_cloud(scene.cloud_a, scene.pose_a);
    PointCloud wb = transform_cloud(scene.cloud_b, scene.pose_b);
    std::array<std::vector<Vec3>, 2> cube;
    const PointCloud* first = (assignment == ChannelAssignment::AB) ? &wa : &wb;
    const PointCloud* second = (assignment == ChannelAssignment::AB) ? &wb : &wa;
    cube[0].reserve(first->size());
    for (const Vec3& p : first->points) cube[0].push_back(frame.to_cube(p));
    cube[1].reserve(second->size());
    for (const Vec3& p : second->points) cube[1].push_back(frame.to_cube(p));
    return project_points(cube, resolution);
}

GradKernelPair make_grad_kernels(int size) {
    if (size != 3 && size != 5 && size != 7)
        throw std::invalid_argument("grad kernel size must be 3, 5 or 7");

    auto binomial = [](int n) {
        std::vector<double> row{1.0};
        for (int i = 1; i < n; ++i) {
            std::vector<double> next(row.size() + 1, 0.0);
            for (std::size_t j = 0; j < row.size(); ++j) {
                next[j] += row[j];
                next[j + 1] += row[j];
            }
            row = std::move(next);
        }
        return row;
    };

    std::vector<double> smooth = binomial(size);
    // deriv = [1,0,-1] convolved with the binomial row of length size-2
    std::vector<double> base{1.0, 0.0, -1.0};
    std::vector<double> inner = binomial(size - 2);
    std::vector<double> deriv(size, 0.0);
    for (std::size_t i = 0; i < base.size(); ++i)
        for (std::size_t j = 0; j < inner.size(); ++j) deriv[i + j] += base[i] * inner[j];

    GradKernelPair k;
    k.size = size;
    k.sy.resize(static_cast<std::size_t>(size) * size);
    k.sx.resize(static_cast<std::size_t>(size) * size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            k.sy[r * size + c] = deriv[r] * smooth[c];
            k.sx[r * size + c] = smooth[r] * deriv[c];
        }
    k.smooth_sum = 0.0;
    for (double s : smooth) k.smooth_sum += s;
    return k;
}

std::vector<double> correlate2d_same(const std::vector<double>& image, int h, int w,
                                     const std::vector<double>& kernel, int ksize) {
    if (image.size() != static_cast<std::size_t>(h) * w)
        throw std::invalid_argument("correlate2d_same: image size mismatch");
    std::vector<double> out(image.size(), 0.0);
    const int half = ksize / 2;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int kr = 0; kr < ksize; ++kr) {
                int rr = r + kr - half;
                if (rr < 0 || rr >= h) continue;
                for (int kc = 0; kc < ksize; ++kc) {
                    int cc = c + kc - half;
                    if (cc < 0 || cc >= w) continue;
                    acc += kernel[kr * ksize + kc] * image[rr * w + cc];
                }
            }
            out[r * w + c] = acc;
        }
    return out;
}

std::array<std::vector<Vec3>, 2> backward_project(
    const GradImages& grad_images, const PixelOwnership& ownership,
    const GradKernelPair& kernels, double cube_scale,
    const std::array<std::size_t, 2>& point_counts) {
    const int res = ownership.resolution;
    const std::size_t npix = static_cast<std::size_t>(res) * res;

    std::array<std::vector<Vec3>, 2> grads;
    for (int ch = 0; ch < 2; ++ch) grads[ch].assign(point_counts[ch], Vec3{});

    // Pixel-to-unit-cube conversion for the in-plane Sobel responses.
    const double inplane = static_cast<double>(res) / kernels.smooth_sum;

    for (int pl = 0; pl < 3; ++pl) {
        const PlaneOrientation& o = kOrientations[pl];
        for (int ch = 0; ch < 2; ++ch) {
            const std::vector<double>& u = grad_images[pl][ch];
            if (u.size() != npix) throw std::invalid_argument("backward_project: shape mismatch");
            std::vector<double> uy = correlate2d_same(u, res, res, kernels.sy, kernels.size);
            std::vector<double> ux = correlate2d_same(u, res, res, kernels.sx, kernels.size);
            const std::vector<std::int32_t>& own = ownership.owner[pl][ch];
            for (std::size_t pix = 0; pix < npix; ++pix) {
                std::int32_t pt = own[pix];
                if (pt < 0) continue;
                Vec3& g = grads[ch][static_cast<std::size_t>(pt)];
                double contrib[3] = {0.0, 0.0, 0.0};
                // depth channel: pixel value slope is 100 * depth_sign
                contrib[o.depth_axis] += o.depth_sign * kDepthScale * u[pix];
                // in-plane: Sobel responses approximate the (negated)
                // derivative along increasing col/row coordinates
                contrib[o.col_axis] += o.col_sign * (-ux[pix]) * inplane;
                contrib[o.row_axis] += o.row_sign * (-uy[pix]) * inplane;
                g.x += contrib[0];
                g.y += contrib[1];
                g.z += contrib[2];
            }
        }
    }

    // back to world meters
    const double inv_scale = 1.0 / cube_scale;
    for (int ch = 0; ch < 2; ++ch)
        for (Vec3& g : grads[ch]) g = g * inv_scale;
    return grads;
}

std::vector<std::string> dump_projection_pgm(const DepthImageTriple& images,
                                             const std::string& scene_id,
                                             const std::string& out_dir) {
    std::vector<std::string> paths;
    const int res = images.resolution;
    for (int pl = 0; pl < 3; ++pl)
        for (int ch = 0; ch < 2; ++ch) {
            std::string path = out_dir + "/" + scene_id + "_" +
                               plane_name(static_cast<Plane>(pl)) + "_" + std::to_string(ch) +
                               ".pgm";
            std::ofstream f(path, std::ios::binary);
            if (!f) throw std::runtime_error("cannot write " + path);
            f << "P5\n" << res << ' ' << res << "\n255\n";
            for (double v : images.planes[pl][ch]) {
                // 0 -> 0, [100,200] -> [55,255]
                int g = (v == 0.0) ? 0 : static_cast<int>(std::lround(55.0 + (v - 100.0) * 2.0));
                f.put(static_cast<char>(std::clamp(g, 0, 255)));
            }
            paths.push_back(path);
        }
    return paths;
}

}  // namespace spatial
