#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spatial/geometry.hpp"
#include "spatial/network.hpp"

namespace spatial {

struct GeneralizationConfig {
    double lr = 0.1;
    int max_steps = 300;
    int kernel_size = 5;          // Sobel-derived backward kernel
    double distance_threshold = 0.01;  // stop when d drops below this
    std::uint64_t seed = 1;

    // Per-step trust region. Raw Adam steps at lr 0.1 dwarf the sub-pixel
    // scale of the depth images, so each step is clamped per coordinate:
    // translations to step_cap_t meters, quaternion components to
    // step_cap_q. Both caps shrink by a factor cap_anneal across the run
    // (coarse moves first, fine settling last). cap_anneal = 1 disables
    // the decay; caps <= 0 disable clamping entirely.
    double step_cap_t = 0.002;
    double step_cap_q = 0.01;
    double cap_anneal = 40.0;
    // Total displacement bound for quaternion components from their start
    // values; translations are bounded by the projection-frame padding.
    double total_cap_q = 0.02;

    void validate() const;
};

struct TraceEntry {
    int step = 0;
    double distance = 0.0;
    Pose pose_a, pose_b;
};

struct OptimizationTrace {
    std::vector<TraceEntry> entries;
};

struct GeneralizationResult {
    Scene final_scene;            // best-distance scene encountered
    OptimizationTrace trace;
    double initial_distance = 0.0;
    double final_distance = 0.0;
    bool aborted = false;
    std::string abort_reason;
};

// The unit-cube frame used for every embedding inside generalize: a frame
// covering the reference (and, when given, the starting test scene), padded
// so displaced test points stay inside the cube. Freezing one frame keeps
// the forward distance consistent with the Sobel-chain gradient (a per-step
// refit would add an untracked gradient term through the normalization).
UnitCubeFrame generalization_frame(const Scene& reference, const Scene* test = nullptr);

// Distance between two scenes embedded under the same fixed frame.
double framed_distance(const Scene& a, const Scene& b, const MetricNet& net,
                       const UnitCubeFrame& frame);

// Optimizes the test scene's two poses with Adam so its embedding
// approaches the (frozen) reference embedding. Loss is 1/2 d^2.
GeneralizationResult generalize(const Scene& reference, const Scene& test,
                                const MetricNet& net, const GeneralizationConfig& config);

// Per-step projection dumps are written when dump_dir is non-empty.
GeneralizationResult generalize(const Scene& reference, const Scene& test,
                                const MetricNet& net, const GeneralizationConfig& config,
                                const std::string& dump_dir);

void save_trace(const std::string& path, const OptimizationTrace& trace);

// Candidates sorted ascending by metric distance to the reference,
// ties broken by scene id.
std::vector<std::pair<std::string, double>> scene_distance_report(
    const Scene& reference, const std::vector<Scene>& candidates, const MetricNet& net);

// d(loss)/d(translation, quaternion) of both objects for the current test
// scene; exposed for the gradient-direction property tests.
struct PoseGradients {
    Vec3 d_t_a, d_t_b;
    std::array<double, 4> d_q_a{}, d_q_b{};
};

PoseGradients pose_gradients(const Scene& test, const Tensor& reference_embedding,
                             const MetricNet& net, int kernel_size,
                             const UnitCubeFrame* frozen_frame = nullptr);

}  // namespace spatial
