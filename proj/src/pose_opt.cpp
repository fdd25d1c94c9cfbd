#include "spatial/pose_opt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "spatial/projection.hpp"
#include "spatial/tensor.hpp"

namespace spatial {

void GeneralizationConfig::validate() const {
    if (lr <= 0.0 || max_steps < 0 || distance_threshold < 0.0)
        throw std::invalid_argument("invalid generalization config");
    if (kernel_size != 3 && kernel_size != 5 && kernel_size != 7)
        throw std::invalid_argument("generalization kernel size must be 3, 5 or 7");
    if (cap_anneal < 1.0 || total_cap_q <= 0.0)
        throw std::invalid_argument("invalid generalization trust-region config");
}

namespace {

struct StepEval {
    double distance = 0.0;
    PoseGradients grads;
    EmbedResult embed;
};

StepEval eval_step(const Scene& scene, const Tensor& ref_embedding, MetricNet& net,
                   const GradKernelPair& kernels, const UnitCubeFrame* frame = nullptr) {
    StepEval out;
    Rng rng(0);
    out.embed = embed_scene(scene, net, false, rng, eval_assignment(scene), frame);
    out.distance = euclidean_distance(out.embed.embedding, ref_embedding);

    std::vector<double> grad_e(out.embed.embedding.numel());
    for (std::size_t i = 0; i < grad_e.size(); ++i)
        grad_e[i] = out.embed.embedding.data[i] - ref_embedding.data[i];

    net.params().zero_grads();
    std::array<std::vector<double>, 3> input_grads;
    net.backward(out.embed.cache, grad_e, &input_grads);

    const int r = net.config().resolution;
    const std::size_t npix = static_cast<std::size_t>(r) * r;
    GradImages gi;
    for (int pl = 0; pl < 3; ++pl) {
        gi[pl][0].assign(input_grads[pl].begin(), input_grads[pl].begin() + npix);
        gi[pl][1].assign(input_grads[pl].begin() + npix, input_grads[pl].end());
    }

    const bool ab = out.embed.assignment == ChannelAssignment::AB;
    std::array<std::size_t, 2> counts{ab ? scene.cloud_a.size() : scene.cloud_b.size(),
                                      ab ? scene.cloud_b.size() : scene.cloud_a.size()};
    std::array<std::vector<Vec3>, 2> point_grads = backward_project(
        gi, out.embed.proj.ownership, kernels, out.embed.frame.scale, counts);

    auto chain = [](const std::vector<Vec3>& g, const PointCloud& local, const Pose& pose,
                    Vec3& dt, std::array<double, 4>& dq) {
        dt = Vec3{};
        dq = {0.0, 0.0, 0.0, 0.0};
        for (std::size_t i = 0; i < g.size(); ++i) {
            dt += g[i];
            QuatJacobian J = quat_jacobian(local.points[i], pose.q);
            double gr[3] = {g[i].x, g[i].y, g[i].z};
            for (int c = 0; c < 4; ++c)
                dq[static_cast<std::size_t>(c)] +=
                    J[0][c] * gr[0] + J[1][c] * gr[1] + J[2][c] * gr[2];
        }
    };
    chain(point_grads[ab ? 0 : 1], scene.cloud_a, scene.pose_a, out.grads.d_t_a,
          out.grads.d_q_a);
    chain(point_grads[ab ? 1 : 0], scene.cloud_b, scene.pose_b, out.grads.d_t_b,
          out.grads.d_q_b);
    return out;
}

bool grads_finite(const PoseGradients& g) {
    for (double v : {g.d_t_a.x, g.d_t_a.y, g.d_t_a.z, g.d_t_b.x, g.d_t_b.y, g.d_t_b.z})
        if (!std::isfinite(v)) return false;
    for (const auto& q : {g.d_q_a, g.d_q_b})
        for (double v : q)
            if (!std::isfinite(v)) return false;
    return true;
}

void poses_to_vec(const Pose& a, const Pose& b, std::vector<double>& v) {
    v = {a.t.x, a.t.y, a.t.z, a.q.w, a.q.x, a.q.y, a.q.z,
         b.t.x, b.t.y, b.t.z, b.q.w, b.q.x, b.q.y, b.q.z};
}

void vec_to_poses(const std::vector<double>& v, Pose& a, Pose& b) {
    a.t = {v[0], v[1], v[2]};
    a.q = Quat{v[3], v[4], v[5], v[6]}.normalized();
    b.t = {v[7], v[8], v[9]};
    b.q = Quat{v[10], v[11], v[12], v[13]}.normalized();
}

}  // namespace

PoseGradients pose_gradients(const Scene& test, const Tensor& reference_embedding,
                             const MetricNet& net, int kernel_size,
                             const UnitCubeFrame* frozen_frame) {
    MetricNet local(net.config(), net.params());
    GradKernelPair kernels = make_grad_kernels(kernel_size);
    return eval_step(test, reference_embedding, local, kernels, frozen_frame).grads;
}

GeneralizationResult generalize(const Scene& reference, const Scene& test,
                                const MetricNet& net, const GeneralizationConfig& config) {
    return generalize(reference, test, net, config, "");
}

UnitCubeFrame generalization_frame(const Scene& reference, const Scene* test) {
    PointCloud wa = transform_cloud(reference.cloud_a, reference.pose_a);
    PointCloud wb = transform_cloud(reference.cloud_b, reference.pose_b);
    if (test) {
        // Cover the starting test scene too, so the first step is always
        // inside the projection domain.
        PointCloud ta = transform_cloud(test->cloud_a, test->pose_a);
        PointCloud tb = transform_cloud(test->cloud_b, test->pose_b);
        wa.points.insert(wa.points.end(), ta.points.begin(), ta.points.end());
        wb.points.insert(wb.points.end(), tb.points.begin(), tb.points.end());
    }
    UnitCubeFrame base = fit_unit_cube(wa, wb);
    // Pad the cube by 10% on every side so poses displaced during the
    // optimization keep their points inside the projection domain:
    // cube' = (cube + m) / (1 + 2m).
    constexpr double m = 0.15;
    UnitCubeFrame padded;
    padded.scale = base.scale / (1.0 + 2.0 * m);
    padded.offset = base.offset - Vec3{m, m, m} * (1.0 / base.scale);
    return padded;
}

double framed_distance(const Scene& a, const Scene& b, const MetricNet& net,
                       const UnitCubeFrame& frame) {
    Rng rng(0);
    Tensor ea = embed_scene(a, net, false, rng, eval_assignment(a), &frame).embedding;
    Tensor eb = embed_scene(b, net, false, rng, eval_assignment(b), &frame).embedding;
    return euclidean_distance(ea, eb);
}

GeneralizationResult generalize(const Scene& reference, const Scene& test,
                                const MetricNet& net, const GeneralizationConfig& config,
                                const std::string& dump_dir) {
    config.validate();
    reference.validate();
    test.validate();

    GeneralizationResult result;
    result.final_scene = test;

    // One shared frame for the whole run: a per-step unit-cube refit would
    // move both objects' pixels whenever one pose changes, adding a gradient
    // term the Sobel chain does not track.
    const UnitCubeFrame frame = generalization_frame(reference, &test);
    Rng ref_rng(0);
    Tensor ref_embedding =
        embed_scene(reference, net, false, ref_rng, eval_assignment(reference), &frame)
            .embedding;
    MetricNet local(net.config(), net.params());
    GradKernelPair kernels = make_grad_kernels(config.kernel_size);

    AdamState adam;
    adam.lr = config.lr;
    std::vector<double> params, prev_params;
    Scene current = test;
    poses_to_vec(current.pose_a, current.pose_b, params);
    const std::vector<double> init_params = params;
    // Total translation bound: most of the frame padding in world meters,
    // so points cannot leave the projection domain mid-run.
    const double t_total_cap = 0.8 * 0.15 / (frame.scale * (1.0 + 2.0 * 0.15));
    const double q_total_cap = config.total_cap_q;

    double best_d = std::numeric_limits<double>::infinity();
    bool lr_halved = false;

    for (int step = 0; step <= config.max_steps; ++step) {
        StepEval eval;
        try {
            eval = eval_step(current, ref_embedding, local, kernels, &frame);
        } catch (const std::logic_error& e) {
            // point escaped the padded cube: reject the step that led here
            if (!lr_halved && !prev_params.empty()) {
                lr_halved = true;
                adam.lr *= 0.5;
                params = prev_params;
                vec_to_poses(params, current.pose_a, current.pose_b);
                continue;
            }
            result.aborted = true;
            result.abort_reason = std::string("degenerate scene during optimization: ") +
                                  e.what();
            break;
        }

        result.trace.entries.push_back({step, eval.distance, current.pose_a, current.pose_b});
        if (step == 0) result.initial_distance = eval.distance;
        if (eval.distance < best_d) {
            best_d = eval.distance;
            result.final_scene = current;
        }
        if (!dump_dir.empty())
            dump_projection_pgm(eval.embed.proj.images,
                                current.id + "_step" + std::to_string(step), dump_dir);

        if (eval.distance < config.distance_threshold || step == config.max_steps) break;

        if (!grads_finite(eval.grads)) {
            result.aborted = true;
            result.abort_reason = "non-finite pose gradient at step " + std::to_string(step);
            break;
        }

        std::vector<double> g = {
            eval.grads.d_t_a.x,  eval.grads.d_t_a.y,  eval.grads.d_t_a.z,
            eval.grads.d_q_a[0], eval.grads.d_q_a[1], eval.grads.d_q_a[2],
            eval.grads.d_q_a[3],
            eval.grads.d_t_b.x,  eval.grads.d_t_b.y,  eval.grads.d_t_b.z,
            eval.grads.d_q_b[0], eval.grads.d_q_b[1], eval.grads.d_q_b[2],
            eval.grads.d_q_b[3]};
        prev_params = params;
        adam_step(params, g, adam);
        const double anneal =
            std::pow(1.0 / config.cap_anneal,
                     static_cast<double>(step) / std::max(1, config.max_steps));
        const double t_cap = config.step_cap_t * anneal;
        const double q_cap = config.step_cap_q * anneal;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const bool is_t = (i % 7) < 3;
            const double cap = is_t ? t_cap : q_cap;
            if (cap > 0.0)
                params[i] = std::clamp(params[i], prev_params[i] - cap, prev_params[i] + cap);
            const double total = is_t ? t_total_cap : q_total_cap;
            params[i] = std::clamp(params[i], init_params[i] - total, init_params[i] + total);
        }
        vec_to_poses(params, current.pose_a, current.pose_b);
    }

    if (result.trace.entries.empty()) {
        // Aborted before the first evaluation: report the unchanged scene.
        result.final_scene = test;
        result.initial_distance = result.final_distance =
            framed_distance(reference, test, net, frame);
    } else {
        result.final_distance = best_d;
    }
    return result;
}

void save_trace(const std::string& path, const OptimizationTrace& trace) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write trace: " + path);
    f << "step,distance,txA,tyA,tzA,qwA,qxA,qyA,qzA,txB,tyB,tzB,qwB,qxB,qyB,qzB\n";
    f.precision(17);
    for (const TraceEntry& e : trace.entries) {
        f << e.step << ',' << e.distance;
        for (const Pose* p : {&e.pose_a, &e.pose_b})
            f << ',' << p->t.x << ',' << p->t.y << ',' << p->t.z << ',' << p->q.w << ','
              << p->q.x << ',' << p->q.y << ',' << p->q.z;
        f << '\n';
    }
}

std::vector<std::pair<std::string, double>> scene_distance_report(
    const Scene& reference, const std::vector<Scene>& candidates, const MetricNet& net) {
    Tensor ref = embed_scene_eval(reference, net).embedding;
    std::vector<std::pair<std::string, double>> out;
    for (const Scene& c : candidates) {
        Tensor e = embed_scene_eval(c, net).embedding;
        out.emplace_back(c.id, euclidean_distance(ref, e));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    return out;
}

}  // namespace spatial
