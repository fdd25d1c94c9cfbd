#include "spatial/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace spatial {

void TrainConfig::validate() const {
    if (iterations < 0 || batch_triplets <= 0 || momentum < 0.0 || momentum >= 1.0 ||
        schedule.initial_lr <= 0.0 || schedule.period <= 0 || noise_t < 0.0 || noise_deg < 0.0)
        throw std::invalid_argument("invalid training config");
}

Triplet sample_triplet(const SimilarityLabels& labels, Rng& rng) {
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (!labels.class_of[i].empty()) by_class[labels.class_of[i]].push_back(i);

    std::vector<const std::vector<std::size_t>*> eligible;  // classes with a positive pair
    std::size_t total = 0;
    for (const auto& [cls, members] : by_class) {
        total += members.size();
        if (members.size() >= 2) eligible.push_back(&members);
    }
    if (eligible.empty() || by_class.size() < 2)
        throw std::runtime_error("sample_triplet: no valid triplet exists");

    const std::vector<std::size_t>& members =
        *eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
    std::size_t anchor = members[std::uniform_int_distribution<std::size_t>(
        0, members.size() - 1)(rng)];
    std::size_t positive = anchor;
    while (positive == anchor)
        positive = members[std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng)];

    std::size_t n_neg = total - members.size();
    if (n_neg == 0) throw std::runtime_error("sample_triplet: no dissimilar scene exists");
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n_neg - 1)(rng);
    std::size_t negative = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels.class_of[i].empty() || labels.y(anchor, i) != 1) continue;
        if (pick-- == 0) {
            negative = i;
            break;
        }
    }
    return Triplet{anchor, positive, negative};
}

namespace {

Vec3 scene_centroid(const Scene& scene) {
    Vec3 sum{};
    std::size_t n = 0;
    for (auto pair : {std::pair{&scene.cloud_a, &scene.pose_a},
                      std::pair{&scene.cloud_b, &scene.pose_b}}) {
        for (const Vec3& p : pair.first->points) {
            sum += transform_point(p, *pair.second);
            ++n;
        }
    }
    return sum * (1.0 / static_cast<double>(n));
}

Pose rotate_pose_about(const Pose& pose, const Quat& rot, const Vec3& center) {
    return Pose{rot.rotate(pose.t - center) + center, (rot * pose.q).normalized()};
}

}  // namespace

Scene rotate_scene_z(const Scene& scene, double angle_rad) {
    Quat rot = Quat::from_axis_angle({0.0, 0.0, 1.0}, angle_rad);
    Vec3 c = scene_centroid(scene);
    Scene out = scene;
    out.pose_a = rotate_pose_about(scene.pose_a, rot, c);
    out.pose_b = rotate_pose_about(scene.pose_b, rot, c);
    return out;
}

Scene augment_scene(const Scene& scene, Rng& rng, double noise_t, double noise_deg) {
    std::normal_distribution<double> tn(0.0, noise_t > 0.0 ? noise_t : 1e-300);
    Scene out = scene;
    for (Pose* pose : {&out.pose_a, &out.pose_b}) {
        Vec3 dt{noise_t > 0.0 ? tn(rng) : 0.0, noise_t > 0.0 ? tn(rng) : 0.0,
                noise_t > 0.0 ? tn(rng) : 0.0};
        pose->t += dt;
        double phi = std::uniform_real_distribution<double>(0.0, 2.0 * M_PI)(rng);
        double cosu = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
        double sinu = std::sqrt(std::max(0.0, 1.0 - cosu * cosu));
        Vec3 axis{sinu * std::cos(phi), sinu * std::sin(phi), cosu};
        double ang = std::uniform_real_distribution<double>(0.0, noise_deg * M_PI / 180.0)(rng);
        pose->q = (Quat::from_axis_angle(axis, ang) * pose->q).normalized();
    }
    double zang = std::uniform_real_distribution<double>(0.0, 2.0 * M_PI)(rng);
    return rotate_scene_z(out, zang);
}

namespace {

struct FlatParams {
    std::vector<double> values;
    std::vector<double> grads;

    void gather(NetworkParams& p) {
        values.clear();
        grads.clear();
        p.for_each([this](const std::string&, Tensor& t) {
            values.insert(values.end(), t.data.begin(), t.data.end());
            t.ensure_grad();
            grads.insert(grads.end(), t.grad.begin(), t.grad.end());
        });
    }
    void scatter_values(NetworkParams& p) const {
        std::size_t off = 0;
        p.for_each([this, &off](const std::string&, Tensor& t) {
            std::copy(values.begin() + static_cast<std::ptrdiff_t>(off),
                      values.begin() + static_cast<std::ptrdiff_t>(off + t.numel()),
                      t.data.begin());
            off += t.numel();
        });
    }
};

}  // namespace

TrainResult train(const std::vector<Scene>& scenes, const SimilarityLabels& labels,
                  const TrainConfig& config, MetricNet& net) {
    config.validate();
    if (scenes.empty()) throw std::invalid_argument("train: empty dataset");
    if (scenes.size() != labels.size())
        throw std::invalid_argument("train: scenes/labels size mismatch");

    TrainResult result;
    Rng rng(config.seed);
    SgdMomentumState sgd;
    sgd.momentum = config.momentum;
    FlatParams flat;

    Triplet fixed{};
    if (config.overfit_one_batch) fixed = sample_triplet(labels, rng);

    for (std::int64_t step = 0; step < config.iterations; ++step) {
        const double lr = lr_at(config.schedule, step);
        net.params().zero_grads();
        double loss_sum = 0.0;
        std::vector<Triplet> batch_ids;

        const int batch = config.overfit_one_batch ? 1 : config.batch_triplets;
        for (int b = 0; b < batch; ++b) {
            Triplet t = config.overfit_one_batch ? fixed : sample_triplet(labels, rng);
            batch_ids.push_back(t);
            std::array<Scene, 3> branch{scenes[t.anchor], scenes[t.positive],
                                        scenes[t.negative]};
            std::array<MetricNet::ForwardCache, 3> caches;
            std::array<Tensor, 3> embeds;
            const bool training_mode = !config.overfit_one_batch;
            for (int i = 0; i < 3; ++i) {
                Scene s = (config.augment && !config.overfit_one_batch)
                              ? augment_scene(branch[i], rng, config.noise_t, config.noise_deg)
                              : branch[i];
                ChannelAssignment assign = eval_assignment(s);
                if (config.random_channel && !config.overfit_one_batch && (rng() & 1))
                    assign = assign == ChannelAssignment::AB ? ChannelAssignment::BA
                                                             : ChannelAssignment::AB;
                EmbedResult er = embed_scene(s, net, training_mode, rng, assign);
                embeds[i] = er.embedding;
                caches[i] = std::move(er.cache);
            }
            TripletLossResult tl = triplet_loss(embeds[0], embeds[1], embeds[2]);
            loss_sum += tl.loss;
            net.backward(caches[0], tl.grad_anchor, nullptr);
            net.backward(caches[1], tl.grad_pos, nullptr);
            net.backward(caches[2], tl.grad_neg, nullptr);
        }

        const double loss = loss_sum / batch;
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "train: NaN loss at step " << step << " (lr " << lr << ", batch ids";
            for (const Triplet& t : batch_ids)
                msg << ' ' << t.anchor << '/' << t.positive << '/' << t.negative;
            msg << ')';
            throw std::runtime_error(msg.str());
        }

        flat.gather(net.params());
        const double inv_batch = 1.0 / batch;
        for (double& g : flat.grads) g *= inv_batch;
        if (config.max_grad_norm > 0.0) {
            double sq = 0.0;
            for (double g : flat.grads) sq += g * g;
            const double norm = std::sqrt(sq);
            if (norm > config.max_grad_norm) {
                const double scale = config.max_grad_norm / norm;
                for (double& g : flat.grads) g *= scale;
            }
        }
        sgd_momentum_step(flat.values, flat.grads, sgd, lr);
        flat.scatter_values(net.params());

        result.log.push_back({step, lr, loss});
    }
    return result;
}

void save_train_log(const std::string& path, const std::vector<TrainLogEntry>& log) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write training log: " + path);
    f << "step,lr,loss\n";
    f.precision(17);
    for (const TrainLogEntry& e : log) f << e.step << ',' << e.lr << ',' << e.loss << '\n';
}

std::pair<double, double> mean_and_sample_std(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean_and_sample_std: empty");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

CrossValidationResult cross_validate(const std::vector<Scene>& scenes,
                                     const SimilarityLabels& labels, int n_splits,
                                     double test_fraction, const TrainConfig& config,
                                     const ArchitectureConfig& arch) {
    std::vector<DatasetSplit> splits =
        make_splits(labels.scene_ids, n_splits, test_fraction, config.seed);
    CrossValidationResult res;
    for (int k = 0; k < n_splits; ++k) {
        const DatasetSplit& split = splits[static_cast<std::size_t>(k)];
        std::vector<Scene> train_scenes;
        SimilarityLabels train_labels;
        for (const std::string& id : split.train_ids) {
            std::size_t i = labels.index_of(id);
            train_scenes.push_back(scenes[i]);
            train_labels.scene_ids.push_back(labels.scene_ids[i]);
            train_labels.class_of.push_back(labels.class_of[i]);
        }
        MetricNet net(arch);
        Rng init_rng(config.seed + static_cast<std::uint64_t>(k));
        net.init_params(init_rng);
        TrainConfig split_cfg = config;
        split_cfg.seed = config.seed + 1000 + static_cast<std::uint64_t>(k);
        try {
            train(train_scenes, train_labels, split_cfg, net);
        } catch (const std::exception& e) {
            throw std::runtime_error("cross_validate split " + std::to_string(k) + ": " +
                                     e.what());
        }
        std::vector<std::vector<double>> embeddings(labels.size());
        for (std::size_t i = 0; i < scenes.size(); ++i)
            embeddings[i] = embed_scene_eval(scenes[i], net).embedding.data;
        res.per_split.push_back(knn_retrieval(embeddings, labels, split));
    }
    std::vector<double> a3, a5;
    for (const RetrievalResult& r : res.per_split) {
        a3.push_back(r.acc_3of5);
        a5.push_back(r.acc_5of5);
    }
    std::tie(res.mean_3of5, res.std_3of5) = mean_and_sample_std(a3);
    std::tie(res.mean_5of5, res.std_5of5) = mean_and_sample_std(a5);
    return res;
}

}  // namespace spatial
