#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spatial/dataset.hpp"
#include "spatial/network.hpp"
#include "spatial/tensor.hpp"

namespace spatial {

struct TrainConfig {
    std::int64_t iterations = 14000;
    int batch_triplets = 100;
    double momentum = 0.9;
    LrSchedule schedule{0.001, 1500, 2.0};
    double noise_t = 0.005;   // meters
    double noise_deg = 2.0;   // degrees
    double max_grad_norm = 5.0;  // global L2 clip after batch averaging; <=0 disables
    bool augment = true;
    bool random_channel = true;
    bool overfit_one_batch = false;  // smoke mode: one fixed triplet, no noise
    std::uint64_t seed = 1;

    void validate() const;
};

struct TrainLogEntry {
    std::int64_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct Triplet {
    std::size_t anchor = 0, positive = 0, negative = 0;
};

// Y(anchor,positive)=0, Y(anchor,negative)=1; the anchor's class is drawn
// uniformly over classes with at least two members.
Triplet sample_triplet(const SimilarityLabels& labels, Rng& rng);

// Per-object pose noise plus a shared random rotation of the whole scene
// about the world z axis (through the scene centroid).
Scene augment_scene(const Scene& scene, Rng& rng, double noise_t, double noise_deg);

// Deterministic whole-scene z rotation about the union centroid.
Scene rotate_scene_z(const Scene& scene, double angle_rad);

struct TrainResult {
    std::vector<TrainLogEntry> log;
};

// Triplet loop of the metric: sample, augment, embed three branches,
// hinge loss, SGD-momentum step at the warm-restart rate. Mutates net
// parameters in place. Throws on NaN loss with step diagnostics.
TrainResult train(const std::vector<Scene>& scenes, const SimilarityLabels& labels,
                  const TrainConfig& config, MetricNet& net);

void save_train_log(const std::string& path, const std::vector<TrainLogEntry>& log);

struct CrossValidationResult {
    std::vector<RetrievalResult> per_split;
    double mean_3of5 = 0.0, std_3of5 = 0.0;
    double mean_5of5 = 0.0, std_5of5 = 0.0;
};

CrossValidationResult cross_validate(const std::vector<Scene>& scenes,
                                     const SimilarityLabels& labels, int n_splits,
                                     double test_fraction, const TrainConfig& config,
                                     const ArchitectureConfig& arch);

// Aggregation helper (exposed for tests): mean and sample standard deviation.
std::pair<double, double> mean_and_sample_std(const std::vector<double>& values);

}  // namespace spatial
