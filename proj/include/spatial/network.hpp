#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "spatial/geometry.hpp"
#include "spatial/projection.hpp"
#include "spatial/tensor.hpp"

namespace spatial {

struct ConvLayerSpec {
    int kernel = 3;
    int channels = 32;
    bool pool = false;
    int pad = 0;
};

struct ArchitectureConfig {
    std::string name;
    int resolution = 32;
    std::vector<ConvLayerSpec> layers;
    int embedding_width = 64;
    double dropout_p = 0.5;

    // 32x32 stack sized so acceptance runs take minutes, not hours.
    static ArchitectureConfig desk();
    // The full 100x100 stack (padded convolutions).
    static ArchitectureConfig paper();
    static ArchitectureConfig by_name(const std::string& name);

    // Spatial size after each layer; throws if any layer underflows.
    std::vector<int> spatial_sizes() const;
};

// One shared conv stack (used by all three plane subnets) plus the fusion
// fully-connected layer.
struct NetworkParams {
    struct ConvLayer {
        Tensor kernels;  // [Co,Ci,k,k]
        Tensor bias;     // [Co]
    };
    std::vector<ConvLayer> conv;
    Tensor fc_weights;  // [embedding, 3*flat]
    Tensor fc_bias;     // [embedding]

    void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
    std::size_t count() const;
    void zero_grads();
};

class MetricNet {
public:
    explicit MetricNet(ArchitectureConfig cfg);
    MetricNet(ArchitectureConfig cfg, NetworkParams params);

    const ArchitectureConfig& config() const { return cfg_; }
    NetworkParams& params() { return params_; }
    const NetworkParams& params() const { return params_; }

    void init_params(Rng& rng);

    struct PlaneCache {
        std::vector<Tensor> inputs;    // input to each conv layer
        std::vector<Tensor> conv_out;  // pre-activation
        std::vector<Tensor> elu_out;
        std::vector<MaxPoolCache> pools;
    };
    struct ForwardCache {
        std::array<PlaneCache, 3> plane;
        Tensor concat;
        Tensor dropped;
        std::vector<double> dropout_mask;
        Tensor embedding;
    };

    // plane_images: one [2,H,W] tensor per plane (top/front/side).
    Tensor forward(const std::array<Tensor, 3>& plane_images, bool training, Rng& rng,
                   ForwardCache& cache) const;

    // Accumulates parameter gradients into params_ grad buffers; when
    // input_grads is non-null also returns d(loss)/d(plane image) per plane.
    void backward(ForwardCache& cache, const std::vector<double>& grad_embedding,
                  std::array<std::vector<double>, 3>* input_grads);

    std::string summary() const;

private:
    ArchitectureConfig cfg_;
    NetworkParams params_;
};

// Fixed eval-time channel assignment: the lexicographically smaller object
// id occupies channel 0.
ChannelAssignment eval_assignment(const Scene& scene);

struct EmbedResult {
    Tensor embedding;
    UnitCubeFrame frame;
    ProjectionResult proj;
    MetricNet::ForwardCache cache;
    ChannelAssignment assignment;
};

std::array<Tensor, 3> images_to_tensors(const DepthImageTriple& images);

// The full composed mapping: transform, unit-cube fit, project, network.
// When frozen_frame is given it replaces the per-scene unit-cube fit.
EmbedResult embed_scene(const Scene& scene, const MetricNet& net, bool training, Rng& rng,
                        ChannelAssignment assignment,
                        const UnitCubeFrame* frozen_frame = nullptr);
EmbedResult embed_scene_eval(const Scene& scene, const MetricNet& net);

double metric_distance(const Scene& a, const Scene& b, const MetricNet& net);

struct TripletLossResult {
    double loss = 0.0;
    double d_plus = 0.0, d_minus = 0.0;
    std::vector<double> grad_anchor, grad_pos, grad_neg;
};

// C = 1/2 d+^2 + 1/2 max(0, 1 - d-)^2
TripletLossResult triplet_loss(const Tensor& anchor, const Tensor& positive,
                               const Tensor& negative);

// Checkpoint helpers (architecture recorded in the meta section).
void save_network(const std::string& path, const MetricNet& net,
                  const std::vector<std::pair<std::string, std::vector<double>>>& opt_state = {});
MetricNet load_network(const std::string& path);

}  // namespace spatial
