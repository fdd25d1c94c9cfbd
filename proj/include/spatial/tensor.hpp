#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace spatial {

using Rng = std::mt19937_64;

// Dense n-dimensional array of 64-bit floats with an optional gradient
// buffer of the same shape.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    std::size_t numel() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    void ensure_grad();
    void zero_grad();
    // Throws on NaN/Inf in data.
    void check_finite(const char* context) const;
};

// ---- ops (valid cross-correlation semantics; optional zero padding) ----

struct Conv2dSpec {
    int pad = 0;
};

// input [Ci,H,W], kernels [Co,Ci,k,k], bias [Co] -> [Co,H',W'],
// H' = H + 2*pad - k + 1.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      const Conv2dSpec& spec = {});
// Accumulates into the grad buffers of input/kernels/bias.
void conv2d_backward(Tensor& input, Tensor& kernels, Tensor& bias,
                     const std::vector<double>& grad_out, const Conv2dSpec& spec = {});

// 2x2 window, stride 2; a trailing odd row/col is dropped.
struct MaxPoolCache {
    std::vector<std::int32_t> argmax;  // input flat index per output element
    std::vector<int> in_shape;
};
Tensor maxpool2d_forward(const Tensor& input, MaxPoolCache& cache);
void maxpool2d_backward(Tensor& input, const MaxPoolCache& cache,
                        const std::vector<double>& grad_out);

// alpha = 1
Tensor elu_forward(const Tensor& input);
void elu_backward(Tensor& input, const Tensor& output, const std::vector<double>& grad_out);

// Test hook: when set, elu_backward produces a deliberately wrong
// derivative so gradient-check reporting can be exercised.
extern bool g_elu_backward_fault;

// input [N], weights [M,N], bias [M] -> [M]
Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
void fc_backward(Tensor& input, Tensor& weights, Tensor& bias,
                 const std::vector<double>& grad_out);

// Inverted dropout: training zeroes entries with probability p and scales
// survivors by 1/(1-p); inference is the identity.
Tensor dropout_forward(const Tensor& input, double p, bool training, Rng& rng,
                       std::vector<double>& mask);
void dropout_backward(Tensor& input, const std::vector<double>& mask,
                      const std::vector<double>& grad_out);

// ||a-b||_2 with gradient (a-b)/d into a and the negation into b;
// gradient defined as 0 at d = 0.
double euclidean_distance(const Tensor& a, const Tensor& b);
void euclidean_distance_backward(Tensor& a, Tensor& b, double distance, double grad_d);

// ---- optimizers ----

struct SgdMomentumState {
    double momentum = 0.9;
    std::vector<double> velocity;
};
// v <- mu*v - lr*g; p <- p + v
void sgd_momentum_step(std::vector<double>& params, const std::vector<double>& grads,
                       SgdMomentumState& state, double lr);

struct AdamState {
    double lr = 0.1;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t step = 0;
    std::vector<double> m, v;
};
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state);

// Cosine-annealed warm restarts: within a period of length T
// lr = 0.5*lr0*(1+cos(pi*t/T)); each restart multiplies T.
struct LrSchedule {
    double initial_lr = 0.001;
    std::int64_t period = 1500;
    double period_multiplier = 2.0;
};
double lr_at(const LrSchedule& schedule, std::int64_t step);

// ---- checkpoint format (see docs/checkpoint_format.md) ----

struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, std::vector<double>>> opt_state;
    std::vector<std::pair<std::string, double>> meta;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace spatial
