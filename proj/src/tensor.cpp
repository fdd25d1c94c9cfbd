#include "spatial/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace spatial {

bool g_elu_backward_fault = false;

namespace {

std::size_t product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

// Lowered convolution buffer: row (ic,ky,kx), column (oy,ox); zeros where
// the padded window leaves the input.
void im2col(const double* in, int ci, int h, int w, int k, int p, int oh, int ow,
            std::vector<double>& col) {
    const std::size_t n = static_cast<std::size_t>(oh) * ow;
    col.assign(static_cast<std::size_t>(ci) * k * k * n, 0.0);
    std::size_t row = 0;
    for (int ic = 0; ic < ci; ++ic) {
        const double* plane = in + static_cast<std::size_t>(ic) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            const int oy0 = std::max(0, p - ky), oy1 = std::min(oh, h - ky + p);
            for (int kx = 0; kx < k; ++kx, ++row) {
                const int ox0 = std::max(0, p - kx), ox1 = std::min(ow, w - kx + p);
                double* dst = col.data() + row * n;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const double* src = plane + (oy + ky - p) * w + (kx - p);
                    double* d = dst + static_cast<std::size_t>(oy) * ow;
                    for (int ox = ox0; ox < ox1; ++ox) d[ox] = src[ox];
                }
            }
        }
    }
}

// Scatter-add the lowered gradient back onto the input gradient.
void col2im_acc(const std::vector<double>& col, double* grad, int ci, int h, int w, int k,
                int p, int oh, int ow) {
    const std::size_t n = static_cast<std::size_t>(oh) * ow;
    std::size_t row = 0;
    for (int ic = 0; ic < ci; ++ic) {
        double* plane = grad + static_cast<std::size_t>(ic) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            const int oy0 = std::max(0, p - ky), oy1 = std::min(oh, h - ky + p);
            for (int kx = 0; kx < k; ++kx, ++row) {
                const int ox0 = std::max(0, p - kx), ox1 = std::min(ow, w - kx + p);
                const double* src = col.data() + row * n;
                for (int oy = oy0; oy < oy1; ++oy) {
                    double* d = plane + (oy + ky - p) * w + (kx - p);
                    const double* s = src + static_cast<std::size_t>(oy) * ow;
                    for (int ox = ox0; ox < ox1; ++ox) d[ox] += s[ox];
                }
            }
        }
    }
}

// C[M,N] += A[M,K] * B[K,N], all row-major. For narrow outputs the B rows
// are too short to vectorize, so B is transposed once and contiguous dot
// products are used instead.
void gemm_acc(const double* A, const double* B, double* C, int M, int K, int N) {
    if (N >= 16) {
        for (int i = 0; i < M; ++i) {
            const double* a = A + static_cast<std::size_t>(i) * K;
            double* c = C + static_cast<std::size_t>(i) * N;
            for (int kk = 0; kk < K; ++kk) {
                const double av = a[kk];
                const double* b = B + static_cast<std::size_t>(kk) * N;
                for (int j = 0; j < N; ++j) c[j] += av * b[j];
            }
        }
        return;
    }
    thread_local std::vector<double> bt;
    bt.assign(static_cast<std::size_t>(N) * K, 0.0);
    for (int kk = 0; kk < K; ++kk)
        for (int j = 0; j < N; ++j)
            bt[static_cast<std::size_t>(j) * K + kk] = B[static_cast<std::size_t>(kk) * N + j];
    for (int i = 0; i < M; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * K;
        double* c = C + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const double* b = bt.data() + static_cast<std::size_t>(j) * K;
            double s = 0.0;
#pragma omp simd reduction(+ : s)
            for (int kk = 0; kk < K; ++kk) s += a[kk] * b[kk];
            c[j] += s;
        }
    }
}

// C[M,K] += A[M,N] * B[K,N]^T (contiguous dot products).
void gemm_abt_acc(const double* A, const double* B, double* C, int M, int N, int K) {
    for (int i = 0; i < M; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * N;
        double* c = C + static_cast<std::size_t>(i) * K;
        for (int j = 0; j < K; ++j) {
            const double* b = B + static_cast<std::size_t>(j) * N;
            double s = 0.0;
#pragma omp simd reduction(+ : s)
            for (int kk = 0; kk < N; ++kk) s += a[kk] * b[kk];
            c[j] += s;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N].
void gemm_atb_acc(const double* A, const double* B, double* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * K;
        const double* b = B + static_cast<std::size_t>(i) * N;
        for (int kk = 0; kk < K; ++kk) {
            const double av = a[kk];
            double* c = C + static_cast<std::size_t>(kk) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)), data(product(shape), 0.0) {}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

void Tensor::check_finite(const char* context) const {
    for (double v : data)
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("non-finite value in ") + context);
}

// ---- conv2d ----

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      const Conv2dSpec& spec) {
    if (input.shape.size() != 3 || kernels.shape.size() != 4 || bias.shape.size() != 1)
        throw std::invalid_argument("conv2d: rank mismatch");
    const int ci = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int co = kernels.dim(0), k = kernels.dim(2);
    if (kernels.dim(1) != ci || kernels.dim(3) != k || bias.dim(0) != co)
        throw std::invalid_argument("conv2d: shape mismatch");
    const int p = spec.pad;
    const int oh = h + 2 * p - k + 1, ow = w + 2 * p - k + 1;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: kernel larger than input");

    Tensor out({co, oh, ow});
    const int n = oh * ow, kd = ci * k * k;
    thread_local std::vector<double> col;
    im2col(input.data.data(), ci, h, w, k, p, oh, ow, col);
    for (int c = 0; c < co; ++c)
        std::fill_n(out.data.begin() + static_cast<std::size_t>(c) * n, n, bias.data[c]);
    gemm_acc(kernels.data.data(), col.data(), out.data.data(), co, kd, n);
    out.check_finite("conv2d");
    return out;
}

void conv2d_backward(Tensor& input, Tensor& kernels, Tensor& bias,
                     const std::vector<double>& grad_out, const Conv2dSpec& spec) {
    const int ci = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int co = kernels.dim(0), k = kernels.dim(2);
    const int p = spec.pad;
    const int oh = h + 2 * p - k + 1, ow = w + 2 * p - k + 1;
    if (grad_out.size() != static_cast<std::size_t>(co) * oh * ow)
        throw std::invalid_argument("conv2d_backward: grad shape mismatch");
    input.ensure_grad();
    kernels.ensure_grad();
    bias.ensure_grad();

    const int n = oh * ow, kd = ci * k * k;
    for (int c = 0; c < co; ++c) {
        const double* go = grad_out.data() + static_cast<std::size_t>(c) * n;
        double bsum = 0.0;
        for (int i = 0; i < n; ++i) bsum += go[i];
        bias.grad[c] += bsum;
    }

    thread_local std::vector<double> col;
    im2col(input.data.data(), ci, h, w, k, p, oh, ow, col);
    thread_local std::vector<double> dcol;
    dcol.assign(static_cast<std::size_t>(kd) * n, 0.0);
    if (n >= 16) {
        // dK += dOut * col^T; d(col) = K^T * dOut
        gemm_abt_acc(grad_out.data(), col.data(), kernels.grad.data(), co, n, kd);
        gemm_atb_acc(kernels.data.data(), grad_out.data(), dcol.data(), co, kd, n);
    } else {
        // Narrow outputs: keep the long kd dimension innermost by working
        // on transposed copies of the lowered buffers.
        thread_local std::vector<double> xt, dct;
        xt.assign(static_cast<std::size_t>(n) * kd, 0.0);
        for (int r = 0; r < kd; ++r)
            for (int j = 0; j < n; ++j)
                xt[static_cast<std::size_t>(j) * kd + r] = col[static_cast<std::size_t>(r) * n + j];
        dct.assign(static_cast<std::size_t>(n) * kd, 0.0);
        for (int c = 0; c < co; ++c) {
            const double* go = grad_out.data() + static_cast<std::size_t>(c) * n;
            double* kg = kernels.grad.data() + static_cast<std::size_t>(c) * kd;
            const double* kw = kernels.data.data() + static_cast<std::size_t>(c) * kd;
            for (int j = 0; j < n; ++j) {
                const double g = go[j];
                const double* x = xt.data() + static_cast<std::size_t>(j) * kd;
                double* dc = dct.data() + static_cast<std::size_t>(j) * kd;
                for (int r = 0; r < kd; ++r) {
                    kg[r] += g * x[r];
                    dc[r] += g * kw[r];
                }
            }
        }
        for (int r = 0; r < kd; ++r)
            for (int j = 0; j < n; ++j)
                dcol[static_cast<std::size_t>(r) * n + j] = dct[static_cast<std::size_t>(j) * kd + r];
    }
    col2im_acc(dcol, input.grad.data(), ci, h, w, k, p, oh, ow);
}

// ---- maxpool ----

Tensor maxpool2d_forward(const Tensor& input, MaxPoolCache& cache) {
    if (input.shape.size() != 3) throw std::invalid_argument("maxpool2d: rank mismatch");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int oh = h / 2, ow = w / 2;
    if (oh == 0 || ow == 0) throw std::invalid_argument("maxpool2d: input too small");
    Tensor out({c, oh, ow});
    cache.in_shape = input.shape;
    cache.argmax.resize(out.numel());
    for (int ch = 0; ch < c; ++ch) {
        const double* in = input.data.data() + static_cast<std::size_t>(ch) * h * w;
        double* o = out.data.data() + static_cast<std::size_t>(ch) * oh * ow;
        std::int32_t* am = cache.argmax.data() + static_cast<std::size_t>(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                int base = (2 * oy) * w + 2 * ox;
                // first-encountered argmax wins (row-major window order)
                int idx[4] = {base, base + 1, base + w, base + w + 1};
                int best = idx[0];
                double bv = in[idx[0]];
                for (int i = 1; i < 4; ++i)
                    if (in[idx[i]] > bv) {
                        bv = in[idx[i]];
                        best = idx[i];
                    }
                o[oy * ow + ox] = bv;
                am[oy * ow + ox] = static_cast<std::int32_t>(ch * h * w + best);
            }
    }
    return out;
}

void maxpool2d_backward(Tensor& input, const MaxPoolCache& cache,
                        const std::vector<double>& grad_out) {
    if (grad_out.size() != cache.argmax.size())
        throw std::invalid_argument("maxpool2d_backward: grad shape mismatch");
    input.ensure_grad();
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        input.grad[static_cast<std::size_t>(cache.argmax[i])] += grad_out[i];
}

// ---- elu ----

Tensor elu_forward(const Tensor& input) {
    Tensor out(input.shape);
    for (std::size_t i = 0; i < input.numel(); ++i) {
        double x = input.data[i];
        out.data[i] = x > 0.0 ? x : std::expm1(x);
    }
    out.check_finite("elu");
    return out;
}

void elu_backward(Tensor& input, const Tensor& output, const std::vector<double>& grad_out) {
    input.ensure_grad();
    for (std::size_t i = 0; i < input.numel(); ++i) {
        double d = input.data[i] > 0.0 ? 1.0 : output.data[i] + 1.0;
        if (g_elu_backward_fault) d += 0.5;
        input.grad[i] += d * grad_out[i];
    }
}

// ---- fully connected ----

Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    const int n = static_cast<int>(input.numel());
    if (weights.shape.size() != 2 || weights.dim(1) != n || bias.dim(0) != weights.dim(0))
        throw std::invalid_argument("fc: shape mismatch");
    const int m = weights.dim(0);
    Tensor out({m});
    for (int r = 0; r < m; ++r) {
        const double* wr = weights.data.data() + static_cast<std::size_t>(r) * n;
        double acc = bias.data[r];
        for (int c = 0; c < n; ++c) acc += wr[c] * input.data[c];
        out.data[r] = acc;
    }
    out.check_finite("fc");
    return out;
}

void fc_backward(Tensor& input, Tensor& weights, Tensor& bias,
                 const std::vector<double>& grad_out) {
    const int m = weights.dim(0), n = weights.dim(1);
    if (grad_out.size() != static_cast<std::size_t>(m))
        throw std::invalid_argument("fc_backward: grad shape mismatch");
    input.ensure_grad();
    weights.ensure_grad();
    bias.ensure_grad();
    for (int r = 0; r < m; ++r) {
        double g = grad_out[r];
        bias.grad[r] += g;
        const double* wr = weights.data.data() + static_cast<std::size_t>(r) * n;
        double* wg = weights.grad.data() + static_cast<std::size_t>(r) * n;
        for (int c = 0; c < n; ++c) {
            wg[c] += g * input.data[c];
            input.grad[c] += g * wr[c];
        }
    }
}

// ---- dropout ----

Tensor dropout_forward(const Tensor& input, double p, bool training, Rng& rng,
                       std::vector<double>& mask) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    Tensor out(input.shape);
    mask.assign(input.numel(), 1.0);
    if (!training || p == 0.0) {
        out.data = input.data;
        return out;
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < input.numel(); ++i) {
        mask[i] = (u(rng) < p) ? 0.0 : keep_scale;
        out.data[i] = input.data[i] * mask[i];
    }
    return out;
}

void dropout_backward(Tensor& input, const std::vector<double>& mask,
                      const std::vector<double>& grad_out) {
    input.ensure_grad();
    for (std::size_t i = 0; i < input.numel(); ++i) input.grad[i] += mask[i] * grad_out[i];
}

// ---- euclidean distance ----

double euclidean_distance(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw std::invalid_argument("euclidean_distance: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

void euclidean_distance_backward(Tensor& a, Tensor& b, double distance, double grad_d) {
    a.ensure_grad();
    b.ensure_grad();
    if (distance == 0.0) return;
    const double f = grad_d / distance;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double g = f * (a.data[i] - b.data[i]);
        a.grad[i] += g;
        b.grad[i] -= g;
    }
}

// ---- optimizers ----

void sgd_momentum_step(std::vector<double>& params, const std::vector<double>& grads,
                       SgdMomentumState& state, double lr) {
    if (params.size() != grads.size())
        throw std::invalid_argument("sgd_momentum_step: size mismatch");
    if (state.velocity.size() != params.size()) state.velocity.assign(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.velocity[i] = state.momentum * state.velocity[i] - lr * grads[i];
        params[i] += state.velocity[i];
    }
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: size mismatch");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

double lr_at(const LrSchedule& schedule, std::int64_t step) {
    if (step < 0) throw std::invalid_argument("lr_at: negative step");
    double t = static_cast<double>(step);
    double period = static_cast<double>(schedule.period);
    while (t >= period) {
        t -= period;
        period *= schedule.period_multiplier;
    }
    return 0.5 * schedule.initial_lr * (1.0 + std::cos(M_PI * t / period));
}

// ---- checkpoint ----

namespace {

constexpr char kMagic[8] = {'S', 'P', 'R', 'E', 'L', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& o, std::uint32_t v) { o.write(reinterpret_cast<char*>(&v), 4); }
void write_u64(std::ostream& o, std::uint64_t v) { o.write(reinterpret_cast<char*>(&v), 8); }
void write_f64(std::ostream& o, double v) { o.write(reinterpret_cast<char*>(&v), 8); }
void write_str(std::ostream& o, const std::string& s) {
    write_u32(o, static_cast<std::uint32_t>(s.size()));
    o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& i) {
    std::uint32_t v;
    i.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::uint64_t read_u64(std::istream& i) {
    std::uint64_t v;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double read_f64(std::istream& i) {
    double v;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string read_str(std::istream& i) {
    std::uint32_t n = read_u32(i);
    std::string s(n, '\0');
    i.read(s.data(), n);
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 8);
    write_u32(f, kVersion);
    write_u32(f, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        write_str(f, name);
        write_u32(f, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) write_u64(f, static_cast<std::uint64_t>(d));
        for (double v : t.data) write_f64(f, v);
    }
    write_u32(f, static_cast<std::uint32_t>(ckpt.opt_state.size()));
    for (const auto& [name, vec] : ckpt.opt_state) {
        write_str(f, name);
        write_u64(f, vec.size());
        for (double v : vec) write_f64(f, v);
    }
    write_u32(f, static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [name, v] : ckpt.meta) {
        write_str(f, name);
        write_f64(f, v);
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    if (read_u32(f) != kVersion) throw std::runtime_error("unsupported checkpoint version");

    Checkpoint ckpt;
    std::uint32_t np = read_u32(f);
    for (std::uint32_t i = 0; i < np; ++i) {
        std::string name = read_str(f);
        std::uint32_t nd = read_u32(f);
        std::vector<int> shape(nd);
        for (auto& d : shape) d = static_cast<int>(read_u64(f));
        Tensor t(shape);
        for (double& v : t.data) v = read_f64(f);
        ckpt.params.emplace_back(std::move(name), std::move(t));
    }
    std::uint32_t ns = read_u32(f);
    for (std::uint32_t i = 0; i < ns; ++i) {
        std::string name = read_str(f);
        std::vector<double> vec(read_u64(f));
        for (double& v : vec) v = read_f64(f);
        ckpt.opt_state.emplace_back(std::move(name), std::move(vec));
    }
    std::uint32_t nm = read_u32(f);
    for (std::uint32_t i = 0; i < nm; ++i) {
        std::string name = read_str(f);
        ckpt.meta.emplace_back(std::move(name), read_f64(f));
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return ckpt;
}

}  // namespace spatial
