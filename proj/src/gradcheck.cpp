#include "spatial/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "spatial/network.hpp"
#include "spatial/tensor.hpp"

namespace spatial {
namespace {

constexpr double kH = 1e-5;

double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

std::vector<double> random_weights(std::size_t n, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> w(n);
    for (double& v : w) v = dist(rng);
    return w;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, scale);
    for (double& v : t.data) v = dist(rng);
    return t;
}

double weighted_sum(const Tensor& t, const std::vector<double>& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) s += w[i] * t.data[i];
    return s;
}

// Checks analytic gradients of `tensors` against central differences of the
// scalar function `loss` (which must recompute from tensor data each call).
double check_tensors(const std::vector<Tensor*>& tensors,
                     const std::function<double()>& loss) {
    double worst = 0.0;
    for (Tensor* t : tensors) {
        for (std::size_t i = 0; i < t->numel(); ++i) {
            const double saved = t->data[i];
            t->data[i] = saved + kH;
            const double lp = loss();
            t->data[i] = saved - kH;
            const double lm = loss();
            t->data[i] = saved;
            worst = std::max(worst, rel_err(t->grad[i], (lp - lm) / (2.0 * kH)));
        }
    }
    return worst;
}

double check_conv2d(Rng& rng, int pad) {
    Tensor input = random_tensor({2, 6, 6}, rng);
    Tensor kernels = random_tensor({3, 2, 3, 3}, rng, 0.5);
    Tensor bias = random_tensor({3}, rng, 0.2);
    const Conv2dSpec spec{pad};
    Tensor out = conv2d_forward(input, kernels, bias, spec);
    const std::vector<double> w = random_weights(out.numel(), rng);

    input.ensure_grad();
    kernels.ensure_grad();
    bias.ensure_grad();
    input.zero_grad();
    kernels.zero_grad();
    bias.zero_grad();
    conv2d_backward(input, kernels, bias, w, spec);

    auto loss = [&] { return weighted_sum(conv2d_forward(input, kernels, bias, spec), w); };
    return check_tensors({&input, &kernels, &bias}, loss);
}

double check_maxpool(Rng& rng) {
    // Distinct, well-separated values so h = 1e-5 never flips an argmax.
    Tensor input({1, 6, 6});
    std::vector<int> order(input.numel());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<double> jitter(-1e-4, 1e-4);
    for (std::size_t i = 0; i < input.numel(); ++i)
        input.data[i] = 0.01 * order[i] + jitter(rng);

    MaxPoolCache cache;
    Tensor out = maxpool2d_forward(input, cache);
    const std::vector<double> w = random_weights(out.numel(), rng);

    input.ensure_grad();
    input.zero_grad();
    maxpool2d_backward(input, cache, w);

    auto loss = [&] {
        MaxPoolCache c;
        return weighted_sum(maxpool2d_forward(input, c), w);
    };
    return check_tensors({&input}, loss);
}

double check_elu(Rng& rng) {
    Tensor input = random_tensor({16}, rng);
    // Keep inputs away from the kink at 0 where central differences are
    // one-sided.
    for (double& v : input.data)
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.05 : v + 0.05;

    Tensor out = elu_forward(input);
    const std::vector<double> w = random_weights(out.numel(), rng);

    input.ensure_grad();
    input.zero_grad();
    elu_backward(input, out, w);

    auto loss = [&] { return weighted_sum(elu_forward(input), w); };
    return check_tensors({&input}, loss);
}

double check_fc(Rng& rng) {
    Tensor input = random_tensor({8}, rng);
    Tensor weights = random_tensor({5, 8}, rng, 0.5);
    Tensor bias = random_tensor({5}, rng, 0.2);
    Tensor out = fc_forward(input, weights, bias);
    const std::vector<double> w = random_weights(out.numel(), rng);

    input.ensure_grad();
    weights.ensure_grad();
    bias.ensure_grad();
    input.zero_grad();
    weights.zero_grad();
    bias.zero_grad();
    fc_backward(input, weights, bias, w);

    auto loss = [&] { return weighted_sum(fc_forward(input, weights, bias), w); };
    return check_tensors({&input, &weights, &bias}, loss);
}

double check_euclidean(Rng& rng) {
    Tensor a = random_tensor({12}, rng);
    Tensor b = random_tensor({12}, rng);
    std::normal_distribution<double> dist(0.0, 1.0);
    const double gd = dist(rng);

    const double d = euclidean_distance(a, b);
    a.ensure_grad();
    b.ensure_grad();
    a.zero_grad();
    b.zero_grad();
    euclidean_distance_backward(a, b, d, gd);

    auto loss = [&] { return gd * euclidean_distance(a, b); };
    return check_tensors({&a, &b}, loss);
}

// Composed check: conv -> elu -> pool -> conv -> elu -> fc, gradients taken
// w.r.t. every parameter and the input.
double check_composed(Rng& rng) {
    Tensor input = random_tensor({1, 8, 8}, rng);
    Tensor k1 = random_tensor({4, 1, 3, 3}, rng, 0.5);
    Tensor b1 = random_tensor({4}, rng, 0.1);
    Tensor k2 = random_tensor({6, 4, 3, 3}, rng, 0.3);
    Tensor b2 = random_tensor({6}, rng, 0.1);
    const int flat = 6;  // 6 channels x 1x1 spatial after pool + conv
    Tensor fw = random_tensor({4, flat}, rng, 0.5);
    Tensor fb = random_tensor({4}, rng, 0.1);

    std::vector<double> w = random_weights(4, rng);  // fc output width

    struct Caches {
        Tensor c1, e1, p1, c2, e2, f, out;
        MaxPoolCache pool;
    };
    auto forward = [&](Caches& c) {
        c.c1 = conv2d_forward(input, k1, b1);
        c.e1 = elu_forward(c.c1);
        c.p1 = maxpool2d_forward(c.e1, c.pool);
        c.c2 = conv2d_forward(c.p1, k2, b2);
        c.e2 = elu_forward(c.c2);
        c.f = c.e2;
        c.f.shape = {static_cast<int>(c.e2.numel())};
        c.out = fc_forward(c.f, fw, fb);
        return weighted_sum(c.out, w);
    };

    Caches c;
    for (Tensor* t : {&input, &k1, &b1, &k2, &b2, &fw, &fb}) {
        t->ensure_grad();
        t->zero_grad();
    }
    forward(c);

    c.f.ensure_grad();
    c.f.zero_grad();
    fc_backward(c.f, fw, fb, w);
    c.c2.ensure_grad();
    c.c2.zero_grad();
    elu_backward(c.c2, c.e2, c.f.grad);
    c.p1.ensure_grad();
    c.p1.zero_grad();
    conv2d_backward(c.p1, k2, b2, c.c2.grad);
    c.e1.ensure_grad();
    c.e1.zero_grad();
    maxpool2d_backward(c.e1, c.pool, c.p1.grad);
    c.c1.ensure_grad();
    c.c1.zero_grad();
    elu_backward(c.c1, c.e1, c.e1.grad);
    conv2d_backward(input, k1, b1, c.c1.grad);

    auto loss = [&] {
        Caches tmp;
        return forward(tmp);
    };
    return check_tensors({&input, &k1, &b1, &k2, &b2, &fw, &fb}, loss);
}

}  // namespace

std::vector<GradCheckReport> run_gradient_checks(std::uint64_t seed, int instances) {
    struct Check {
        const char* op;
        double tol;
        std::function<double(Rng&)> fn;
    };
    const std::vector<Check> checks = {
        {"conv2d", 1e-5, [](Rng& r) { return check_conv2d(r, 0); }},
        {"conv2d_padded", 1e-5, [](Rng& r) { return check_conv2d(r, 1); }},
        {"maxpool2d", 1e-5, check_maxpool},
        {"elu", 1e-5, check_elu},
        {"fc", 1e-5, check_fc},
        {"euclidean_distance", 1e-5, check_euclidean},
        {"composed_network", 1e-4, check_composed},
    };

    std::vector<GradCheckReport> reports;
    for (const Check& c : checks) {
        Rng rng(seed);
        double worst = 0.0;
        for (int i = 0; i < instances; ++i) worst = std::max(worst, c.fn(rng));
        reports.push_back({c.op, worst, c.tol, worst < c.tol});
    }
    return reports;
}

}  // namespace spatial
