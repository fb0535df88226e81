#pragma once

// Independent oracles shared by the unit tests and the acceptance run. They
// are deliberately naive and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rramft/kernels.hpp"
#include "rramft/model.hpp"
#include "rramft/network.hpp"

namespace oracle {

// Direct grouped convolution, NCHW input, [m, n/g, k, k] weights.
inline std::vector<double> conv2d(const rramft::ConvGeometry& g, const std::vector<double>& x,
                                  const std::vector<double>& w) {
    const std::size_t ho = (g.height + 2 * g.padding - g.kernel) / g.stride + 1;
    const std::size_t wo = (g.width + 2 * g.padding - g.kernel) / g.stride + 1;
    const std::size_t cin_g = g.in_channels / g.groups;
    const std::size_t cout_g = g.out_channels / g.groups;
    std::vector<double> y(g.batch * g.out_channels * ho * wo, 0.0);
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t m = 0; m < g.out_channels; ++m)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    double acc = 0.0;
                    const std::size_t group = m / cout_g;
                    for (std::size_t c = 0; c < cin_g; ++c)
                        for (std::size_t ky = 0; ky < g.kernel; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) ||
                                    ix >= static_cast<long>(g.width)) {
                                    continue;
                                }
                                const std::size_t ci = group * cin_g + c;
                                acc += x[((b * g.in_channels + ci) * g.height + iy) * g.width + ix] *
                                       w[((m * cin_g + c) * g.kernel + ky) * g.kernel + kx];
                            }
                    y[((b * g.out_channels + m) * ho + oy) * wo + ox] = acc;
                }
    return y;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

inline double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double scale = std::max({norm(a), norm(b), 1e-12});
    return norm(d) / scale;
}

// Sum of r * f(x) for a forward pass, the scalar the gradient check differentiates.
inline double projected_output(rramft::Model& model, const rramft::Tensor& x, rramft::Mode mode,
                               const std::vector<double>& r, const rramft::Overrides* ov) {
    rramft::Tape tape;
    const rramft::Tensor y = model.forward(x, mode, tape, ov);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
}

struct GradCheckResult {
    double input_error = 0.0;
    double param_error = 0.0;
    std::size_t coordinates = 0;
    double worst() const { return std::max(input_error, param_error); }
};

/// Central-difference check of Model::backward for a random instance of
/// `net`. Up to `max_coords` coordinates per tensor are probed.
inline GradCheckResult gradient_check(const rramft::NetworkSpec& net, rramft::Mode mode, std::uint64_t seed,
                                      std::size_t batch = 3, const rramft::Overrides* ov = nullptr,
                                      double eps = 1e-6, std::size_t max_coords = 40) {
    using namespace rramft;
    std::mt19937_64 rng(seed);
    Model model(net, seed);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (std::size_t li = 0; li < model.layer_count(); ++li) {
        LayerParams& p = model.params(li);
        for (double& v : p.gamma.data()) v = u(rng);
        for (double& v : p.beta.data()) v = u(rng) - 1.0;
        for (double& v : p.running_mean.data()) v = u(rng) - 1.0;
        for (double& v : p.running_var.data()) v = u(rng);
        for (double& v : p.bias.data()) v = u(rng) - 1.0;
    }
    Shape in_shape{batch, net.input.channels, net.input.height, net.input.width};
    Tensor x(in_shape, random_vector(shape_numel(in_shape), rng));

    Tape tape;
    const Tensor y = model.forward(x, mode, tape, ov);
    const std::vector<double> r = random_vector(y.size(), rng);
    model.zero_grad();
    const Tensor dx = model.backward(tape, Tensor(y.shape(), r));

    GradCheckResult res;
    std::uniform_int_distribution<std::size_t> pick;
    auto probe = [&](std::span<double> values, std::span<const double> analytic) {
        std::vector<double> a, n;
        const std::size_t count = std::min(values.size(), max_coords);
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t i = values.size() <= max_coords ? k : pick(rng) % values.size();
            const double old = values[i];
            values[i] = old + eps;
            const double up = projected_output(model, x, mode, r, ov);
            values[i] = old - eps;
            const double down = projected_output(model, x, mode, r, ov);
            values[i] = old;
            a.push_back(analytic[i]);
            n.push_back((up - down) / (2 * eps));
        }
        res.coordinates += count;
        return relative_error(a, n);
    };
    res.input_error = probe(x.data(), dx.data());
    for (Tensor* t : model.trainable_tensors()) {
        if (t->empty()) continue;
        const std::vector<double> g(t->grad().begin(), t->grad().end());
        res.param_error = std::max(res.param_error, probe(t->data(), g));
    }
    return res;
}

} // namespace oracle
