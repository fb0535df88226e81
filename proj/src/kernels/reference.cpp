#include <string>

#include "rramft/error.hpp"
#include "rramft/kernels.hpp"

namespace rramft::reference {
namespace {

void check_size(std::span<const double> s, std::size_t expected, const char* what) {
    if (s.size() != expected) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) +
                         " values, got " + std::to_string(s.size()));
    }
}

// Visits every (output, weight, input) index triple of the convolution.
template <typename Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn) {
    const std::size_t cin_g = g.in_channels / g.groups;
    const std::size_t cout_g = g.out_channels / g.groups;
    const std::size_t ho = g.out_height(), wo = g.out_width();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t m = 0; m < g.out_channels; ++m) {
            const std::size_t grp = m / cout_g;
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const std::size_t out_idx = ((b * g.out_channels + m) * ho + oy) * wo + ox;
                    for (std::size_t c = 0; c < cin_g; ++c)
                        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                            const long iy = static_cast<long>(oy * g.stride + ky) -
                                            static_cast<long>(g.padding);
                            if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                                const long ix = static_cast<long>(ox * g.stride + kx) -
                                                static_cast<long>(g.padding);
                                if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
                                const std::size_t n = grp * cin_g + c;
                                const std::size_t in_idx =
                                    ((b * g.in_channels + n) * g.height + static_cast<std::size_t>(iy)) *
                                        g.width +
                                    static_cast<std::size_t>(ix);
                                const std::size_t w_idx = ((m * cin_g + c) * g.kernel + ky) * g.kernel + kx;
                                fn(out_idx, w_idx, in_idx);
                            }
                        }
                }
        }
}

} // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate) {
    check_size(a, m * k, "gemm A");
    check_size(b, k * n, "gemm B");
    check_size(c, m * n, "gemm C");
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t l = 0; l < k; ++l) s += a[i * k + l] * b[l * n + j];
            c[i * n + j] = s;
        }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<double> output) {
    g.validate();
    check_size(input, g.input_numel(), "conv2d input");
    check_size(weight, g.weight_numel(), "conv2d weight");
    check_size(output, g.output_numel(), "conv2d output");
    std::fill(output.begin(), output.end(), 0.0);
    for_each_tap(g, [&](std::size_t o, std::size_t w, std::size_t i) { output[o] += input[i] * weight[w]; });
}

void conv2d_backward_data(const ConvGeometry& g, std::span<const double> weight,
                          std::span<const double> grad_output, std::span<double> grad_input) {
    g.validate();
    check_size(weight, g.weight_numel(), "conv2d weight");
    check_size(grad_output, g.output_numel(), "conv2d grad_output");
    check_size(grad_input, g.input_numel(), "conv2d grad_input");
    std::fill(grad_input.begin(), grad_input.end(), 0.0);
    for_each_tap(g, [&](std::size_t o, std::size_t w, std::size_t i) {
        grad_input[i] += grad_output[o] * weight[w];
    });
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight) {
    g.validate();
    check_size(input, g.input_numel(), "conv2d input");
    check_size(grad_output, g.output_numel(), "conv2d grad_output");
    check_size(grad_weight, g.weight_numel(), "conv2d grad_weight");
    std::fill(grad_weight.begin(), grad_weight.end(), 0.0);
    for_each_tap(g, [&](std::size_t o, std::size_t w, std::size_t i) {
        grad_weight[w] += grad_output[o] * input[i];
    });
}

void fc_forward(std::size_t batch, std::size_t in_features, std::size_t out_features,
                std::span<const double> input, std::span<const double> weight,
                std::span<const double> bias, std::span<double> output) {
    check_size(input, batch * in_features, "fc input");
    check_size(weight, out_features * in_features, "fc weight");
    check_size(bias, out_features, "fc bias");
    check_size(output, batch * out_features, "fc output");
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_features; ++o) {
            double s = bias[o];
            for (std::size_t i = 0; i < in_features; ++i) s += input[b * in_features + i] * weight[o * in_features + i];
            output[b * out_features + o] = s;
        }
}

} // namespace rramft::reference
