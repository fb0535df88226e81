#include <algorithm>
#include <array>
#include <string>
#include <vector>


#include "rramft/error.hpp"
#include "rramft/kernels.hpp"

namespace rramft::kernels {
namespace {

constexpr std::size_t kColumnBlock = 256;
constexpr std::size_t kRowBlock = 4;

void check_size(std::span<const double> s, std::size_t expected, const char* what) {
    if (s.size() != expected) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) +
                         " values, got " + std::to_string(s.size()));
    }
}

// Column-major patch matrix for one group: col[r, b*P + p] where
// r = (c * k + ky) * k + kx indexes the unfolded receptive field.
void im2col(const ConvGeometry& g, std::span<const double> input, std::size_t group,
            std::vector<double>& col) {
    const std::size_t cin_g = g.in_channels / g.groups;
    const std::size_t ho = g.out_height(), wo = g.out_width();
    const std::size_t plane = ho * wo;
    const std::size_t cols = g.batch * plane;
    const std::size_t rows = cin_g * g.kernel * g.kernel;
    col.assign(rows * cols, 0.0);
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t c = r / (g.kernel * g.kernel);
        const std::size_t ky = (r / g.kernel) % g.kernel;
        const std::size_t kx = r % g.kernel;
        double* dst = col.data() + r * cols;
        for (std::size_t b = 0; b < g.batch; ++b) {
            const double* src =
                input.data() + ((b * g.in_channels) + group * cin_g + c) * g.height * g.width;
            for (std::size_t oy = 0; oy < ho; ++oy) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                double* row = dst + b * plane + oy * wo;
                if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const long ix =
                        static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                    if (ix >= 0 && ix < static_cast<long>(g.width)) {
                        row[ox] = src[static_cast<std::size_t>(iy) * g.width +
                                      static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch matrix back into the input gradient for one group.
void col2im(const ConvGeometry& g, const std::vector<double>& col, std::size_t group,
            std::span<double> grad_input) {
    const std::size_t cin_g = g.in_channels / g.groups;
    const std::size_t ho = g.out_height(), wo = g.out_width();
    const std::size_t plane = ho * wo;
    const std::size_t cols = g.batch * plane;
    const std::size_t kk = g.kernel * g.kernel;
    // Each (batch, channel) plane is owned by one thread.
#pragma omp parallel for schedule(static)
    for (std::size_t bc = 0; bc < g.batch * cin_g; ++bc) {
        const std::size_t b = bc / cin_g;
        const std::size_t c = bc % cin_g;
        double* dst =
            grad_input.data() + ((b * g.in_channels) + group * cin_g + c) * g.height * g.width;
        for (std::size_t t = 0; t < kk; ++t) {
            const std::size_t ky = t / g.kernel, kx = t % g.kernel;
            const double* src = col.data() + (c * kk + t) * cols + b * plane;
            for (std::size_t oy = 0; oy < ho; ++oy) {
                const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
                if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const long ix =
                        static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
                    if (ix >= 0 && ix < static_cast<long>(g.width)) {
                        dst[static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)] +=
                            src[oy * wo + ox];
                    }
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
    const std::size_t blocks = (n + kColumnBlock - 1) / kColumnBlock;
#pragma omp parallel for schedule(static)
    for (std::size_t jb = 0; jb < blocks; ++jb) {
        const std::size_t j0 = jb * kColumnBlock;
        const std::size_t width = std::min(kColumnBlock, n - j0);
        std::array<std::array<double, kColumnBlock>, kRowBlock> acc;
        for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
            const std::size_t rows = std::min(kRowBlock, m - i0);
            for (std::size_t r = 0; r < rows; ++r) {
                double* out = c.data() + (i0 + r) * n + j0;
                for (std::size_t j = 0; j < width; ++j) acc[r][j] = accumulate ? out[j] : 0.0;
            }
            if (rows == kRowBlock) {
                for (std::size_t l = 0; l < k; ++l) {
                    const double* brow = b.data() + l * n + j0;
                    const double a0 = a[(i0 + 0) * k + l];
                    const double a1 = a[(i0 + 1) * k + l];
                    const double a2 = a[(i0 + 2) * k + l];
                    const double a3 = a[(i0 + 3) * k + l];
                    for (std::size_t j = 0; j < width; ++j) {
                        const double bv = brow[j];
                        acc[0][j] += a0 * bv;
                        acc[1][j] += a1 * bv;
                        acc[2][j] += a2 * bv;
                        acc[3][j] += a3 * bv;
                    }
                }
            } else {
                for (std::size_t l = 0; l < k; ++l) {
                    const double* brow = b.data() + l * n + j0;
                    for (std::size_t r = 0; r < rows; ++r) {
                        const double av = a[(i0 + r) * k + l];
                        for (std::size_t j = 0; j < width; ++j) acc[r][j] += av * brow[j];
                    }
                }
            }
            for (std::size_t r = 0; r < rows; ++r) {
                double* out = c.data() + (i0 + r) * n + j0;
                std::copy_n(acc[r].data(), width, out);
            }
        }
    }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<double> output) {
    g.validate();
    check_size(input, g.input_numel(), "conv2d input");
    check_size(weight, g.weight_numel(), "conv2d weight");
    check_size(output, g.output_numel(), "conv2d output");
    const std::size_t cin_g = g.in_channels / g.groups;
    const std::size_t cout_g = g.out_channels / g.groups;
    const std::size_t rows = cin_g * g.kernel * g.kernel;
    const std::size_t plane = g.out_height() * g.out_width();
    const std::size_t cols = g.batch * plane;
    std::vector<double> col;
    std::vector<double> result(cout_g * cols);
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
        im2col(g, input, grp, col);
        gemm(cout_g, cols, rows, weight.subspan(grp * cout_g * rows, cout_g * rows), col, result);
#pragma omp parallel for schedule(static)
        for (std::size_t bm = 0; bm < g.batch * cout_g; ++bm) {
            const std::size_t b = bm / cout_g, mo = bm % cout_g;
            std::copy_n(result.data() + mo * cols + b * plane, plane,
                        output.data() + (b * g.out_channels + grp * cout_g + mo) * plane);
        }
    }
}

void conv2d_backward_data(const ConvGeometry& g, std::span<const double> weight,
                          std::span<const double> grad_output, std::span<double> grad_input) {
    g.validate();
    check_size(weight, g.weight_numel(), "conv2d weight");
    check_size(grad_output, g.output_numel(), "conv2d grad_output");
    check_size(grad_input, g.input_numel(), "conv2d grad_input");
    const std::size_t cin_g = g.in_channels / g.groups;
    const std::size_t cout_g = g.out_channels / g.groups;
    const std::size_t rows = cin_g * g.kernel * g.kernel;
    const std::size_t plane = g.out_height() * g.out_width();
    const std::size_t cols = g.batch * plane;
    std::fill(grad_input.begin(), grad_input.end(), 0.0);
    std::vector<double> wt(rows * cout_g);
    std::vector<double> dout(cout_g * cols);
    std::vector<double> dcol(rows * cols);
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
        for (std::size_t mo = 0; mo < cout_g; ++mo) {
            for (std::size_t r = 0; r < rows; ++r) {
                wt[r * cout_g + mo] = weight[(grp * cout_g + mo) * rows + r];
            }
        }
#pragma omp parallel for schedule(static)
        for (std::size_t bm = 0; bm < g.batch * cout_g; ++bm) {
            const std::size_t b = bm / cout_g, mo = bm % cout_g;
            std::copy_n(grad_output.data() + (b * g.out_channels + grp * cout_g + mo) * plane,
                        plane, dout.data() + mo * cols + b * plane);
        }
        gemm(rows, cols, cout_g, wt, dout, dcol);
        col2im(g, dcol, grp, grad_input);
    }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight) {
    g.validate();
    check_size(input, g.input_numel(), "conv2d input");
    check_size(grad_output, g.output_numel(), "conv2d grad_output");
    check_size(grad_weight, g.weight_numel(), "conv2d grad_weight");
    const std::size_t cin_g = g.in_channels / g.groups;
    const std::size_t cout_g = g.out_channels / g.groups;
    const std::size_t rows = cin_g * g.kernel * g.kernel;
    const std::size_t plane = g.out_height() * g.out_width();
    const std::size_t cols = g.batch * plane;
    std::vector<double> col;
    std::vector<double> colt(cols * rows);
    std::vector<double> dout(cout_g * cols);
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
        im2col(g, input, grp, col);
#pragma omp parallel for schedule(static)
        for (std::size_t p = 0; p < cols; ++p) {
            for (std::size_t r = 0; r < rows; ++r) colt[p * rows + r] = col[r * cols + p];
        }
#pragma omp parallel for schedule(static)
        for (std::size_t bm = 0; bm < g.batch * cout_g; ++bm) {
            const std::size_t b = bm / cout_g, mo = bm % cout_g;
            std::copy_n(grad_output.data() + (b * g.out_channels + grp * cout_g + mo) * plane,
                        plane, dout.data() + mo * cols + b * plane);
        }
        gemm(cout_g, rows, cols, dout, colt, grad_weight.subspan(grp * cout_g * rows, cout_g * rows));
    }
}

void fc_forward(std::size_t batch, std::size_t in_features, std::size_t out_features,
                std::span<const double> input, std::span<const double> weight,
                std::span<const double> bias, std::span<double> output) {
    check_size(input, batch * in_features, "fc input");
    check_size(weight, out_features * in_features, "fc weight");
    check_size(bias, out_features, "fc bias");
    check_size(output, batch * out_features, "fc output");
    std::vector<double> wt(in_features * out_features);
    for (std::size_t o = 0; o < out_features; ++o) {
        for (std::size_t i = 0; i < in_features; ++i) wt[i * out_features + o] = weight[o * in_features + i];
    }
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy(bias.begin(), bias.end(), output.begin() + static_cast<long>(b * out_features));
    }
    gemm(batch, out_features, in_features, input, wt, output, true);
}

void fc_backward(std::size_t batch, std::size_t in_features, std::size_t out_features,
                 std::span<const double> input, std::span<const double> weight,
                 std::span<const double> grad_output, std::span<double> grad_input,
                 std::span<double> grad_weight, std::span<double> grad_bias) {
    check_size(grad_output, batch * out_features, "fc grad_output");
    check_size(grad_input, batch * in_features, "fc grad_input");
    check_size(grad_weight, out_features * in_features, "fc grad_weight");
    check_size(grad_bias, out_features, "fc grad_bias");
    gemm(batch, in_features, out_features, grad_output, weight, grad_input);
    std::vector<double> dyt(out_features * batch);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < out_features; ++o) dyt[o * batch + b] = grad_output[b * out_features + o];
    }
    gemm(out_features, in_features, batch, dyt, input, grad_weight);
    for (std::size_t o = 0; o < out_features; ++o) {
        double s = 0.0;
        for (std::size_t b = 0; b < batch; ++b) s += dyt[o * batch + b];
        grad_bias[o] = s;
    }
}

} // namespace rramft::kernels
