#pragma once

#include <cstddef>
#include <span>

namespace rramft {

/// Geometry of a batched 2-D convolution in NCHW layout. Weights are laid out
/// as [out_channels, in_channels / groups, kernel, kernel].
struct ConvGeometry {
    std::size_t batch = 1;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;

    std::size_t out_height() const noexcept { return (height + 2 * padding - kernel) / stride + 1; }
    std::size_t out_width() const noexcept { return (width + 2 * padding - kernel) / stride + 1; }
    std::size_t input_numel() const noexcept { return batch * in_channels * height * width; }
    std::size_t output_numel() const noexcept {
        return batch * out_channels * out_height() * out_width();
    }
    std::size_t weight_numel() const noexcept {
        return out_channels * (in_channels / groups) * kernel * kernel;
    }
    // Throws ShapeError when the geometry is degenerate.
    void validate() const;
};

// OpenMP kernels. Every output element is produced by exactly one thread with
// a fixed accumulation order, so results do not depend on the thread count.
namespace kernels {

// C[M,N] = A[M,K] * B[K,N] (+ C when accumulate). Row-major, dense.
void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate = false);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<double> output);
void conv2d_backward_data(const ConvGeometry& g, std::span<const double> weight,
                          std::span<const double> grad_output, std::span<double> grad_input);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight);

// y[B,out] = x[B,in] * W[out,in]^T + bias
void fc_forward(std::size_t batch, std::size_t in_features, std::size_t out_features,
                std::span<const double> input, std::span<const double> weight,
                std::span<const double> bias, std::span<double> output);
void fc_backward(std::size_t batch, std::size_t in_features, std::size_t out_features,
                 std::span<const double> input, std::span<const double> weight,
                 std::span<const double> grad_output, std::span<double> grad_input,
                 std::span<double> grad_weight, std::span<double> grad_bias);

} // namespace kernels

// Serial direct-loop implementations kept for cross-checking and benchmarks.
namespace reference {

void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate = false);
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<double> output);
void conv2d_backward_data(const ConvGeometry& g, std::span<const double> weight,
                          std::span<const double> grad_output, std::span<double> grad_input);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight);
void fc_forward(std::size_t batch, std::size_t in_features, std::size_t out_features,
                std::span<const double> input, std::span<const double> weight,
                std::span<const double> bias, std::span<double> output);

} // namespace reference

} // namespace rramft
