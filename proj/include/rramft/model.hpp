#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rramft/network.hpp"
#include "rramft/tensor.hpp"

namespace rramft {

enum class Mode { train, eval };

struct BatchNormOptions {
    double epsilon = 1e-5;
    // Weight of the newest batch in the running-statistics moving average.
    double momentum = 0.1;
};

/// Parameters of one layer. Only the tensors relevant to the layer kind are
/// non-empty.
struct LayerParams {
    Tensor weight;  // conv2d [m, n/groups, k, k]; fc [out, in]
    Tensor bias;    // fc [out]
    Tensor gamma;   // batchnorm [C]
    Tensor beta;    // batchnorm [C]
    Tensor running_mean;
    Tensor running_var;
};

/// Per-layer substitution applied during a forward pass. Drop-connect
/// training and crossbar inference are both expressed through it: the stored
/// weight is replaced by a masked or faulty copy and the output rescaled.
struct LayerOverride {
    std::optional<Tensor> weight;     // effective weight used instead of the stored one
    std::optional<Tensor> grad_mask;  // elementwise factor on the weight gradient
    double output_scale = 1.0;        // conv2d: multiplies the output
    double input_scale = 1.0;         // batchnorm: multiplies the input before normalising
};

// Either empty or one entry per layer.
using Overrides = std::vector<LayerOverride>;

/// Activations recorded by Model::forward for a later backward pass. The
/// overrides passed to forward must outlive the backward call.
class Tape {
public:
    bool recorded() const noexcept { return recorded_; }
    void clear();

private:
    friend class Model;
    bool recorded_ = false;
    Mode mode_ = Mode::eval;
    std::size_t batch_ = 0;
    Tensor input_;
    std::vector<Tensor> outputs_;
    std::vector<std::vector<double>> bn_xhat_;
    std::vector<std::vector<double>> bn_inv_std_;
    const Overrides* overrides_ = nullptr;
};

class Model {
public:
    // Fresh model: Kaiming-style fan-in initialisation seeded per layer id.
    Model(NetworkSpec spec, std::uint64_t init_seed, BatchNormOptions bn = {});
    // Model from existing parameters (checkpoint load, transplanting).
    Model(NetworkSpec spec, std::vector<LayerParams> params, BatchNormOptions bn = {});

    const NetworkSpec& spec() const noexcept { return spec_; }
    const InferredNetwork& shapes() const noexcept { return shapes_; }
    std::size_t layer_count() const noexcept { return spec_.layers.size(); }
    const LayerParams& params(std::size_t layer) const { return params_.at(layer); }
    LayerParams& params(std::size_t layer) { return params_.at(layer); }
    const BatchNormOptions& batchnorm_options() const noexcept { return bn_; }
    std::size_t parameter_count() const;

    // Eval-mode forward pass. Never mutates the model; safe to call from
    // several threads at once.
    Tensor infer(const Tensor& input, const Overrides* overrides = nullptr) const;

    // Forward pass recording activations on `tape`. In train mode batchnorm
    // normalises with batch statistics and updates its running statistics.
    Tensor forward(const Tensor& input, Mode mode, Tape& tape, const Overrides* overrides = nullptr);

    // Accumulates d(sum(grad_output * output))/d(param) into every trainable
    // tensor's gradient and returns the gradient with respect to the input.
    Tensor backward(Tape& tape, const Tensor& grad_output);

    // Backward of the mean softmax cross-entropy. The final layer must be
    // softmax-xent; the gradient is seeded at its logits directly.
    Tensor backward_cross_entropy(Tape& tape, std::span<const int> labels);

    void zero_grad();
    std::vector<Tensor*> trainable_tensors();
    std::vector<const Tensor*> trainable_tensors() const;

    // Hash of the trainable weights (weights, biases, gamma, beta).
    std::uint64_t weights_hash() const;
    // Hash of everything, running statistics included.
    std::uint64_t state_hash() const;

private:
    struct BatchStats {
        std::vector<double> mean;
        std::vector<double> var;
    };

    Tensor run(const Tensor& input, Mode mode, Tape* tape, const Overrides* overrides,
               std::vector<BatchStats>* batch_stats) const;
    Tensor backward_from(Tape& tape, std::size_t seed_layer, Tensor seed, bool skip_last);
    void check_overrides(const Overrides* overrides) const;

    NetworkSpec spec_;
    InferredNetwork shapes_;
    std::vector<LayerParams> params_;
    BatchNormOptions bn_;
};

// Mean negative log-likelihood of the labelled class.
double cross_entropy(const Tensor& probabilities, std::span<const int> labels);

// Index of the largest entry of each row of a [batch, ...] tensor.
std::vector<int> argmax_rows(const Tensor& scores);

// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& scores, std::span<const int> labels);

} // namespace rramft
