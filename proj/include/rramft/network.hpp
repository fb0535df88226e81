#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace rramft {

enum class LayerKind { conv2d, batchnorm, relu, avgpool, fc, softmax_xent, residual_add };

std::string_view to_string(LayerKind kind) noexcept;
LayerKind parse_layer_kind(std::string_view name);

// Id used in `inputs` to refer to the network input tensor.
inline constexpr std::string_view kNetworkInput = "input";

/// One node of the layer graph.
///
/// Channel fields carry the declared widths: conv2d uses in/out channels,
/// batchnorm uses in_channels, fc uses flattened in/out features. Layers that
/// only forward their input shape (relu, avgpool, softmax_xent,
/// residual_add) leave them at 0.
struct LayerSpec {
    std::string id;
    LayerKind kind = LayerKind::relu;
    // Predecessor ids. Empty means "the previous layer" (or the network input
    // for the first layer).
    std::vector<std::string> inputs;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
    bool global_pool = false;
    // Marks the projection convolution on a residual shortcut.
    bool shortcut = false;

    bool is_conv() const noexcept { return kind == LayerKind::conv2d; }
    bool is_pointwise_conv() const noexcept { return is_conv() && kernel == 1; }
    bool operator==(const LayerSpec&) const = default;
};

struct FeatureShape {
    std::size_t channels = 0;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t numel() const noexcept { return channels * height * width; }
    bool operator==(const FeatureShape&) const = default;
};

struct NetworkSpec {
    std::string name;
    FeatureShape input;
    std::vector<LayerSpec> layers;

    bool operator==(const NetworkSpec&) const = default;
    std::optional<std::size_t> find(std::string_view id) const;
    std::size_t index_of(std::string_view id) const;  // throws ShapeError if absent
};

/// Result of validating a NetworkSpec.
struct InferredNetwork {
    // Output shape of each layer (batch dimension excluded).
    std::vector<FeatureShape> output_shapes;
    // Resolved predecessor indices per layer; -1 denotes the network input.
    std::vector<std::vector<long>> predecessors;
    // Number of consumers of each layer's output.
    std::vector<std::size_t> fanout;

    FeatureShape input_shape_of(std::size_t layer, std::size_t which, const FeatureShape& net_input) const;
};

/// Checks ids, topology and declared channel counts, and infers every layer's
/// output shape. Throws ShapeError naming the offending layer.
InferredNetwork infer_shapes(const NetworkSpec& spec);

void to_json(nlohmann::json& j, const LayerSpec& layer);
void from_json(const nlohmann::json& j, LayerSpec& layer);
void to_json(nlohmann::json& j, const NetworkSpec& spec);
void from_json(const nlohmann::json& j, NetworkSpec& spec);

NetworkSpec load_network(const std::string& path);
void save_network(const NetworkSpec& spec, const std::string& path);

} // namespace rramft
