#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rramft/model.hpp"
#include "rramft/rng.hpp"

namespace rramft {

// Which layers drop-connect (and, at deployment, fault injection) touches.
enum class LayerSelection {
    kernel_above_1x1,  // every conv2d with kernel > 1
    all_conv,          // every conv2d, 1x1 included
    none,
    listed,            // the ids in DropConnectConfig::layers
};

// How the rate p reads. With drop_probability a weight is zeroed with
// probability p, which is what makes the 1/(1-p) rescale expectation
// preserving. keep_probability follows "M ~ Bernoulli(p)" literally: a weight
// survives with probability p and the output is still scaled by 1/(1-p).
enum class MaskConvention { drop_probability, keep_probability };

// Where the 1/(1-p) factor is applied. implicit scales the conv output, so a
// following batchnorm sees scaled activations. explicit_input leaves the conv
// output unscaled and scales the input of the batchnorm that consumes it.
enum class BnScaling { implicit, explicit_input };

struct DropConnectConfig {
    double p = 0.0;
    LayerSelection applies_to = LayerSelection::kernel_above_1x1;
    std::vector<std::string> layers;
    std::uint64_t mask_seed = 1;
    MaskConvention convention = MaskConvention::drop_probability;
    BnScaling bn_scaling = BnScaling::implicit;

    void validate() const;  // ConfigError unless 0 <= p < 1
    bool applies(const LayerSpec& layer) const;
    double drop_probability() const noexcept {
        return convention == MaskConvention::drop_probability ? p : 1.0 - p;
    }
    double output_scale() const noexcept { return 1.0 / (1.0 - p); }
};

bool selects(LayerSelection selection, const std::vector<std::string>& listed, const LayerSpec& layer);

/// Binary weight mask for one layer and one training iteration.
struct Mask {
    Tensor values;
    std::uint64_t draw_id = 0;
};

// Each entry is 0 with probability `drop_p` and 1 otherwise; drop_p == 0
// yields all ones without touching the generator.
Mask sample_mask(const Shape& shape, double drop_p, Rng& rng, std::uint64_t draw_id = 0);

// Mask for `layer_id` at iteration `draw_id`, regenerated from
// (mask_seed, draw_id, layer id) so nothing has to be stored.
Mask layer_mask(const Shape& shape, const DropConnectConfig& dc, std::uint64_t draw_id, std::string_view layer_id);

// (1/(1-p)) * conv2d(input, weights ⊙ mask) for one standalone layer.
Tensor apply_drop_connect(const Tensor& input, const Tensor& weights, const Mask& mask, double p,
                          const LayerSpec& layer);

// Plain convolution of a batched NCHW input with a layer's geometry.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const LayerSpec& layer);

// Overrides that realise one drop-connect draw over the whole model. Layers
// that received a mask are appended to `masked` when given.
Overrides drop_connect_overrides(const Model& model, const DropConnectConfig& dc, std::uint64_t draw_id,
                                 bool with_grad_mask, std::vector<std::size_t>* masked = nullptr);

std::string_view to_string(LayerSelection s) noexcept;
LayerSelection parse_layer_selection(std::string_view s);

void to_json(nlohmann::json& j, const DropConnectConfig& dc);
void from_json(const nlohmann::json& j, DropConnectConfig& dc);

} // namespace rramft
