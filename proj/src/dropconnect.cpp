#include "rramft/dropconnect.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "rramft/error.hpp"
#include "rramft/kernels.hpp"

namespace rramft {

void DropConnectConfig::validate() const {
    if (!(p >= 0.0 && p < 1.0)) {
        throw ConfigError("drop-connect rate must satisfy 0 <= p < 1, got " + std::to_string(p));
    }
}

bool selects(LayerSelection selection, const std::vector<std::string>& listed, const LayerSpec& layer) {
    if (!layer.is_conv()) return false;
    switch (selection) {
    case LayerSelection::kernel_above_1x1: return layer.kernel > 1;
    case LayerSelection::all_conv: return true;
    case LayerSelection::none: return false;
    case LayerSelection::listed: return std::find(listed.begin(), listed.end(), layer.id) != listed.end();
    }
    return false;
}

bool DropConnectConfig::applies(const LayerSpec& layer) const {
    return selects(applies_to, layers, layer);
}

Mask sample_mask(const Shape& shape, double drop_p, Rng& rng, std::uint64_t draw_id) {
    if (!(drop_p >= 0.0 && drop_p <= 1.0)) throw ConfigError("mask drop probability must be in [0, 1]");
    Mask m{Tensor(shape, 1.0), draw_id};
    if (drop_p == 0.0) return m;
    for (double& v : m.values.data()) v = uniform01(rng) < drop_p ? 0.0 : 1.0;
    return m;
}

Mask layer_mask(const Shape& shape, const DropConnectConfig& dc, std::uint64_t draw_id, std::string_view layer_id) {
    Rng rng(derive_seed(dc.mask_seed, draw_id, fnv1a(layer_id)));
    return sample_mask(shape, dc.drop_probability(), rng, draw_id);
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const LayerSpec& layer) {
    if (input.rank() != 4) throw ShapeError("layer '" + layer.id + "': conv input must be NCHW");
    if (input.dim(1) != layer.in_channels) {
        throw ShapeError("layer '" + layer.id + "': input has " + std::to_string(input.dim(1)) +
                         " channels, layer expects " + std::to_string(layer.in_channels));
    }
    const Shape wshape{layer.out_channels, layer.in_channels / layer.groups, layer.kernel, layer.kernel};
    if (weights.shape() != wshape) {
        throw ShapeError("layer '" + layer.id + "': weights " + shape_to_string(weights.shape()) + ", expected " +
                         shape_to_string(wshape));
    }
    ConvGeometry g{input.dim(0), layer.in_channels, layer.out_channels, input.dim(2), input.dim(3),
                   layer.kernel, layer.stride, layer.padding, layer.groups};
    try {
        g.validate();
    } catch (const ShapeError& e) {
        throw ShapeError("layer '" + layer.id + "': " + e.what());
    }
    Tensor out({g.batch, g.out_channels, g.out_height(), g.out_width()});
    kernels::conv2d_forward(g, input.data(), weights.data(), out.data());
    return out;
}

Tensor apply_drop_connect(const Tensor& input, const Tensor& weights, const Mask& mask, double p,
                          const LayerSpec& layer) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("drop-connect rate must satisfy 0 <= p < 1");
    if (mask.values.shape() != weights.shape()) {
        throw ShapeError("layer '" + layer.id + "': mask " + shape_to_string(mask.values.shape()) +
                         " does not match weights " + shape_to_string(weights.shape()));
    }
    Tensor masked = weights;
    for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= mask.values[i];
    Tensor out = conv2d_forward(input, masked, layer);
    const double scale = 1.0 / (1.0 - p);
    if (scale != 1.0) {
        for (double& v : out.data()) v *= scale;
    }
    return out;
}

Overrides drop_connect_overrides(const Model& model, const DropConnectConfig& dc, std::uint64_t draw_id,
                                 bool with_grad_mask, std::vector<std::size_t>* masked) {
    dc.validate();
    const auto& layers = model.spec().layers;
    Overrides ov(layers.size());
    bool any = false;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        if (!dc.applies(layers[li])) continue;
        const Tensor& w = model.params(li).weight;
        Mask mask = layer_mask(w.shape(), dc, draw_id, layers[li].id);
        Tensor eff = w;
        for (std::size_t i = 0; i < eff.size(); ++i) eff[i] *= mask.values[i];
        ov[li].weight = std::move(eff);
        if (with_grad_mask) ov[li].grad_mask = std::move(mask.values);
        double scale = dc.output_scale();
        if (dc.bn_scaling == BnScaling::explicit_input) {
            // Hand the factor to the batchnorm reading this conv, if it is the
            // only consumer.
            const auto& preds = model.shapes().predecessors;
            for (std::size_t lj = li + 1; lj < layers.size(); ++lj) {
                if (layers[lj].kind == LayerKind::batchnorm && preds[lj][0] == static_cast<long>(li) &&
                    model.shapes().fanout[li] == 1) {
                    ov[lj].input_scale = scale;
                    scale = 1.0;
                    break;
                }
            }
        }
        ov[li].output_scale = scale;
        if (masked) masked->push_back(li);
        any = true;
    }
    if (!any) ov.clear();
    return ov;
}

std::string_view to_string(LayerSelection s) noexcept {
    switch (s) {
    case LayerSelection::kernel_above_1x1: return "kernel>1";
    case LayerSelection::all_conv: return "all-conv";
    case LayerSelection::none: return "none";
    case LayerSelection::listed: return "listed";
    }
    return "kernel>1";
}

LayerSelection parse_layer_selection(std::string_view s) {
    if (s == "kernel>1" || s == "default") return LayerSelection::kernel_above_1x1;
    if (s == "all-conv") return LayerSelection::all_conv;
    if (s == "none") return LayerSelection::none;
    if (s == "listed") return LayerSelection::listed;
    throw ConfigError("unknown layer selection '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const DropConnectConfig& dc) {
    j = nlohmann::json{{"p", dc.p},
                       {"applies_to", std::string(to_string(dc.applies_to))},
                       {"mask_seed", dc.mask_seed},
                       {"convention", dc.convention == MaskConvention::drop_probability ? "drop" : "keep"},
                       {"bn_scaling", dc.bn_scaling == BnScaling::implicit ? "implicit" : "explicit-input"}};
    if (!dc.layers.empty()) j["layers"] = dc.layers;
}

void from_json(const nlohmann::json& j, DropConnectConfig& dc) {
    dc = DropConnectConfig{};
    dc.p = j.value("p", 0.0);
    dc.applies_to = parse_layer_selection(j.value("applies_to", std::string("kernel>1")));
    dc.layers = j.value("layers", std::vector<std::string>{});
    dc.mask_seed = j.value("mask_seed", dc.mask_seed);
    const std::string conv = j.value("convention", std::string("drop"));
    if (conv != "drop" && conv != "keep") throw ConfigError("mask convention must be 'drop' or 'keep'");
    dc.convention = conv == "drop" ? MaskConvention::drop_probability : MaskConvention::keep_probability;
    const std::string bn = j.value("bn_scaling", std::string("implicit"));
    if (bn != "implicit" && bn != "explicit-input") throw ConfigError("bn_scaling must be 'implicit' or 'explicit-input'");
    dc.bn_scaling = bn == "implicit" ? BnScaling::implicit : BnScaling::explicit_input;
    dc.validate();
}

} // namespace rramft
