#include "rramft/network.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rramft/error.hpp"

namespace rramft {
namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::conv2d, "conv2d"},   {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::relu, "relu"},       {LayerKind::avgpool, "avgpool"},
    {LayerKind::fc, "fc"},           {LayerKind::softmax_xent, "softmax-xent"},
    {LayerKind::residual_add, "residual-add"},
};

[[noreturn]] void fail(const LayerSpec& layer, const std::string& why) {
    throw ShapeError("layer '" + layer.id + "' (" + std::string(to_string(layer.kind)) + "): " + why);
}

std::string dims(const FeatureShape& s) {
    std::ostringstream os;
    os << s.channels << 'x' << s.height << 'x' << s.width;
    return os.str();
}

} // namespace

std::string_view to_string(LayerKind kind) noexcept {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
    for (const auto& [k, n] : kKindNames)
        if (n == name) return k;
    throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

std::optional<std::size_t> NetworkSpec::find(std::string_view id) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].id == id) return i;
    return std::nullopt;
}

std::size_t NetworkSpec::index_of(std::string_view id) const {
    if (auto i = find(id)) return *i;
    throw ShapeError("network '" + name + "' has no layer '" + std::string(id) + "'");
}

FeatureShape InferredNetwork::input_shape_of(std::size_t layer, std::size_t which,
                                             const FeatureShape& net_input) const {
    const long p = predecessors.at(layer).at(which);
    return p < 0 ? net_input : output_shapes[static_cast<std::size_t>(p)];
}

InferredNetwork infer_shapes(const NetworkSpec& spec) {
    if (spec.layers.empty()) throw ShapeError("network '" + spec.name + "' has no layers");
    if (spec.input.numel() == 0) throw ShapeError("network '" + spec.name + "' has an empty input shape");

    InferredNetwork net;
    net.output_shapes.resize(spec.layers.size());
    net.predecessors.resize(spec.layers.size());
    net.fanout.assign(spec.layers.size(), 0);

    std::set<std::string, std::less<>> seen;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& layer = spec.layers[li];
        if (layer.id.empty() || layer.id == kNetworkInput) fail(layer, "invalid layer id");
        if (seen.count(layer.id)) fail(layer, "duplicate layer id");

        // Predecessors must already be defined, which also rules out cycles.
        auto& preds = net.predecessors[li];
        if (layer.inputs.empty()) {
            preds.push_back(static_cast<long>(li) - 1);
        } else {
            for (const auto& in : layer.inputs) {
                if (in == kNetworkInput) {
                    preds.push_back(-1);
                } else if (!seen.count(in)) {
                    fail(layer, "input '" + in + "' is not an earlier layer");
                } else {
                    preds.push_back(static_cast<long>(*spec.find(in)));
                }
            }
        }
        for (long p : preds)
            if (p >= 0) ++net.fanout[static_cast<std::size_t>(p)];
        seen.insert(layer.id);

        const std::size_t arity = layer.kind == LayerKind::residual_add ? 2 : 1;
        if (layer.kind == LayerKind::residual_add ? preds.size() < arity : preds.size() != 1) {
            fail(layer, "expects " + std::string(arity == 1 ? "exactly one input" : "at least two inputs") +
                            ", got " + std::to_string(preds.size()));
        }
        const FeatureShape in = net.input_shape_of(li, 0, spec.input);
        FeatureShape out = in;

        switch (layer.kind) {
        case LayerKind::conv2d: {
            if (layer.kernel < 1 || layer.stride < 1) fail(layer, "kernel and stride must be >= 1");
            if (layer.in_channels < 1 || layer.out_channels < 1) fail(layer, "channel counts must be >= 1");
            if (layer.in_channels != in.channels) {
                fail(layer, "declares " + std::to_string(layer.in_channels) +
                                " input channels but its input is " + dims(in));
            }
            const bool depthwise = layer.groups == layer.in_channels && layer.groups == layer.out_channels;
            if (layer.groups != 1 && !depthwise) fail(layer, "only groups=1 or depthwise groups are supported");
            if (in.height + 2 * layer.padding < layer.kernel || in.width + 2 * layer.padding < layer.kernel) {
                fail(layer, "kernel " + std::to_string(layer.kernel) + " exceeds padded input " + dims(in));
            }
            out.channels = layer.out_channels;
            out.height = (in.height + 2 * layer.padding - layer.kernel) / layer.stride + 1;
            out.width = (in.width + 2 * layer.padding - layer.kernel) / layer.stride + 1;
            break;
        }
        case LayerKind::batchnorm:
            if (layer.in_channels != in.channels) {
                fail(layer, "declares " + std::to_string(layer.in_channels) + " channels but its input is " + dims(in));
            }
            break;
        case LayerKind::relu:
        case LayerKind::softmax_xent:
            break;
        case LayerKind::avgpool:
            if (layer.global_pool) {
                out.height = out.width = 1;
            } else {
                if (layer.kernel < 1 || layer.stride < 1) fail(layer, "kernel and stride must be >= 1");
                if (in.height < layer.kernel || in.width < layer.kernel) {
                    fail(layer, "pool window exceeds input " + dims(in));
                }
                out.height = (in.height - layer.kernel) / layer.stride + 1;
                out.width = (in.width - layer.kernel) / layer.stride + 1;
            }
            break;
        case LayerKind::fc:
            if (layer.in_channels != in.numel()) {
                fail(layer, "declares " + std::to_string(layer.in_channels) + " input features but its input " +
                                dims(in) + " flattens to " + std::to_string(in.numel()));
            }
            if (layer.out_channels < 1) fail(layer, "output features must be >= 1");
            out = FeatureShape{layer.out_channels, 1, 1};
            break;
        case LayerKind::residual_add:
            for (std::size_t k = 1; k < preds.size(); ++k) {
                const FeatureShape other = net.input_shape_of(li, k, spec.input);
                if (!(other == in)) fail(layer, "joins mismatched shapes " + dims(in) + " and " + dims(other));
            }
            break;
        }
        net.output_shapes[li] = out;
    }

    for (std::size_t li = 0; li + 1 < spec.layers.size(); ++li) {
        if (net.fanout[li] == 0) fail(spec.layers[li], "output is never consumed; the graph must have a single output");
    }
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        if (spec.layers[li].kind == LayerKind::softmax_xent && li + 1 != spec.layers.size()) {
            fail(spec.layers[li], "softmax-xent must be the final layer");
        }
    }
    return net;
}

void to_json(nlohmann::json& j, const LayerSpec& layer) {
    j = nlohmann::json{{"id", layer.id}, {"kind", std::string(to_string(layer.kind))}};
    if (!layer.inputs.empty()) j["inputs"] = layer.inputs;
    switch (layer.kind) {
    case LayerKind::conv2d:
        j["in"] = layer.in_channels;
        j["out"] = layer.out_channels;
        j["kernel"] = layer.kernel;
        j["stride"] = layer.stride;
        j["padding"] = layer.padding;
        if (layer.groups != 1) j["groups"] = layer.groups;
        if (layer.shortcut) j["shortcut"] = true;
        break;
    case LayerKind::batchnorm:
        j["in"] = layer.in_channels;
        break;
    case LayerKind::fc:
        j["in"] = layer.in_channels;
        j["out"] = layer.out_channels;
        break;
    case LayerKind::avgpool:
        if (layer.global_pool) {
            j["global"] = true;
        } else {
            j["kernel"] = layer.kernel;
            j["stride"] = layer.stride;
        }
        break;
    default:
        break;
    }
}

void from_json(const nlohmann::json& j, LayerSpec& layer) {
    layer = LayerSpec{};
    layer.id = j.at("id").get<std::string>();
    layer.kind = parse_layer_kind(j.at("kind").get<std::string>());
    if (j.contains("inputs")) layer.inputs = j.at("inputs").get<std::vector<std::string>>();
    layer.in_channels = j.value("in", std::size_t{0});
    layer.out_channels = j.value("out", std::size_t{0});
    layer.kernel = j.value("kernel", std::size_t{1});
    layer.stride = j.value("stride", std::size_t{1});
    layer.padding = j.value("padding", std::size_t{0});
    layer.groups = j.value("groups", std::size_t{1});
    layer.global_pool = j.value("global", false);
    layer.shortcut = j.value("shortcut", false);
    if (layer.kind == LayerKind::batchnorm) layer.out_channels = layer.in_channels;
}

void to_json(nlohmann::json& j, const NetworkSpec& spec) {
    j = nlohmann::json{{"name", spec.name},
                       {"input", {spec.input.channels, spec.input.height, spec.input.width}},
                       {"layers", spec.layers}};
}

void from_json(const nlohmann::json& j, NetworkSpec& spec) {
    spec.name = j.value("name", std::string("network"));
    const auto in = j.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw FormatError("network input must be [channels, height, width]");
    spec.input = FeatureShape{in[0], in[1], in[2]};
    spec.layers = j.at("layers").get<std::vector<LayerSpec>>();
}

NetworkSpec load_network(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open network spec '" + path + "'");
    NetworkSpec spec;
    try {
        spec = nlohmann::json::parse(is).get<NetworkSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("network spec '" + path + "': " + e.what());
    }
    infer_shapes(spec);
    return spec;
}

void save_network(const NetworkSpec& spec, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write network spec '" + path + "'");
    os << nlohmann::json(spec).dump(2) << '\n';
}

} // namespace rramft
