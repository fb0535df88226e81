#include "rramft/transforms.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rramft/error.hpp"

namespace rramft {

std::size_t PlacementPlan::rram_count() const {
    return static_cast<std::size_t>(std::count(layers.begin(), layers.end(), Placement::rram));
}

PlacementPlan plan_placement(const NetworkSpec& net, PlacementPolicy policy,
                             const std::map<std::string, Placement>& overrides) {
    PlacementPlan plan;
    plan.layers.reserve(net.layers.size());
    for (const auto& layer : net.layers) {
        const bool rram = layer.is_conv() && (policy == PlacementPolicy::all_rram || layer.kernel > 1);
        plan.layers.push_back(rram ? Placement::rram : Placement::host);
    }
    if (policy == PlacementPolicy::custom) {
        for (const auto& [id, where] : overrides) {
            const auto idx = net.find(id);
            if (!idx) throw ConfigError("placement references unknown layer '" + id + "'");
            if (where == Placement::rram && !net.layers[*idx].is_conv()) {
                throw ConfigError("layer '" + id + "' is not a convolution and cannot be placed on RRAM");
            }
            plan.layers[*idx] = where;
        }
    } else if (!overrides.empty()) {
        throw ConfigError("placement overrides given for a non-custom policy");
    }
    return plan;
}

PlacementPolicy parse_placement_policy(std::string_view name) {
    if (name == "default" || name == "fault-free-pointwise") return PlacementPolicy::fault_free_pointwise;
    if (name == "all-rram") return PlacementPolicy::all_rram;
    if (name == "custom") return PlacementPolicy::custom;
    throw ConfigError("unknown placement policy '" + std::string(name) + "'");
}

std::string_view to_string(PlacementPolicy policy) noexcept {
    switch (policy) {
    case PlacementPolicy::fault_free_pointwise: return "default";
    case PlacementPolicy::all_rram: return "all-rram";
    case PlacementPolicy::custom: return "custom";
    }
    return "default";
}

std::map<std::string, Placement> load_placement_overrides(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open placement plan '" + path + "'");
    std::map<std::string, Placement> out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string id, where, extra;
        if (!(ls >> id)) continue;
        if (!(ls >> where) || (ls >> extra) || (where != "rram" && where != "host")) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected '<layer id> <rram|host>'");
        }
        out[id] = where == "rram" ? Placement::rram : Placement::host;
    }
    return out;
}

void save_placement(const NetworkSpec& net, const PlacementPlan& plan, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write placement plan '" + path + "'");
    os << "# placement for " << net.name << "\n";
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        os << net.layers[i].id << ' ' << (plan.on_rram(i) ? "rram" : "host") << '\n';
    }
}

PlacementPlan resolve_placement(const NetworkSpec& net, const std::string& ref) {
    if (ref == "default" || ref == "all-rram" || ref == "fault-free-pointwise") {
        return plan_placement(net, parse_placement_policy(ref));
    }
    return plan_placement(net, PlacementPolicy::custom, load_placement_overrides(ref));
}

std::size_t round_channels(double value) {
    return static_cast<std::size_t>(std::llround(value));  // llround rounds halves away from zero
}

namespace {

struct ChannelGroups {
    std::vector<std::size_t> parent;
    std::vector<std::size_t> width;
    std::vector<bool> fixed;

    std::size_t make(std::size_t w, bool is_fixed) {
        parent.push_back(parent.size());
        width.push_back(w);
        fixed.push_back(is_fixed);
        return parent.size() - 1;
    }
    std::size_t find(std::size_t g) {
        while (parent[g] != g) g = parent[g] = parent[parent[g]];
        return g;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        parent[b] = a;
        fixed[a] = fixed[a] || fixed[b];
        width[a] = std::max(width[a], width[b]);
    }
};

} // namespace

NetworkSpec widen(const NetworkSpec& net, const WidenConfig& cfg) {
    if (!(cfg.p >= 0.0)) throw ConfigError("widening factor p must be >= 0");
    const InferredNetwork shapes = infer_shapes(net);
    ChannelGroups groups;
    const std::size_t input_group = groups.make(net.input.channels, true);
    std::vector<std::size_t> out_group(net.layers.size());
    auto in_group = [&](std::size_t li, std::size_t k) {
        const long p = shapes.predecessors[li][k];
        return p < 0 ? input_group : out_group[static_cast<std::size_t>(p)];
    };

    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const LayerSpec& l = net.layers[li];
        switch (l.kind) {
        case LayerKind::conv2d:
            out_group[li] = l.groups == 1 ? groups.make(l.out_channels, false) : in_group(li, 0);
            break;
        case LayerKind::fc:
            out_group[li] = groups.make(l.out_channels, true);
            break;
        case LayerKind::residual_add:
            out_group[li] = in_group(li, 0);
            for (std::size_t k = 1; k < shapes.predecessors[li].size(); ++k) groups.unite(out_group[li], in_group(li, k));
            break;
        default:
            out_group[li] = in_group(li, 0);
            break;
        }
    }

    auto width_of = [&](std::size_t g) {
        g = groups.find(g);
        const double w = static_cast<double>(groups.width[g]);
        return groups.fixed[g] ? groups.width[g] : round_channels(w * (1.0 + cfg.p));
    };

    NetworkSpec out = net;
    if (cfg.p != 0.0) {
        std::ostringstream name;
        name << net.name << "-w" << (1.0 + cfg.p);
        out.name = name.str();
    }
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        LayerSpec& l = out.layers[li];
        switch (l.kind) {
        case LayerKind::conv2d:
            l.in_channels = width_of(in_group(li, 0));
            l.out_channels = width_of(out_group[li]);
            if (net.layers[li].groups != 1) l.groups = l.in_channels;
            break;
        case LayerKind::batchnorm:
            l.in_channels = l.out_channels = width_of(in_group(li, 0));
            break;
        case LayerKind::fc: {
            const FeatureShape in = shapes.input_shape_of(li, 0, net.input);
            l.in_channels = width_of(in_group(li, 0)) * in.height * in.width;
            break;
        }
        default:
            break;
        }
    }
    infer_shapes(out);
    return out;
}

ShortcutExpansion expand_shortcut(const NetworkSpec& net) {
    ShortcutExpansion r{net, {}};
    for (auto& l : r.spec.layers) {
        if (l.is_conv() && l.shortcut && l.kernel == 1) {
            l.kernel = 3;
            l.padding = 1;
            r.expanded.push_back(l.id);
        }
    }
    if (!r.expanded.empty()) r.spec.name = net.name + "-sc3x3";
    infer_shapes(r.spec);
    return r;
}

Model expand_shortcut_center_tap(const Model& model) {
    ShortcutExpansion x = expand_shortcut(model.spec());
    std::vector<LayerParams> params;
    params.reserve(model.layer_count());
    for (std::size_t li = 0; li < model.layer_count(); ++li) params.push_back(model.params(li));
    for (const auto& id : x.expanded) {
        const std::size_t li = x.spec.index_of(id);
        const Tensor& old = model.params(li).weight;
        Tensor w({old.dim(0), old.dim(1), 3, 3});
        for (std::size_t i = 0; i < old.size(); ++i) w[i * 9 + 4] = old[i];
        params[li].weight = std::move(w);
    }
    return Model(std::move(x.spec), std::move(params), model.batchnorm_options());
}

} // namespace rramft
