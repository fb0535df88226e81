#include "rramft/cost_model.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rramft/error.hpp"
#include "rramft/topologies.hpp"

namespace rramft {

OpCount count_ops(const NetworkSpec& net, const PlacementPlan& plan) {
    const InferredNetwork shapes = infer_shapes(net);
    if (plan.layers.size() != net.layers.size()) throw ShapeError("placement plan does not match the network");
    OpCount out;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const LayerSpec& l = net.layers[li];
        LayerOps ops{l.id, l.kind, plan.on_rram(li), 0};
        if (l.kind == LayerKind::conv2d) {
            const FeatureShape o = shapes.output_shapes[li];
            ops.macs = static_cast<std::uint64_t>(l.out_channels) * (l.in_channels / l.groups) * l.kernel *
                       l.kernel * o.height * o.width;
        } else if (l.kind == LayerKind::fc) {
            ops.macs = static_cast<std::uint64_t>(l.out_channels) * l.in_channels;
        }
        (ops.rram ? out.rram_total : out.host_total) += ops.macs;
        out.layers.push_back(std::move(ops));
    }
    return out;
}

void CostModelParams::validate() const {
    if (!calibrated()) throw ConfigError("cost model has neither explicit constants nor a calibration");
    if (!(*throughput > 0.0) || !(*power > 0.0)) throw ConfigError("cost model constants must be positive");
    if (!(workload > 0.0)) throw ConfigError("cost model workload must be positive");
    if (host_throughput.has_value() != host_power.has_value()) {
        throw ConfigError("host throughput and host power must be given together");
    }
    if (host_throughput && (!(*host_throughput > 0.0) || !(*host_power >= 0.0))) {
        throw ConfigError("host cost constants must be positive");
    }
}

namespace {

CostEstimate layer_cost(std::uint64_t macs, bool rram, const CostModelParams& p) {
    const double ops = static_cast<double>(macs) * p.workload;
    if (rram) {
        const double latency = ops / *p.throughput;
        return {latency, latency * *p.power};
    }
    if (!p.host_throughput) return {};
    const double latency = ops / *p.host_throughput;
    return {latency, latency * *p.host_power};
}

} // namespace

CostEstimate estimate(const OpCount& ops, const CostModelParams& params) {
    params.validate();
    CostEstimate total = layer_cost(ops.rram_total, true, params);
    const CostEstimate host = layer_cost(ops.host_total, false, params);
    total.latency += host.latency;
    total.energy += host.energy;
    return total;
}

CostEstimate estimate(const NetworkSpec& net, const PlacementPlan& plan, const CostModelParams& params) {
    return estimate(count_ops(net, plan), params);
}

CostModelParams calibrate(CostModelParams params, const OpCount& anchor_ops, double latency, double energy) {
    if (!(latency > 0.0) || !(energy > 0.0)) throw ConfigError("anchor latency and energy must be positive");
    if (anchor_ops.rram_total == 0) throw ConfigError("anchor network has no RRAM-placed operations");
    if (!(params.workload > 0.0)) throw ConfigError("cost model workload must be positive");
    params.throughput = static_cast<double>(anchor_ops.rram_total) * params.workload / latency;
    params.power = energy / latency;
    return params;
}

CostModelParams calibrate(CostModelParams params, const NetworkSpec& net, const PlacementPlan& plan, double latency,
                          double energy) {
    return calibrate(std::move(params), count_ops(net, plan), latency, energy);
}

CostModelParams calibrate(const CostAnchor& anchor) {
    NetworkSpec net = widen(resolve_network(anchor.net), WidenConfig{anchor.width - 1.0});
    CostModelParams params;
    params.workload = anchor.workload;
    return calibrate(params, net, resolve_placement(net, anchor.plan), anchor.latency, anchor.energy);
}

void to_json(nlohmann::json& j, const CostAnchor& a) {
    j = {{"net", a.net},         {"plan", a.plan},     {"width", a.width},
         {"latency_s", a.latency}, {"energy", a.energy}, {"workload", a.workload}};
}

void from_json(const nlohmann::json& j, CostAnchor& a) {
    a = CostAnchor{};
    a.net = j.value("net", a.net);
    a.plan = j.value("plan", a.plan);
    a.width = j.value("width", a.width);
    a.latency = j.at("latency_s").get<double>();
    a.energy = j.at("energy").get<double>();
    a.workload = j.value("workload", a.workload);
}

CostAnchor load_cost_anchor(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open cost anchor '" + path + "'");
    try {
        return nlohmann::json::parse(is).get<CostAnchor>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("cost anchor '" + path + "': " + e.what());
    }
}

std::string cost_table_csv(const OpCount& ops, const CostModelParams& params) {
    params.validate();
    std::ostringstream os;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    os << "layer,kind,placement,macs,latency_s,energy\n";
    for (const auto& l : ops.layers) {
        const CostEstimate c = layer_cost(l.macs, l.rram, params);
        os << l.layer_id << ',' << to_string(l.kind) << ',' << (l.rram ? "rram" : "host") << ',' << l.macs << ','
           << num(c.latency) << ',' << num(c.energy) << '\n';
    }
    const CostEstimate t = estimate(ops, params);
    os << "total,,," << ops.rram_total + ops.host_total << ',' << num(t.latency) << ',' << num(t.energy) << '\n';
    return os.str();
}

} // namespace rramft
