#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rramft/network.hpp"
#include "rramft/transforms.hpp"

namespace rramft {

struct LayerOps {
    std::string layer_id;
    LayerKind kind = LayerKind::conv2d;
    bool rram = false;
    std::uint64_t macs = 0;  // multiply-accumulates of one inference
};

/// Multiply-accumulate counts. A conv with m filters over n/g input channels,
/// kernel k and output H x W costs m·(n/g)·k²·H·W. `rram_total` sums the
/// RRAM-placed layers only; `host_total` the rest.
struct OpCount {
    std::vector<LayerOps> layers;
    std::uint64_t rram_total = 0;
    std::uint64_t host_total = 0;
};

OpCount count_ops(const NetworkSpec& net, const PlacementPlan& plan);

/// Analytical accelerator cost. Latency is ops·workload / throughput and
/// energy is latency·power. Host ops are free unless host_throughput is set.
struct CostModelParams {
    std::optional<double> throughput;  // RRAM MACs per second
    std::optional<double> power;       // energy units per second of RRAM time
    double workload = 1.0;             // inferences per estimate
    std::optional<double> host_throughput;
    std::optional<double> host_power;

    bool calibrated() const noexcept { return throughput.has_value() && power.has_value(); }
    void validate() const;
};

struct CostEstimate {
    double latency = 0.0;
    double energy = 0.0;
};

CostEstimate estimate(const OpCount& ops, const CostModelParams& params);
CostEstimate estimate(const NetworkSpec& net, const PlacementPlan& plan, const CostModelParams& params);

struct CostAnchor {
    std::string net = "builtin:resnet20";
    std::string plan = "default";
    double width = 1.0;  // widening multiplier applied to `net` before counting
    double latency = 0.0;
    double energy = 0.0;
    double workload = 1.0;
};

// Sets throughput and power so that estimating the anchor reproduces it.
CostModelParams calibrate(CostModelParams params, const OpCount& anchor_ops, double latency, double energy);
CostModelParams calibrate(CostModelParams params, const NetworkSpec& net, const PlacementPlan& plan, double latency,
                          double energy);
CostModelParams calibrate(const CostAnchor& anchor);

CostAnchor load_cost_anchor(const std::string& path);
void to_json(nlohmann::json& j, const CostAnchor& a);
void from_json(const nlohmann::json& j, CostAnchor& a);

// CSV with columns layer,kind,placement,macs,latency_s,energy; a final
// "total" row carries the sums.
std::string cost_table_csv(const OpCount& ops, const CostModelParams& params);

} // namespace rramft
