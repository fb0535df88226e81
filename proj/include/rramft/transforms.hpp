#pragma once

#include <map>
#include <string>
#include <vector>

#include "rramft/model.hpp"
#include "rramft/network.hpp"

namespace rramft {

enum class Placement { rram, host };

enum class PlacementPolicy {
    fault_free_pointwise,  // 1x1 convs (and all non-conv layers) on the host
    all_rram,              // every conv on crossbars
    custom,
};

/// Execution target per layer, indexed like NetworkSpec::layers.
struct PlacementPlan {
    std::vector<Placement> layers;

    bool on_rram(std::size_t layer) const { return layers.at(layer) == Placement::rram; }
    std::size_t rram_count() const;
    bool operator==(const PlacementPlan&) const = default;
};

// Only conv2d layers may be placed on RRAM. For `custom`, layers missing from
// `overrides` follow the fault_free_pointwise rule; unknown ids are an error.
PlacementPlan plan_placement(const NetworkSpec& net, PlacementPolicy policy,
                             const std::map<std::string, Placement>& overrides = {});

PlacementPolicy parse_placement_policy(std::string_view name);
std::string_view to_string(PlacementPolicy policy) noexcept;

// Plan file: one "<layer id> <rram|host>" pair per line, '#' starts a comment.
std::map<std::string, Placement> load_placement_overrides(const std::string& path);
void save_placement(const NetworkSpec& net, const PlacementPlan& plan, const std::string& path);

// "default", "all-rram" or a plan file path.
PlacementPlan resolve_placement(const NetworkSpec& net, const std::string& ref);

struct WidenConfig {
    double p = 0.0;  // channels scale by 1 + p
};

// Nearest integer, ties away from zero.
std::size_t round_channels(double value);

/// Scales every interior channel count by 1 + p. Channels tied together by
/// residual joins or depthwise convolutions are rounded as one group, so joins
/// stay consistent; groups touching the network input or a classifier output
/// keep their width. The result is a new, untrained topology.
NetworkSpec widen(const NetworkSpec& net, const WidenConfig& cfg);

struct ShortcutExpansion {
    NetworkSpec spec;
    std::vector<std::string> expanded;  // ids of converted layers; empty means no-op
};

/// Replaces every 1x1 shortcut convolution by a 3x3 one with padding 1 and
/// the same stride and channels.
ShortcutExpansion expand_shortcut(const NetworkSpec& net);

/// Same transform applied to a trained model: the old 1x1 weight becomes the
/// centre tap of the 3x3 kernel and the rest is zero, so the network function
/// is unchanged.
Model expand_shortcut_center_tap(const Model& model);

} // namespace rramft
