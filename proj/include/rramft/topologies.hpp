#pragma once

#include <array>
#include <string>
#include <vector>

#include "rramft/network.hpp"

namespace rramft {

// CIFAR-style ResNet: 3x3 stem, three stages of basic blocks, 1x1 projection
// shortcuts where the shape changes, global pooling and a linear classifier.
NetworkSpec make_resnet(std::string name, FeatureShape input, std::array<std::size_t, 3> widths,
                        std::size_t blocks_per_stage, std::size_t classes);

// VGG-style stack; 0 in `config` inserts a 2x2 average pool.
NetworkSpec make_vgg(std::string name, FeatureShape input, const std::vector<std::size_t>& config,
                     std::size_t classes);

struct InvertedResidualStage {
    std::size_t expansion;
    std::size_t channels;
    std::size_t repeats;
    std::size_t stride;
};

// MobileNetV2-style net: expand 1x1, depthwise 3x3, project 1x1 blocks.
NetworkSpec make_mobilenetv2(std::string name, FeatureShape input, std::size_t stem_channels,
                             const std::vector<InvertedResidualStage>& stages, std::size_t head_channels,
                             std::size_t classes);

// Named topologies: resnet20, vgg13, mobilenetv2 (CIFAR-10 sized) and
// desk-resnet, desk-vgg, desk-mobilenet (12x12 inputs, <100k parameters).
NetworkSpec builtin_network(const std::string& name);
std::vector<std::string> builtin_network_names();

// `builtin:<name>` selects a built-in topology; anything else is a file path.
NetworkSpec resolve_network(const std::string& ref);

} // namespace rramft
