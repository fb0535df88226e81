#include "rramft/topologies.hpp"

#include <map>

#include "rramft/error.hpp"

namespace rramft {
namespace {

class NetBuilder {
public:
    NetBuilder(std::string name, FeatureShape input) {
        spec_.name = std::move(name);
        spec_.input = input;
        channels_[std::string(kNetworkInput)] = input.channels;
        last_ = std::string(kNetworkInput);
    }

    std::string conv(const std::string& id, std::size_t out, std::size_t k, std::size_t stride,
                     const std::string& from = {}, bool shortcut = false, bool depthwise = false) {
        LayerSpec l;
        l.id = id;
        l.kind = LayerKind::conv2d;
        l.in_channels = channels_.at(src(from));
        l.out_channels = out;
        l.kernel = k;
        l.stride = stride;
        l.padding = k / 2;
        l.groups = depthwise ? l.in_channels : 1;
        l.shortcut = shortcut;
        return push(std::move(l), from, out);
    }
    std::string bn(const std::string& id, const std::string& from = {}) {
        LayerSpec l;
        l.id = id;
        l.kind = LayerKind::batchnorm;
        l.in_channels = l.out_channels = channels_.at(src(from));
        return push(std::move(l), from, l.in_channels);
    }
    std::string simple(const std::string& id, LayerKind kind, const std::string& from = {}) {
        LayerSpec l;
        l.id = id;
        l.kind = kind;
        return push(std::move(l), from, channels_.at(src(from)));
    }
    std::string pool(const std::string& id, bool global) {
        LayerSpec l;
        l.id = id;
        l.kind = LayerKind::avgpool;
        l.global_pool = global;
        if (!global) l.kernel = l.stride = 2;
        return push(std::move(l), {}, channels_.at(last_));
    }
    std::string add(const std::string& id, const std::string& a, const std::string& b) {
        LayerSpec l;
        l.id = id;
        l.kind = LayerKind::residual_add;
        l.inputs = {a, b};
        spec_.layers.push_back(l);
        channels_[id] = channels_.at(a);
        last_ = id;
        return id;
    }
    std::string fc(const std::string& id, std::size_t in_features, std::size_t out) {
        LayerSpec l;
        l.id = id;
        l.kind = LayerKind::fc;
        l.in_channels = in_features;
        l.out_channels = out;
        return push(std::move(l), {}, out);
    }
    const std::string& last() const { return last_; }
    std::size_t channels(const std::string& id) const { return channels_.at(id); }
    NetworkSpec finish() {
        infer_shapes(spec_);
        return std::move(spec_);
    }

private:
    const std::string& src(const std::string& from) const { return from.empty() ? last_ : from; }
    std::string push(LayerSpec l, const std::string& from, std::size_t out_channels) {
        if (!from.empty() && from != last_) l.inputs = {from};
        if (!from.empty() && from == std::string(kNetworkInput) && spec_.layers.empty()) l.inputs.clear();
        channels_[l.id] = out_channels;
        last_ = l.id;
        spec_.layers.push_back(std::move(l));
        return last_;
    }

    NetworkSpec spec_;
    std::map<std::string, std::size_t> channels_;
    std::string last_;
};

} // namespace

NetworkSpec make_resnet(std::string name, FeatureShape input, std::array<std::size_t, 3> widths,
                        std::size_t blocks_per_stage, std::size_t classes) {
    NetBuilder b(std::move(name), input);
    b.conv("conv1", widths[0], 3, 1);
    b.bn("bn1");
    std::string x = b.simple("relu1", LayerKind::relu);
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t k = 0; k < blocks_per_stage; ++k) {
            const std::string p = "layer" + std::to_string(s + 1) + "." + std::to_string(k) + ".";
            const std::size_t stride = (s > 0 && k == 0) ? 2 : 1;
            const bool project = stride != 1 || b.channels(x) != widths[s];
            b.conv(p + "conv1", widths[s], 3, stride, x);
            b.bn(p + "bn1");
            b.simple(p + "relu1", LayerKind::relu);
            b.conv(p + "conv2", widths[s], 3, 1);
            const std::string main = b.bn(p + "bn2");
            std::string skip = x;
            if (project) {
                b.conv(p + "shortcut.conv", widths[s], 1, stride, x, true);
                skip = b.bn(p + "shortcut.bn");
            }
            b.add(p + "add", main, skip);
            x = b.simple(p + "relu2", LayerKind::relu);
        }
    }
    b.pool("pool", true);
    b.fc("fc", widths[2], classes);
    b.simple("loss", LayerKind::softmax_xent);
    return b.finish();
}

NetworkSpec make_vgg(std::string name, FeatureShape input, const std::vector<std::size_t>& config,
                     std::size_t classes) {
    NetBuilder b(std::move(name), input);
    std::size_t side = input.height, conv_i = 0, pool_i = 0, channels = input.channels;
    for (std::size_t c : config) {
        if (c == 0) {
            b.pool("pool" + std::to_string(++pool_i), false);
            side /= 2;
        } else {
            const std::string i = std::to_string(++conv_i);
            b.conv("conv" + i, c, 3, 1);
            b.bn("bn" + i);
            b.simple("relu" + i, LayerKind::relu);
            channels = c;
        }
    }
    b.fc("fc", channels * side * side, classes);
    b.simple("loss", LayerKind::softmax_xent);
    return b.finish();
}

NetworkSpec make_mobilenetv2(std::string name, FeatureShape input, std::size_t stem_channels,
                             const std::vector<InvertedResidualStage>& stages, std::size_t head_channels,
                             std::size_t classes) {
    NetBuilder b(std::move(name), input);
    b.conv("stem.conv", stem_channels, 3, 1);
    b.bn("stem.bn");
    std::string x = b.simple("stem.relu", LayerKind::relu);
    std::size_t block = 0;
    for (const auto& st : stages) {
        for (std::size_t r = 0; r < st.repeats; ++r) {
            const std::string p = "block" + std::to_string(block++) + ".";
            const std::size_t stride = r == 0 ? st.stride : 1;
            const std::size_t in_c = b.channels(x);
            const std::size_t hidden = in_c * st.expansion;
            std::string h = x;
            if (st.expansion != 1) {
                b.conv(p + "expand.conv", hidden, 1, 1, x);
                b.bn(p + "expand.bn");
                h = b.simple(p + "expand.relu", LayerKind::relu);
            }
            b.conv(p + "dw.conv", hidden, 3, stride, h, false, true);
            b.bn(p + "dw.bn");
            b.simple(p + "dw.relu", LayerKind::relu);
            b.conv(p + "project.conv", st.channels, 1, 1);
            const std::string proj = b.bn(p + "project.bn");
            x = (stride == 1 && in_c == st.channels) ? b.add(p + "add", proj, x) : proj;
        }
    }
    b.conv("head.conv", head_channels, 1, 1, x);
    b.bn("head.bn");
    b.simple("head.relu", LayerKind::relu);
    b.pool("pool", true);
    b.fc("fc", head_channels, classes);
    b.simple("loss", LayerKind::softmax_xent);
    return b.finish();
}

NetworkSpec builtin_network(const std::string& name) {
    const FeatureShape cifar{3, 32, 32};
    const FeatureShape desk{3, 12, 12};
    if (name == "resnet20") return make_resnet(name, cifar, {16, 32, 64}, 3, 10);
    if (name == "vgg13") {
        return make_vgg(name, cifar, {64, 64, 0, 128, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0}, 10);
    }
    if (name == "mobilenetv2") {
        return make_mobilenetv2(name, cifar, 32,
                                {{1, 16, 1, 1}, {6, 24, 2, 1}, {6, 32, 3, 2}, {6, 64, 4, 2},
                                 {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}},
                                1280, 10);
    }
    if (name == "desk-resnet") return make_resnet(name, desk, {8, 16, 32}, 1, 10);
    if (name == "desk-vgg") return make_vgg(name, desk, {8, 8, 0, 16, 16, 0, 32, 32, 0}, 10);
    if (name == "desk-mobilenet") {
        return make_mobilenetv2(name, desk, 8, {{1, 8, 1, 1}, {4, 12, 2, 2}, {4, 16, 2, 2}}, 64, 10);
    }
    throw ConfigError("unknown built-in network '" + name + "'");
}

std::vector<std::string> builtin_network_names() {
    return {"resnet20", "vgg13", "mobilenetv2", "desk-resnet", "desk-vgg", "desk-mobilenet"};
}

NetworkSpec resolve_network(const std::string& ref) {
    constexpr std::string_view prefix = "builtin:";
    if (ref.rfind(prefix, 0) == 0) return builtin_network(ref.substr(prefix.size()));
    return load_network(ref);
}

} // namespace rramft
