#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "rramft/crossbar.hpp"
#include "rramft/dropconnect.hpp"
#include "rramft/error.hpp"
#include "rramft/topologies.hpp"
#include "rramft/transforms.hpp"
#include "support/oracles.hpp"

using namespace rramft;

namespace {

// Stage widths of a ResNet-style spec: output channels of the first conv of each stage.
std::vector<std::size_t> stage_widths(const NetworkSpec& net) {
    std::vector<std::size_t> w;
    for (const std::string id : {"layer1.0.conv1", "layer2.0.conv1", "layer3.0.conv1"}) {
        w.push_back(net.layers[net.index_of(id)].out_channels);
    }
    return w;
}

// Random batchnorm statistics so eval-mode inference exercises every parameter.
void randomize_batchnorm(Model& model, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::normal_distribution<double> n(0.0, 0.2);
    for (std::size_t li = 0; li < model.layer_count(); ++li) {
        if (model.spec().layers[li].kind != LayerKind::batchnorm) continue;
        LayerParams& p = model.params(li);
        for (double& v : p.gamma.data()) v = u(gen);
        for (double& v : p.beta.data()) v = n(gen);
        for (double& v : p.running_mean.data()) v = n(gen);
        for (double& v : p.running_var.data()) v = u(gen);
    }
}

Tensor random_input(const NetworkSpec& net, std::size_t batch, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    return Tensor({batch, net.input.channels, net.input.height, net.input.width},
                  oracle::random_vector(batch * net.input.numel(), gen));
}

std::size_t layer_params(const Model& m, const std::string& id) {
    return m.params(m.spec().index_of(id)).weight.size();
}

} // namespace

TEST_CASE("channel rounding") {
    CHECK(round_channels(19.2) == 19);
    CHECK(round_channels(12.5) == 13);
    CHECK(round_channels(25.6) == 26);
    CHECK(round_channels(51.2) == 51);
    CHECK(round_channels(102.4) == 102);
}

TEST_CASE("widening") {
    const NetworkSpec resnet = builtin_network("resnet20");

    SUBCASE("16 channels at p = 0.2 become 19") {
        const NetworkSpec w = widen(resnet, {0.2});
        CHECK(w.layers[w.index_of("conv1")].out_channels == 19);
        CHECK(stage_widths(w) == std::vector<std::size_t>{19, 38, 77});
    }
    SUBCASE("ResNet20 stages at p = 0.6") {
        CHECK(stage_widths(widen(resnet, {0.6})) == std::vector<std::size_t>{26, 51, 102});
    }
    SUBCASE("p = 0 is the identity") {
        for (const auto& name : builtin_network_names()) {
            CAPTURE(name);
            const NetworkSpec net = builtin_network(name);
            const NetworkSpec same = widen(net, {0.0});
            CHECK(same == net);
            if (net.input.height <= 12) {
                Model a(net, 5), b(same, 5);
                randomize_batchnorm(a, 1);
                randomize_batchnorm(b, 1);
                const Tensor x = random_input(net, 3, 2);
                CHECK(bitwise_equal(a.infer(x).data(), b.infer(x).data()));
            }
        }
    }
    SUBCASE("input and classifier widths are fixed, interior widths grow") {
        for (const auto& name : builtin_network_names()) {
            for (double p : {0.2, 0.4, 0.6}) {
                CAPTURE(name);
                CAPTURE(p);
                const NetworkSpec net = builtin_network(name);
                const NetworkSpec w = widen(net, {p});
                CHECK_NOTHROW(infer_shapes(w));
                CHECK(w.input == net.input);
                for (std::size_t li = 0; li < net.layers.size(); ++li) {
                    const LayerSpec& a = net.layers[li];
                    const LayerSpec& b = w.layers[li];
                    if (a.kind == LayerKind::conv2d) {
                        if (a.in_channels == net.input.channels && li == 0) CHECK(b.in_channels == a.in_channels);
                        else CHECK(b.in_channels > a.in_channels);
                        CHECK(b.out_channels > a.out_channels);
                        CHECK(b.out_channels == round_channels(static_cast<double>(a.out_channels) * (1.0 + p)));
                        if (a.groups != 1) {
                            CHECK(b.groups == b.in_channels);
                            CHECK(b.in_channels == b.out_channels);
                        }
                    } else if (a.kind == LayerKind::fc) {
                        CHECK(b.out_channels == a.out_channels);
                        CHECK(b.in_channels > a.in_channels);
                    } else if (a.kind == LayerKind::batchnorm) {
                        CHECK(b.in_channels > a.in_channels);
                    }
                }
                Model model(w, 1);
                CHECK(model.parameter_count() > Model(net, 1).parameter_count());
            }
        }
    }
    SUBCASE("widened nets are named after their multiplier") {
        CHECK(widen(resnet, {0.2}).name == "resnet20-w1.2");
        CHECK(widen(resnet, {0.0}).name == "resnet20");
    }
    SUBCASE("negative widening is rejected") {
        CHECK_THROWS_AS(widen(resnet, {-0.1}), ConfigError);
    }
}

TEST_CASE("shortcut expansion") {
    const NetworkSpec resnet = builtin_network("resnet20");
    const ShortcutExpansion x = expand_shortcut(resnet);

    SUBCASE("every 1x1 shortcut becomes a padded 3x3 convolution") {
        REQUIRE(x.expanded.size() == 2);
        for (const auto& id : x.expanded) {
            const LayerSpec& before = resnet.layers[resnet.index_of(id)];
            const LayerSpec& after = x.spec.layers[x.spec.index_of(id)];
            CHECK(before.kernel == 1);
            CHECK(after.kernel == 3);
            CHECK(after.padding == 1);
            CHECK(after.stride == before.stride);
            CHECK(after.in_channels == before.in_channels);
            CHECK(after.out_channels == before.out_channels);
        }
        CHECK(x.spec.name == "resnet20-sc3x3");
        CHECK_NOTHROW(infer_shapes(x.spec));
    }
    SUBCASE("expanded shortcuts have nine times the parameters") {
        const Model a(resnet, 1), b(x.spec, 1);
        for (const auto& id : x.expanded) CHECK(layer_params(b, id) == 9 * layer_params(a, id));
    }
    SUBCASE("expanded shortcuts move to crossbars and take drop-connect masks") {
        const PlacementPlan before = plan_placement(resnet, PlacementPolicy::fault_free_pointwise);
        const PlacementPlan after = plan_placement(x.spec, PlacementPolicy::fault_free_pointwise);
        DropConnectConfig dc;
        dc.p = 0.3;
        std::vector<std::size_t> masked;
        drop_connect_overrides(Model(x.spec, 1), dc, 0, false, &masked);
        for (const auto& id : x.expanded) {
            const std::size_t li = x.spec.index_of(id);
            CHECK_FALSE(before.on_rram(li));
            CHECK(after.on_rram(li));
            CHECK(std::find(masked.begin(), masked.end(), li) != masked.end());
        }
        CHECK(after.rram_count() == before.rram_count() + x.expanded.size());
    }
    SUBCASE("centre-tap initialisation preserves the network function") {
        const NetworkSpec desk = builtin_network("desk-resnet");
        Model model(desk, 9);
        randomize_batchnorm(model, 3);
        const Model wide = expand_shortcut_center_tap(model);
        REQUIRE(wide.spec().layers[wide.spec().index_of("layer2.0.shortcut.conv")].kernel == 3);
        const Tensor x_in = random_input(desk, 4, 5);
        const Tensor a = model.infer(x_in), b = wide.infer(x_in);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }
    SUBCASE("nets without shortcut convolutions are unchanged") {
        for (const std::string name : {"vgg13", "mobilenetv2", "desk-vgg"}) {
            const ShortcutExpansion none = expand_shortcut(builtin_network(name));
            CHECK(none.expanded.empty());
            CHECK(none.spec == builtin_network(name));
        }
    }
}

TEST_CASE("placement planning") {
    SUBCASE("MobileNetV2 point-wise convolutions stay on the host") {
        const NetworkSpec net = builtin_network("mobilenetv2");
        const PlacementPlan plan = plan_placement(net, PlacementPolicy::fault_free_pointwise);
        std::size_t pointwise = 0, depthwise = 0;
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            const LayerSpec& l = net.layers[li];
            if (!l.is_conv()) {
                CHECK_FALSE(plan.on_rram(li));
            } else if (l.kernel == 1) {
                CHECK_FALSE(plan.on_rram(li));
                ++pointwise;
            } else {
                CHECK(plan.on_rram(li));
                depthwise += l.groups != 1;
            }
        }
        CHECK(pointwise > 30);
        CHECK(depthwise == 17);
    }
    SUBCASE("all-rram leaves no convolution on the host") {
        for (const auto& name : builtin_network_names()) {
            const NetworkSpec net = builtin_network(name);
            const PlacementPlan plan = plan_placement(net, PlacementPolicy::all_rram);
            for (std::size_t li = 0; li < net.layers.size(); ++li) CHECK(plan.on_rram(li) == net.layers[li].is_conv());
        }
    }
    SUBCASE("without 1x1 convolutions both policies agree") {
        for (const std::string name : {"vgg13", "desk-vgg"}) {
            const NetworkSpec net = builtin_network(name);
            CHECK(plan_placement(net, PlacementPolicy::fault_free_pointwise) ==
                  plan_placement(net, PlacementPolicy::all_rram));
        }
    }
    SUBCASE("host-placed 1x1 layers are exact under any fault map") {
        const NetworkSpec net = builtin_network("desk-mobilenet");
        const Model model(net, 2);
        const PlacementPlan plan = plan_placement(net, PlacementPolicy::fault_free_pointwise);
        const CrossbarArray arrays = map_network(model, plan);
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const Overrides ov = crossbar_overrides(model, arrays, inject_sa1(arrays, 0.3, seed));
            for (std::size_t li = 0; li < net.layers.size(); ++li) {
                if (net.layers[li].is_pointwise_conv()) {
                    CHECK_FALSE(ov[li].weight.has_value());
                    CHECK(ov[li].output_scale == 1.0);
                }
            }
        }
    }
    SUBCASE("custom plans") {
        const NetworkSpec net = builtin_network("desk-resnet");
        const PlacementPlan plan =
            plan_placement(net, PlacementPolicy::custom, {{"layer2.0.shortcut.conv", Placement::rram},
                                                          {"conv1", Placement::host}});
        CHECK(plan.on_rram(net.index_of("layer2.0.shortcut.conv")));
        CHECK_FALSE(plan.on_rram(net.index_of("conv1")));
        CHECK(plan.on_rram(net.index_of("layer1.0.conv1")));
        CHECK_THROWS_AS(plan_placement(net, PlacementPolicy::custom, {{"no.such.layer", Placement::rram}}),
                        ConfigError);
        CHECK_THROWS_AS(plan_placement(net, PlacementPolicy::custom, {{"fc", Placement::rram}}), ConfigError);
        CHECK_THROWS_AS(parse_placement_policy("sometimes"), ConfigError);
    }
    SUBCASE("plan files round trip") {
        const NetworkSpec net = builtin_network("desk-mobilenet");
        const PlacementPlan plan = plan_placement(net, PlacementPolicy::all_rram);
        const auto path = std::filesystem::temp_directory_path() / "rramft_plan_test.txt";
        save_placement(net, plan, path.string());
        CHECK(plan_placement(net, PlacementPolicy::custom, load_placement_overrides(path.string())) == plan);
        CHECK(resolve_placement(net, path.string()) == plan);
        CHECK(resolve_placement(net, "default") == plan_placement(net, PlacementPolicy::fault_free_pointwise));
        CHECK(resolve_placement(net, "all-rram") == plan);
        {
            std::ofstream os(path);
            os << "# comment\nblock0.dw.conv host\nbroken line here\n";
        }
        CHECK_THROWS(load_placement_overrides(path.string()));
        std::filesystem::remove(path);
    }
}

TEST_CASE("transformed specs survive a file round trip") {
    const NetworkSpec net = expand_shortcut(widen(builtin_network("resnet20"), {0.4})).spec;
    const auto path = std::filesystem::temp_directory_path() / "rramft_transformed.json";
    save_network(net, path.string());
    CHECK(load_network(path.string()) == net);
    std::filesystem::remove(path);
}
