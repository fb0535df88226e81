#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "rramft/dropconnect.hpp"
#include "rramft/error.hpp"
#include "rramft/topologies.hpp"
#include "rramft/train.hpp"
#include "support/desk_models.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

using namespace rramft;

namespace {

LayerSpec conv3x3(std::size_t n, std::size_t m) {
    LayerSpec l = oracle::layer("conv", LayerKind::conv2d, n, m);
    l.kernel = 3;
    l.padding = 1;
    return l;
}

const rramft::DatasetSplit& small_data() { return desk::data(); }

const Checkpoint& trained(double p) { return desk::trained(p); }

} // namespace

TEST_CASE("mask sampling") {
    SUBCASE("p = 0 gives all ones") {
        Rng rng(1);
        const Mask m = sample_mask({10, 10}, 0.0, rng);
        for (double v : m.values.data()) CHECK(v == 1.0);
    }
    SUBCASE("zero count follows the binomial law") {
        Rng rng(2);
        const Mask m = sample_mask({100, 100}, 0.3, rng);
        std::size_t zeros = 0;
        for (double v : m.values.data()) {
            CHECK((v == 0.0 || v == 1.0));
            zeros += v == 0.0;
        }
        const double sigma = std::sqrt(10000 * 0.3 * 0.7);
        CHECK(std::abs(static_cast<double>(zeros) - 3000.0) <= 3 * sigma);
    }
    SUBCASE("masks are reproducible from seed, draw and layer") {
        DropConnectConfig dc;
        dc.p = 0.4;
        dc.mask_seed = 99;
        const Mask a = layer_mask({8, 4, 3, 3}, dc, 17, "stage1.conv");
        const Mask b = layer_mask({8, 4, 3, 3}, dc, 17, "stage1.conv");
        const Mask c = layer_mask({8, 4, 3, 3}, dc, 18, "stage1.conv");
        const Mask d = layer_mask({8, 4, 3, 3}, dc, 17, "stage2.conv");
        CHECK(bitwise_equal(a.values.data(), b.values.data()));
        CHECK_FALSE(bitwise_equal(a.values.data(), c.values.data()));
        CHECK_FALSE(bitwise_equal(a.values.data(), d.values.data()));
    }
    SUBCASE("keep convention inverts the rate") {
        DropConnectConfig dc;
        dc.p = 0.2;
        dc.convention = MaskConvention::keep_probability;
        CHECK(dc.drop_probability() == doctest::Approx(0.8));
        CHECK(dc.output_scale() == doctest::Approx(1.25));
    }
}

TEST_CASE("drop-connect rate must be below one") {
    DropConnectConfig dc;
    dc.p = 1.0;
    CHECK_THROWS_AS(dc.validate(), ConfigError);
    dc.p = -0.1;
    CHECK_THROWS_AS(dc.validate(), ConfigError);
    Tensor x({1, 2, 4, 4}, 1.0), w({3, 2, 3, 3}, 1.0);
    CHECK_THROWS_AS(apply_drop_connect(x, w, Mask{Tensor(w.shape(), 1.0), 0}, 1.0, conv3x3(2, 3)), ConfigError);
}

TEST_CASE("drop-connect convolution") {
    std::mt19937_64 gen(5);
    const LayerSpec l = conv3x3(3, 4);
    Tensor x({2, 3, 6, 6}, oracle::random_vector(216, gen));
    Tensor w({4, 3, 3, 3}, oracle::random_vector(108, gen));
    const Tensor plain = conv2d_forward(x, w, l);

    SUBCASE("p = 0 is the plain convolution") {
        Rng rng(1);
        const Tensor y = apply_drop_connect(x, w, sample_mask(w.shape(), 0.0, rng), 0.0, l);
        CHECK(bitwise_equal(y.data(), plain.data()));
    }
    SUBCASE("p = 0.5 with an all-ones mask doubles the output") {
        const Tensor y = apply_drop_connect(x, w, Mask{Tensor(w.shape(), 1.0), 0}, 0.5, l);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 2.0 * plain[i]);
    }
    SUBCASE("output is the scaled convolution of the masked weights") {
        Rng rng(3);
        const Mask m = sample_mask(w.shape(), 0.3, rng);
        std::vector<double> masked(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) masked[i] = w[i] * m.values[i];
        ConvGeometry g{2, 3, 4, 6, 6, 3, 1, 1, 1};
        const auto expect = oracle::conv2d(g, x.values(), masked);
        const Tensor y = apply_drop_connect(x, w, m, 0.3, l);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(expect[i] / 0.7).epsilon(1e-12));
    }
    SUBCASE("mean over many masks approaches the unmasked output") {
        // Positive operands keep every output well away from zero.
        std::uniform_real_distribution<double> u(0.5, 1.5);
        Tensor xp({1, 3, 6, 6}), wp({4, 3, 3, 3});
        for (double& v : xp.data()) v = u(gen);
        for (double& v : wp.data()) v = u(gen);
        const Tensor ref = conv2d_forward(xp, wp, l);
        for (double p : {0.1, 0.3, 0.5}) {
            Rng rng(derive_seed(7, static_cast<std::uint64_t>(p * 10)));
            std::vector<double> mean(ref.size(), 0.0);
            const int draws = 20000;
            for (int d = 0; d < draws; ++d) {
                const Tensor y = apply_drop_connect(xp, wp, sample_mask(wp.shape(), p, rng), p, l);
                for (std::size_t i = 0; i < y.size(); ++i) mean[i] += y[i] / draws;
            }
            for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(mean[i] - ref[i]) <= 0.01 * std::abs(ref[i]));
        }
    }
}

TEST_CASE("masked weights receive exactly zero gradient") {
    NetworkSpec net{"one", {3, 5, 5}, {conv3x3(3, 4)}};
    Model model(net, 3);
    DropConnectConfig dc;
    dc.p = 0.5;
    const Overrides ov = drop_connect_overrides(model, dc, 0, true);
    REQUIRE(ov.size() == 1);
    std::mt19937_64 gen(9);
    Tensor x({2, 3, 5, 5}, oracle::random_vector(150, gen));
    Tape tape;
    const Tensor y = model.forward(x, Mode::train, tape, &ov);
    model.zero_grad();
    model.backward(tape, Tensor(y.shape(), oracle::random_vector(y.size(), gen)));
    const auto grad = model.params(0).weight.grad();
    std::size_t masked = 0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if ((*ov[0].grad_mask)[i] == 0.0) {
            CHECK(grad[i] == 0.0);
            ++masked;
        } else {
            CHECK(grad[i] != 0.0);
        }
    }
    CHECK(masked > 0);
}

TEST_CASE("drop-connect gradient matches finite differences through the mask") {
    // f(W) = sum r * (1/(1-p)) conv(x, W * M) with M fixed by (seed, draw, layer).
    std::mt19937_64 gen(13);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + trial % 3, m = 1 + trial % 4;
        NetworkSpec net{"dc", {n, 5, 4}, {conv3x3(n, m)}};
        Model model(net, 100 + trial);
        DropConnectConfig dc;
        dc.p = 0.1 + 0.02 * trial;
        dc.mask_seed = 40 + trial;
        Tensor x({2, n, 5, 4}, oracle::random_vector(2 * n * 20, gen));
        const Overrides ov = drop_connect_overrides(model, dc, 3, true);
        Tape tape;
        const Tensor y = model.forward(x, Mode::train, tape, &ov);
        const auto r = oracle::random_vector(y.size(), gen);
        model.zero_grad();
        model.backward(tape, Tensor(y.shape(), r));
        const std::vector<double> analytic(model.params(0).weight.grad().begin(), model.params(0).weight.grad().end());
        std::vector<double> numeric;
        auto f = [&] {
            const Overrides o = drop_connect_overrides(model, dc, 3, false);
            return oracle::projected_output(model, x, Mode::train, r, &o);
        };
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            double& w = model.params(0).weight[i];
            const double old = w;
            w = old + 1e-6;
            const double up = f();
            w = old - 1e-6;
            const double down = f();
            w = old;
            numeric.push_back((up - down) / 2e-6);
        }
        CHECK(oracle::relative_error(analytic, numeric) <= 1e-4);
    }
}

TEST_CASE("default selection never masks a 1x1 convolution") {
    for (const auto& name : builtin_network_names()) {
        CAPTURE(name);
        const NetworkSpec net = builtin_network(name);
        Model model(net, 1);
        DropConnectConfig dc;
        dc.p = 0.3;
        std::vector<std::size_t> masked;
        drop_connect_overrides(model, dc, 0, false, &masked);
        CHECK_FALSE(masked.empty());
        for (std::size_t li : masked) CHECK(net.layers[li].kernel > 1);
        dc.applies_to = LayerSelection::all_conv;
        std::vector<std::size_t> all;
        drop_connect_overrides(model, dc, 0, false, &all);
        CHECK(all.size() >= masked.size());
    }
}

TEST_CASE("explicit batchnorm scaling moves the factor to the batchnorm input") {
    Model model(builtin_network("desk-resnet"), 1);
    DropConnectConfig dc;
    dc.p = 0.25;
    dc.bn_scaling = BnScaling::explicit_input;
    const Overrides ov = drop_connect_overrides(model, dc, 0, false);
    const auto& layers = model.spec().layers;
    std::size_t moved = 0;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        if (!ov[li].weight) continue;
        CHECK(ov[li].output_scale == 1.0);
        const auto next = li + 1;
        REQUIRE(layers[next].kind == LayerKind::batchnorm);
        CHECK(ov[next].input_scale == doctest::Approx(1.0 / 0.75));
        ++moved;
    }
    CHECK(moved > 0);
}

TEST_CASE("training") {
    const auto& data = small_data();
    const NetworkSpec net = builtin_network("desk-resnet");
    TrainConfig cfg;
    cfg.epochs = 1;

    SUBCASE("p = 0 reproduces plain training bit for bit") {
        DropConnectConfig zero;
        DropConnectConfig none;
        none.applies_to = LayerSelection::none;
        Model a(net, 3), b(net, 3);
        TrainLog la, lb;
        train_model(a, data.train.slice(0, 256), zero, cfg, &la);
        train_model(b, data.train.slice(0, 256), none, cfg, &lb);
        CHECK(a.state_hash() == b.state_hash());
        CHECK(la.losses == lb.losses);
    }
    SUBCASE("pointwise convolutions are never masked by default") {
        DropConnectConfig dc;
        dc.p = 0.3;
        Model model(net, 3);
        TrainLog log;
        train_model(model, data.train.slice(0, 256), dc, cfg, &log);
        for (const auto& l : net.layers) {
            if (l.is_pointwise_conv()) CHECK(log.mask_applications[l.id] == 0);
            if (l.is_conv() && l.kernel > 1) CHECK(log.mask_applications[l.id] == log.iterations);
        }
    }
    SUBCASE("seeded runs reproduce final weights exactly") {
        DropConnectConfig dc;
        dc.p = 0.2;
        const Checkpoint a = train_with_drop_connect(net, data.train.slice(0, 256), dc, cfg);
        const Checkpoint b = train_with_drop_connect(net, data.train.slice(0, 256), dc, cfg);
        CHECK(a.model.state_hash() == b.model.state_hash());
    }
    SUBCASE("divergence names the iteration") {
        TrainConfig wild = cfg;
        wild.lr = 1e305;
        wild.schedule = LrSchedule::constant;
        Model model(net, 3);
        try {
            train_model(model, data.train.slice(0, 256), DropConnectConfig{}, wild);
            FAIL("expected divergence");
        } catch (const DivergenceError& e) {
            CHECK(std::string(e.what()).find("iteration") != std::string::npos);
            CHECK(e.iteration() < 256 / wild.batch_size);
        }
    }
}

TEST_CASE("drop-connect model keeps most of the clean accuracy") {
    const double plain = evaluate_accuracy(trained(0.0).model, small_data().test);
    const double dropped = evaluate_accuracy(trained(0.3).model, small_data().test);
    MESSAGE("clean accuracy p=0: " << plain << ", p=0.3: " << dropped);
    CHECK(plain > 0.5);
    CHECK(dropped >= 0.9 * plain);
}

TEST_CASE("batchnorm recalibration") {
    const Checkpoint& source = trained(0.3);
    RecalibrationConfig rc;
    CHECK(rc.p_primes == std::vector<double>{0.0, 0.1, 0.2, 0.3});
    const auto snaps = update_var(source, small_data().train, rc);
    REQUIRE(snaps.size() == 4);
    const auto weights = source.model.weights_hash();
    for (const auto& s : snaps) {
        CAPTURE(s.p_prime);
        CHECK(s.checkpoint.model.weights_hash() == weights);
        CHECK(s.checkpoint.metadata["p_prime"].get<double>() == s.p_prime);
    }
    auto stats = [](const Model& m) {
        std::uint64_t h = 0;
        for (std::size_t li = 0; li < m.layer_count(); ++li) {
            h = hash_values(m.params(li).running_mean.data(), h);
            h = hash_values(m.params(li).running_var.data(), h);
        }
        return h;
    };
    for (std::size_t i = 1; i < snaps.size(); ++i) {
        CHECK(stats(snaps[i].checkpoint.model) != stats(source.model));
        CHECK(stats(snaps[i].checkpoint.model) != stats(snaps[0].checkpoint.model));
    }
}

TEST_CASE("recalibrating a plain model at p' = 0 barely moves its predictions") {
    const Checkpoint& source = trained(0.0);
    RecalibrationConfig rc;
    rc.p_primes = {0.0};
    const auto snaps = update_var(source, small_data().train, rc);
    const Dataset batch = small_data().test;
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const Tensor x = batch.batch(idx);
    const auto before = argmax_rows(source.model.infer(x));
    const auto after = argmax_rows(snaps[0].checkpoint.model.infer(x));
    std::size_t changed = 0;
    for (std::size_t i = 0; i < before.size(); ++i) changed += before[i] != after[i];
    MESSAGE("argmax changes: " << changed << " of " << before.size());
    CHECK(static_cast<double>(changed) < 0.01 * static_cast<double>(before.size()));
}

TEST_CASE("configuration JSON round trips") {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr = 0.123;
    cfg.schedule = LrSchedule::step;
    nlohmann::json j = cfg;
    const TrainConfig back = j.get<TrainConfig>();
    CHECK(nlohmann::json(back) == j);

    DropConnectConfig dc;
    dc.p = 0.35;
    dc.applies_to = LayerSelection::listed;
    dc.layers = {"a", "b"};
    dc.convention = MaskConvention::keep_probability;
    dc.bn_scaling = BnScaling::explicit_input;
    nlohmann::json k = dc;
    CHECK(nlohmann::json(k.get<DropConnectConfig>()) == k);
}
