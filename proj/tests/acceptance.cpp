// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
//   acceptance [--spec configs/desk_sweep.json] [--out-dir build/acceptance_out] [--workers N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rramft/checkpoint.hpp"
#include "rramft/cost_model.hpp"
#include "rramft/crossbar.hpp"
#include "rramft/dropconnect.hpp"
#include "rramft/harness.hpp"
#include "rramft/topologies.hpp"
#include "rramft/train.hpp"
#include "rramft/transforms.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

using namespace rramft;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string title;
    Outcome outcome;
    double seconds = 0.0;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string pct(double v) { return fmt("%.1f%%", 100.0 * v); }

const SweepRecord& find(const std::vector<SweepRecord>& rs, double dc, double f, double width = 1.0) {
    for (const auto& r : rs) {
        if (r.dc_rate == dc && r.fault_rate == f && r.width == width) return r;
    }
    throw std::runtime_error("no record for dc " + std::to_string(dc) + " f " + std::to_string(f));
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Trained (pre-recalibration) checkpoint behind a snapshot path "models/<key>_pp<f>.ckpt".
fs::path trained_checkpoint(const fs::path& out, const SweepRecord& r) {
    const std::string snap = r.checkpoint;
    return out / (snap.substr(0, snap.rfind("_pp")) + ".ckpt");
}

Outcome gradients() {
    const auto instances = oracle::gradient_instances(20, 2024);
    double worst = 0.0;
    std::map<std::string, std::size_t> per_kind;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto res = oracle::gradient_check(instances[i].net, instances[i].mode, 5000 + i);
        worst = std::max(worst, res.worst());
        ++per_kind[instances[i].kind];
    }
    std::size_t fewest = instances.size();
    for (const auto& [kind, n] : per_kind) fewest = std::min(fewest, n);
    return {worst <= 1e-4 && fewest >= 20,
            std::to_string(per_kind.size()) + " layer kinds x " + std::to_string(fewest) +
                " instances, worst rel. err " + fmt("%.2e", worst)};
}

Outcome expectation() {
    // Positive operands keep every output far from zero, so the relative
    // bound is meaningful on all cells.
    ConvGeometry g{1, 4, 3, 8, 8, 3, 1, 0, 1};
    std::mt19937_64 gen(77);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<double> x(g.input_numel()), w(g.weight_numel());
    for (double& v : x) v = u(gen);
    for (double& v : w) v = u(gen);
    const std::vector<double> ref = oracle::conv2d(g, x, w);

    LayerSpec l;
    l.id = "probe";
    l.kind = LayerKind::conv2d;
    l.in_channels = g.in_channels;
    l.out_channels = g.out_channels;
    l.kernel = g.kernel;
    const Tensor xt({1, g.in_channels, g.height, g.width}, x);
    const Tensor wt({g.out_channels, g.in_channels, g.kernel, g.kernel}, w);

    double worst = 0.0;
    std::size_t cells = 0;
    for (double p : {0.1, 0.3, 0.5}) {
        DropConnectConfig dc;
        dc.p = p;
        dc.mask_seed = 31;
        std::vector<double> mean(ref.size(), 0.0);
        const int draws = 20000;
        for (int d = 0; d < draws; ++d) {
            const Tensor y = apply_drop_connect(xt, wt, layer_mask(wt.shape(), dc, d, l.id), p, l);
            for (std::size_t i = 0; i < y.size(); ++i) mean[i] += y[i];
        }
        for (std::size_t i = 0; i < ref.size(); ++i) {
            if (std::abs(ref[i]) <= 0.1) continue;
            worst = std::max(worst, std::abs(mean[i] / draws - ref[i]) / std::abs(ref[i]));
            ++cells;
        }
    }
    return {worst <= 0.01 && cells > 0,
            "p in {0.1, 0.3, 0.5}, 20000 masks, " + std::to_string(cells) + " cells, worst rel. err " +
                fmt("%.4f", worst)};
}

std::uint64_t statistics_hash(const Model& m) {
    std::uint64_t h = 0;
    for (std::size_t li = 0; li < m.layer_count(); ++li) {
        h = hash_values(m.params(li).running_mean.data(), h);
        h = hash_values(m.params(li).running_var.data(), h);
    }
    return h;
}

Outcome freeze(const Checkpoint& ck, const Dataset& train) {
    RecalibrationConfig rc;
    const auto snaps = update_var(ck, train, rc);
    bool frozen = true, moved = true;
    for (const auto& s : snaps) {
        frozen = frozen && s.checkpoint.model.weights_hash() == ck.model.weights_hash();
        if (s.p_prime > 0.0) moved = moved && statistics_hash(s.checkpoint.model) != statistics_hash(ck.model);
    }
    return {frozen && moved && snaps.size() == 4,
            std::string("weights ") + (frozen ? "identical" : "changed") + " for p' in {0, 0.1, 0.2, 0.3}; BN stats " +
                (moved ? "differ" : "unchanged") + " for p' > 0"};
}

Outcome fault_statistics(const fs::path& out) {
    const CrossbarArray device(CrossbarGeometry{}, 8);
    std::string detail;
    bool ok = true;
    for (double f : {0.1, 0.2, 0.3}) {
        std::size_t inside = 0;
        for (std::uint64_t s = 0; s < 100; ++s) {
            const FaultMap map = inject_sa1(device, f, 70000 + s);
            const double n = static_cast<double>(map.cell_count());
            inside += std::abs(static_cast<double>(map.fault_count()) - f * n) <= 3.0 * std::sqrt(n * f * (1 - f));
        }
        ok = ok && inside >= 99;
        detail += "f=" + fmt("%.1f", f) + ": " + std::to_string(inside) + "/100; ";
    }
    const fs::path a = out / "fault_map_a.txt", b = out / "fault_map_b.txt";
    save_fault_map(inject_sa1(device, 0.2, 4242), a.string());
    save_fault_map(inject_sa1(device, 0.2, 4242), b.string());
    const bool same = slurp(a) == slurp(b) && !slurp(a).empty();
    detail += std::string("files ") + (same ? "bit-identical" : "differ");
    return {ok && same, detail};
}

Outcome no_fault_equivalence(const Checkpoint& ck) {
    DatasetSpec ds;
    ds.train_size = 1;
    ds.test_size = 1000;
    ds.seed = 99;
    const Dataset test = load_dataset(ds).test;
    const PlacementPlan plan = plan_placement(ck.model.spec(), PlacementPolicy::fault_free_pointwise);
    const CrossbarArray arrays = map_network(ck.model, plan);
    const FaultMap none = inject_sa1(arrays, 0.0, 1);
    const Model q = quantized_model(ck.model, plan);
    std::vector<std::size_t> idx(test.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const Tensor x = test.batch(idx);
    const auto a = faulty_inference(ck.model, arrays, none, x);
    const auto b = argmax_rows(q.infer(x));
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i];
    return {agree == a.size() && a.size() == 1000,
            std::to_string(agree) + "/" + std::to_string(a.size()) + " argmax agreement"};
}

Outcome cost_rows() {
    struct Row {
        double width, latency, energy;
    };
    const std::map<std::string, std::vector<Row>> rows = {
        {"resnet20", {{1.0, 15.74, 113.32}, {1.2, 22.13, 159.28}, {1.4, 29.80, 214.53}, {1.6, 39.11, 281.56}}},
        {"vgg13", {{1.0, 87.83, 632.16}, {1.2, 125.25, 901.56}, {1.4, 170.59, 1227.84}, {1.6, 222.53, 1601.71}}}};
    double worst = 0.0;
    for (const auto& [name, table] : rows) {
        CostAnchor anchor;
        anchor.net = "builtin:" + name;
        anchor.latency = table.front().latency;
        anchor.energy = table.front().energy;
        const CostModelParams params = calibrate(anchor);
        for (const Row& r : table) {
            const NetworkSpec net = widen(builtin_network(name), {r.width - 1.0});
            const CostEstimate e = estimate(net, plan_placement(net, PlacementPolicy::fault_free_pointwise), params);
            worst = std::max({worst, std::abs(e.latency - r.latency) / r.latency,
                              std::abs(e.energy - r.energy) / r.energy});
        }
    }
    return {worst <= 0.10, "ResNet20 and VGG13 rows, worst rel. err " + pct(worst)};
}

Outcome transform_identities() {
    const NetworkSpec net = builtin_network("desk-resnet");
    Model model(net, 3);
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (std::size_t li = 0; li < model.layer_count(); ++li) {
        LayerParams& p = model.params(li);
        for (double& v : p.gamma.data()) v = u(gen);
        for (double& v : p.running_var.data()) v = u(gen);
        for (double& v : p.running_mean.data()) v = u(gen) - 1.0;
    }
    const Model same(widen(net, {0.0}), std::vector<LayerParams>([&] {
                         std::vector<LayerParams> ps;
                         for (std::size_t li = 0; li < model.layer_count(); ++li) ps.push_back(model.params(li));
                         return ps;
                     }()));
    const Model tap = expand_shortcut_center_tap(model);
    const Tensor x({100, net.input.channels, net.input.height, net.input.width},
                   oracle::random_vector(100 * net.input.numel(), gen));
    const Tensor y = model.infer(x), a = same.infer(x), b = tap.infer(x);
    double worst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max({worst, std::abs(a[i] - y[i]), std::abs(b[i] - y[i])});
    const NetworkSpec wide = widen(builtin_network("resnet20"), {0.2});
    const std::size_t c = wide.layers[wide.index_of("conv1")].out_channels;
    return {worst <= 1e-12 && c == 19,
            "100 inputs, max abs diff " + fmt("%.1e", worst) + "; 16 channels at p=0.2 -> " + std::to_string(c)};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance run"};
    std::string spec_path = RRAMFT_SOURCE_DIR "/configs/desk_sweep.json";
    std::string out_dir = RRAMFT_BINARY_DIR "/acceptance_out";
    std::size_t workers = 1;
    double criticality_dc = 0.3;
    app.add_option("--spec", spec_path, "Desk sweep spec")->check(CLI::ExistingFile);
    app.add_option("--out-dir", out_dir, "Output directory (reused across runs)");
    app.add_option("--workers", workers, "Cells run in parallel");
    app.add_option("--criticality-dc", criticality_dc, "Drop-connect rate of the criticality arms");
    std::vector<int> known_gaps;
    app.add_option("--known-gap", known_gaps, "Criteria reported but left out of the exit status");
    CLI11_PARSE(app, argc, argv);

    std::vector<Criterion> cs = {{1, "gradient correctness", {}},
                                 {2, "drop-connect expectation", {}},
                                 {3, "recalibration weight freeze", {}},
                                 {4, "fault statistics", {}},
                                 {5, "no-fault equivalence", {}},
                                 {6, "drop-connect benefit at f=0.2", {}},
                                 {7, "1x1 criticality at f=0.2", {}},
                                 {8, "widening benefit at f=0.2", {}},
                                 {9, "cost model rows", {}},
                                 {10, "transform identities", {}}};
    auto run = [&](int id, const std::function<Outcome()>& fn) {
        Criterion& c = cs[id - 1];
        std::cerr << "running " << id << ": " << c.title << std::endl;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.outcome = fn();
        } catch (const std::exception& e) {
            c.outcome = {false, std::string("error: ") + e.what()};
        }
        c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    auto limit = [&](int id, double seconds) {
        Criterion& c = cs[id - 1];
        if (c.seconds >= seconds) {
            c.outcome.pass = false;
            c.outcome.detail += "; exceeded " + fmt("%.0f s", seconds);
        }
    };

    const fs::path out(out_dir);
    fs::create_directories(out);
    const SweepSpec spec = load_sweep_spec(spec_path);
    SweepOptions opt;
    opt.out_dir = out_dir;
    opt.workers = workers;
    opt.resume = true;
    opt.log = &std::cerr;

    run(1, gradients);
    limit(1, 60);
    run(2, expectation);
    limit(2, 300);
    run(4, [&] { return fault_statistics(out); });
    run(9, cost_rows);
    limit(9, 1);
    run(10, transform_identities);

    std::vector<SweepRecord> sweep;
    double best_dc = 0.0;
    run(6, [&] {
        sweep = run_sweep(spec, opt);
        report(sweep, out_dir);
        const double f = 0.2;
        const SweepRecord& plain = find(sweep, 0.0, f);
        const SweepRecord* best = &plain;
        for (const auto& r : sweep) {
            if (r.fault_rate == f && r.width == 1.0 && r.mean > best->mean) best = &r;
        }
        best_dc = best->dc_rate;
        const double gain = best->mean - plain.mean;
        return Outcome{gain >= 0.05 && best_dc >= f,
                       "plain " + pct(plain.mean) + ", best dc " + fmt("%g", best_dc) + " " + pct(best->mean) +
                           " (+" + fmt("%.1f", 100 * gain) + " points), " + std::to_string(plain.crossbars) +
                           " crossbars"};
    });
    limit(6, 3600);

    run(3, [&] {
        const SweepRecord& r = find(sweep, 0.3, 0.0);
        const SweepSpec& s = spec;
        return freeze(load_checkpoint(trained_checkpoint(out, r).string()), load_dataset(s.dataset).train);
    });
    run(5, [&] { return no_fault_equivalence(load_checkpoint((out / find(sweep, 0.0, 0.0).checkpoint).string())); });

    run(7, [&] {
        const auto pairs = criticality_experiment(spec, criticality_dc, opt);
        for (const auto& p : pairs) {
            if (p.fault_rate != 0.2) continue;
            const bool paired = p.pointwise_on_host.fault_seed == p.all_rram.fault_seed &&
                                p.pointwise_on_host.device_tiles == p.all_rram.device_tiles;
            return Outcome{p.margin() >= 0.10 && paired,
                           "dc " + fmt("%g", criticality_dc) + ": 1x1 on host " + pct(p.pointwise_on_host.mean) +
                               ", all on crossbars " + pct(p.all_rram.mean) + " (" +
                               fmt("%.1f", 100 * p.margin()) + " points), seeds " +
                               (paired ? "paired" : "NOT paired")};
        }
        return Outcome{false, "fault rate 0.2 missing from the grid"};
    });

    run(8, [&] {
        SweepSpec wide = spec;
        wide.widths = {1.2};
        wide.dc_rates = {best_dc};
        const auto rs = run_sweep(wide, opt);
        const SweepRecord& a = find(sweep, best_dc, 0.2);
        const SweepRecord& b = find(rs, best_dc, 0.2, 1.2);
        return Outcome{b.mean >= a.mean - 0.01 && b.latency > a.latency,
                       "dc " + fmt("%g", best_dc) + ": 1x " + pct(a.mean) + ", 1.2x " + pct(b.mean) + "; cost " +
                           fmt("%.3f", a.latency) + " -> " + fmt("%.3f", b.latency)};
    });

    bool all = true;
    for (const auto& c : cs) {
        const bool gap = std::find(known_gaps.begin(), known_gaps.end(), c.id) != known_gaps.end();
        all = all && (c.outcome.pass || gap);
        std::printf("%s  %2d  %-30s %s (%.1f s)%s\n", c.outcome.pass ? "PASS" : "FAIL", c.id, c.title.c_str(),
                    c.outcome.detail.c_str(), c.seconds, gap && !c.outcome.pass ? " [known gap]" : "");
    }
    std::fflush(stdout);
    return all ? 0 : 1;
}
