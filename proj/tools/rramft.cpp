// Command-line front end: training, recalibration, faulty-device evaluation,
// network transforms, cost estimates and experiment sweeps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rramft/checkpoint.hpp"
#include "rramft/cost_model.hpp"
#include "rramft/crossbar.hpp"
#include "rramft/error.hpp"
#include "rramft/harness.hpp"
#include "rramft/topologies.hpp"
#include "rramft/train.hpp"
#include "rramft/transforms.hpp"

namespace fs = std::filesystem;
using namespace rramft;

namespace {

DatasetSpec load_dataset_spec(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open dataset spec '" + path + "'");
    return nlohmann::json::parse(is).get<DatasetSpec>();
}

std::string rate_tag(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

struct TrainArgs {
    std::string net = "builtin:desk-resnet";
    double dc_rate = 0.0;
    std::uint64_t seed = 1;
    std::string out;
    std::string config;
    std::string dataset;
    std::string applies_to = "kernel>1";
    std::string convention = "drop";
    std::string bn_scaling = "implicit";
    std::size_t epochs = 0;
};

int run_train(const TrainArgs& a) {
    TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
    cfg.seed = a.seed;
    if (a.epochs > 0) cfg.epochs = a.epochs;
    DropConnectConfig dc = nlohmann::json{{"p", a.dc_rate},
                                          {"applies_to", a.applies_to},
                                          {"convention", a.convention},
                                          {"bn_scaling", a.bn_scaling},
                                          {"mask_seed", derive_seed(a.seed, 0xdc)}}
                               .get<DropConnectConfig>();
    const DatasetSpec ds = load_dataset_spec(a.dataset);
    const DatasetSplit data = load_dataset(ds);
    TrainLog log;
    Checkpoint ckpt = train_with_drop_connect(resolve_network(a.net), data.train, dc, cfg, &log);
    ckpt.metadata["dataset"] = ds;
    save_checkpoint(ckpt, a.out);
    std::printf("trained %s: %zu iterations, final loss %.4f, test accuracy %.4f\n", ckpt.model.spec().name.c_str(),
                log.iterations, log.losses.empty() ? 0.0 : log.losses.back(),
                evaluate_accuracy(ckpt.model, data.test));
    return 0;
}

struct UpdateVarArgs {
    std::string ckpt;
    std::vector<double> p_primes = {0.0, 0.1, 0.2, 0.3};
    std::string out_dir;
    std::string dataset;
    std::size_t epochs = 1;
    std::size_t batch_size = 128;
};

int run_updatevar(const UpdateVarArgs& a) {
    const Checkpoint source = load_checkpoint(a.ckpt);
    const DatasetSpec ds = !a.dataset.empty() || !source.metadata.contains("dataset")
                               ? load_dataset_spec(a.dataset)
                               : source.metadata["dataset"].get<DatasetSpec>();
    const DatasetSplit data = load_dataset(ds);
    RecalibrationConfig rc;
    rc.p_primes = a.p_primes;
    rc.epochs = a.epochs;
    rc.batch_size = a.batch_size;
    fs::create_directories(a.out_dir);
    const std::string stem = fs::path(a.ckpt).stem().string();
    for (const auto& snap : update_var(source, data.train, rc)) {
        const fs::path out = fs::path(a.out_dir) / (stem + "_pp" + rate_tag(snap.p_prime) + ".ckpt");
        save_checkpoint(snap.checkpoint, out.string());
        std::printf("p'=%g -> %s (clean accuracy %.4f)\n", snap.p_prime, out.string().c_str(),
                    evaluate_accuracy(snap.checkpoint.model, data.test));
    }
    return 0;
}

struct EvalArgs {
    std::string ckpt;
    double fault_rate = 0.0;
    std::size_t crossbars = 100;
    std::uint64_t seed = 1;
    bool no_scale_correction = false;
    double p_prime = -1.0;
    std::string plan = "default";
    std::string dataset;
    std::string fault_mode = "iid";
    std::size_t rows = 128;
    std::size_t cols = 128;
    std::size_t device_tiles = 0;
    std::string save_fault_map;
};

int run_eval(const EvalArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.ckpt);
    const DatasetSpec ds = !a.dataset.empty() || !ckpt.metadata.contains("dataset")
                               ? load_dataset_spec(a.dataset)
                               : ckpt.metadata["dataset"].get<DatasetSpec>();
    const DatasetSplit data = load_dataset(ds);
    const PlacementPlan plan = resolve_placement(ckpt.model.spec(), a.plan);
    MonteCarloOptions mc;
    mc.geometry = {a.rows, a.cols};
    mc.mode = parse_fault_mode(a.fault_mode);
    mc.device_tiles = a.device_tiles;
    mc.inference.scale_correction = !a.no_scale_correction;
    mc.inference.p_prime = a.p_prime >= 0.0 ? a.p_prime : ckpt.metadata.value("p_prime", 0.0);
    if (!a.save_fault_map.empty()) {
        const CrossbarArray arrays = map_network(ckpt.model, plan, mc.quant, mc.geometry);
        save_fault_map(inject_sa1(arrays, a.fault_rate, a.seed, mc.mode, mc.device_tiles), a.save_fault_map);
    }
    const MonteCarloResult r =
        monte_carlo_eval(ckpt.model, plan, data.test, a.fault_rate, a.crossbars, a.seed, mc);
    std::printf("crossbars %zu  samples %zu  fault rate %g  p' %g\n", r.crossbars, r.samples, a.fault_rate,
                mc.inference.scale_correction ? mc.inference.p_prime : 0.0);
    std::printf("mean %.4f  stddev %.4f  min %.4f  max %.4f\n", r.mean, r.stddev, r.min, r.max);
    return 0;
}

struct TransformArgs {
    std::string net;
    double widen = 0.0;
    bool expand = false;
    std::string out;
};

int run_transform(const TransformArgs& a) {
    NetworkSpec net = resolve_network(a.net);
    if (a.expand) {
        ShortcutExpansion x = expand_shortcut(net);
        if (x.expanded.empty()) std::fprintf(stderr, "warning: %s has no 1x1 shortcut convolutions\n", net.name.c_str());
        net = std::move(x.spec);
    }
    net = widen(net, WidenConfig{a.widen});
    save_network(net, a.out);
    std::printf("%s: %zu layers written to %s\n", net.name.c_str(), net.layers.size(), a.out.c_str());
    return 0;
}

struct CostArgs {
    std::string net;
    std::string plan = "default";
    std::string calibrate;
    double width = 1.0;
    std::string csv;
};

int run_cost(const CostArgs& a) {
    const CostModelParams params = calibrate(load_cost_anchor(a.calibrate));
    const NetworkSpec net = widen(resolve_network(a.net), WidenConfig{a.width - 1.0});
    const OpCount ops = count_ops(net, resolve_placement(net, a.plan));
    const std::string table = cost_table_csv(ops, params);
    if (a.csv.empty()) {
        std::cout << table;
    } else {
        std::ofstream(a.csv) << table;
    }
    const CostEstimate e = estimate(ops, params);
    std::fprintf(a.csv.empty() ? stderr : stdout, "%s: %llu RRAM MACs, latency %.4f s, energy %.4f\n",
                 net.name.c_str(), static_cast<unsigned long long>(ops.rram_total), e.latency, e.energy);
    return 0;
}

struct SweepArgs {
    std::string spec;
    std::string out_dir;
    std::size_t workers = 1;
    bool resume = false;
    double criticality_dc = -1.0;
};

int run_sweep_cmd(const SweepArgs& a) {
    const SweepSpec spec = load_sweep_spec(a.spec);
    SweepOptions opt{a.out_dir, a.workers, a.resume, &std::cerr};
    if (a.criticality_dc >= 0.0) {
        const auto pairs = criticality_experiment(spec, a.criticality_dc, opt);
        std::vector<SweepRecord> records;
        std::printf("fault_rate,default_mean,all_rram_mean,margin\n");
        for (const auto& p : pairs) {
            std::printf("%g,%.4f,%.4f,%.4f\n", p.fault_rate, p.pointwise_on_host.mean, p.all_rram.mean, p.margin());
            records.push_back(p.pointwise_on_host);
            records.push_back(p.all_rram);
        }
        report(records, a.out_dir);
        return 0;
    }
    const auto records = run_sweep(spec, opt);
    for (const auto& path : report(records, a.out_dir)) std::printf("wrote %s\n", path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Drop-connect training and stuck-at-one crossbar simulation"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a network with drop-connect");
    train->add_option("--net", ta.net, "builtin:<name> or network spec file")->capture_default_str();
    train->add_option("--dc-rate", ta.dc_rate, "Drop-connect rate p")->check(CLI::Range(0.0, 0.99));
    train->add_option("--seed", ta.seed, "Initialisation and shuffling seed")->capture_default_str();
    train->add_option("--out", ta.out, "Checkpoint to write")->required();
    train->add_option("--config", ta.config, "Training config (JSON)");
    train->add_option("--dataset", ta.dataset, "Dataset spec (JSON)");
    train->add_option("--epochs", ta.epochs, "Override the configured epoch count");
    train->add_option("--applies-to", ta.applies_to, "kernel>1, all-conv or none")->capture_default_str();
    train->add_option("--convention", ta.convention, "drop or keep")->capture_default_str();
    train->add_option("--bn-scaling", ta.bn_scaling, "implicit or explicit-input")->capture_default_str();

    UpdateVarArgs ua;
    auto* upd = app.add_subcommand("updatevar", "Recalibrate batchnorm statistics with frozen weights");
    upd->add_option("--ckpt", ua.ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    upd->add_option("--p-prime", ua.p_primes, "Target fault rates")->delimiter(',')->capture_default_str();
    upd->add_option("--out-dir", ua.out_dir, "Directory for the snapshots")->required();
    upd->add_option("--dataset", ua.dataset, "Dataset spec (JSON); defaults to the training one");
    upd->add_option("--epochs", ua.epochs, "Passes per snapshot")->capture_default_str();
    upd->add_option("--batch-size", ua.batch_size, "Images per recalibration batch")->capture_default_str();

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Monte-Carlo accuracy on faulty crossbars");
    eval->add_option("--ckpt", ea.ckpt, "Checkpoint (usually an updatevar snapshot)")->required()->check(CLI::ExistingFile);
    eval->add_option("--fault-rate", ea.fault_rate, "SA1 cell fault rate")->check(CLI::Range(0.0, 1.0));
    eval->add_option("--crossbars", ea.crossbars, "Number of faulty devices")->capture_default_str();
    eval->add_option("--seed", ea.seed, "Seed of the first device")->capture_default_str();
    eval->add_flag("--no-scale-correction", ea.no_scale_correction, "Skip the 1/(1-p') rescale");
    eval->add_option("--p-prime", ea.p_prime, "Override the snapshot's p'");
    eval->add_option("--plan", ea.plan, "default, all-rram or a plan file")->capture_default_str();
    eval->add_option("--dataset", ea.dataset, "Dataset spec (JSON); defaults to the training one");
    eval->add_option("--fault-mode", ea.fault_mode, "iid or exact-count")->capture_default_str();
    eval->add_option("--rows", ea.rows, "Tile rows")->capture_default_str();
    eval->add_option("--cols", ea.cols, "Tile columns")->capture_default_str();
    eval->add_option("--device-tiles", ea.device_tiles, "Physical tiles to draw faults over");
    eval->add_option("--save-fault-map", ea.save_fault_map, "Write the first device's fault map here");

    TransformArgs xa;
    auto* xform = app.add_subcommand("transform", "Widen a network and/or expand its shortcuts");
    xform->add_option("--net", xa.net, "builtin:<name> or network spec file")->required();
    xform->add_option("--widen", xa.widen, "Channel increase p (width 1+p)")->capture_default_str();
    xform->add_flag("--expand-shortcut", xa.expand, "Turn 1x1 shortcut convs into 3x3");
    xform->add_option("--out", xa.out, "Network spec to write")->required();

    CostArgs ca;
    auto* cost = app.add_subcommand("cost", "Latency and energy estimate per layer");
    cost->add_option("--net", ca.net, "builtin:<name> or network spec file")->required();
    cost->add_option("--plan", ca.plan, "default, all-rram or a plan file")->capture_default_str();
    cost->add_option("--calibrate", ca.calibrate, "Anchor file (JSON)")->required()->check(CLI::ExistingFile);
    cost->add_option("--width", ca.width, "Width multiplier applied to --net")->capture_default_str();
    cost->add_option("--csv", ca.csv, "Write the table here instead of stdout");

    SweepArgs sa;
    auto* sweep = app.add_subcommand("sweep", "Run an experiment grid");
    sweep->add_option("--spec", sa.spec, "Sweep spec (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out-dir", sa.out_dir, "Output directory")->required();
    sweep->add_option("--workers", sa.workers, "Cells run in parallel")->capture_default_str();
    sweep->add_flag("--resume", sa.resume, "Skip cells with matching provenance");
    sweep->add_option("--criticality", sa.criticality_dc,
                      "Run the host-vs-RRAM 1x1 comparison at this drop-connect rate instead");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) return run_train(ta);
        if (*upd) return run_updatevar(ua);
        if (*eval) return run_eval(ea);
        if (*xform) return run_transform(xa);
        if (*cost) return run_cost(ca);
        if (*sweep) return run_sweep_cmd(sa);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
