#include "rramft/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rramft/error.hpp"
#include "rramft/topologies.hpp"

namespace fs = std::filesystem;

namespace rramft {

namespace {

std::string fmt_rate(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void check_rates(const std::vector<double>& rates, const char* what, double hi) {
    if (rates.empty()) throw ConfigError(std::string("sweep needs at least one ") + what);
    for (double r : rates) {
        if (!(r >= 0.0 && r < hi)) throw ConfigError(std::string(what) + " " + fmt_rate(r) + " is out of range");
    }
}

} // namespace

void SweepSpec::validate() const {
    check_rates(fault_rates, "fault rate", 1.0);
    check_rates(dc_rates, "drop-connect rate", 1.0);
    if (widths.empty()) throw ConfigError("sweep needs at least one width");
    for (double w : widths) {
        if (!(w >= 1.0)) throw ConfigError("width multipliers must be >= 1");
    }
    if (placements.empty()) throw ConfigError("sweep needs at least one placement");
    if (crossbars == 0) throw ConfigError("sweep needs at least one crossbar per cell");
    if (recalibration_epochs == 0) throw ConfigError("recalibration needs at least one epoch");
    geometry.validate();
    train.validate();
}

void to_json(nlohmann::json& j, const SweepSpec& s) {
    j = nlohmann::json{{"name", s.name},
                       {"net", s.net},
                       {"expand_shortcut", s.expand_shortcut},
                       {"dataset", s.dataset},
                       {"train", s.train},
                       {"fault_rates", s.fault_rates},
                       {"dc_rates", s.dc_rates},
                       {"widths", s.widths},
                       {"placements", s.placements},
                       {"crossbars", s.crossbars},
                       {"fault_seed", s.fault_seed},
                       {"paired_fault_seeds", s.paired_fault_seeds},
                       {"device_tiles", s.device_tiles},
                       {"geometry", {{"rows", s.geometry.rows}, {"cols", s.geometry.cols}}},
                       {"fault_mode", std::string(to_string(s.fault_mode))},
                       {"scale_correction", s.scale_correction},
                       {"recalibration_epochs", s.recalibration_epochs},
                       {"recalibration_mask_seed", s.recalibration_mask_seed},
                       {"train_on_demand", s.train_on_demand}};
    if (s.cost_anchor) j["cost_anchor"] = *s.cost_anchor;
}

void from_json(const nlohmann::json& j, SweepSpec& s) {
    s = SweepSpec{};
    s.name = j.value("name", s.name);
    s.net = j.value("net", s.net);
    s.expand_shortcut = j.value("expand_shortcut", s.expand_shortcut);
    if (j.contains("dataset")) s.dataset = j.at("dataset").get<DatasetSpec>();
    if (j.contains("train")) s.train = j.at("train").get<TrainConfig>();
    s.fault_rates = j.value("fault_rates", s.fault_rates);
    s.dc_rates = j.value("dc_rates", s.dc_rates);
    s.widths = j.value("widths", s.widths);
    s.placements = j.value("placements", s.placements);
    s.crossbars = j.value("crossbars", s.crossbars);
    s.fault_seed = j.value("fault_seed", s.fault_seed);
    s.paired_fault_seeds = j.value("paired_fault_seeds", s.paired_fault_seeds);
    s.device_tiles = j.value("device_tiles", s.device_tiles);
    if (j.contains("geometry")) {
        s.geometry.rows = j.at("geometry").value("rows", s.geometry.rows);
        s.geometry.cols = j.at("geometry").value("cols", s.geometry.cols);
    }
    s.fault_mode = parse_fault_mode(j.value("fault_mode", std::string("iid")));
    s.scale_correction = j.value("scale_correction", s.scale_correction);
    s.recalibration_epochs = j.value("recalibration_epochs", s.recalibration_epochs);
    s.recalibration_mask_seed = j.value("recalibration_mask_seed", s.recalibration_mask_seed);
    s.train_on_demand = j.value("train_on_demand", s.train_on_demand);
    if (j.contains("cost_anchor")) s.cost_anchor = j.at("cost_anchor").get<CostAnchor>();
}

SweepSpec load_sweep_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open sweep spec '" + path + "'");
    try {
        SweepSpec s = nlohmann::json::parse(is).get<SweepSpec>();
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("sweep spec '" + path + "': " + e.what());
    }
}

void to_json(nlohmann::json& j, const SweepRecord& r) {
    j = nlohmann::json{{"net", r.net},
                       {"placement", r.placement},
                       {"width", r.width},
                       {"dc_rate", r.dc_rate},
                       {"fault_rate", r.fault_rate},
                       {"crossbars", r.crossbars},
                       {"samples", r.samples},
                       {"mean", r.mean},
                       {"stddev", r.stddev},
                       {"min", r.min},
                       {"max", r.max},
                       {"latency", r.latency},
                       {"energy", r.energy},
                       {"parameters", r.parameters},
                       {"p_prime", r.p_prime},
                       {"fault_seed", r.fault_seed},
                       {"device_tiles", r.device_tiles},
                       {"checkpoint", r.checkpoint},
                       {"state_hash", r.state_hash}};
}

void from_json(const nlohmann::json& j, SweepRecord& r) {
    r.net = j.at("net").get<std::string>();
    r.placement = j.at("placement").get<std::string>();
    r.width = j.at("width").get<double>();
    r.dc_rate = j.at("dc_rate").get<double>();
    r.fault_rate = j.at("fault_rate").get<double>();
    r.crossbars = j.at("crossbars").get<std::size_t>();
    r.samples = j.at("samples").get<std::size_t>();
    r.mean = j.at("mean").get<double>();
    r.stddev = j.at("stddev").get<double>();
    r.min = j.at("min").get<double>();
    r.max = j.at("max").get<double>();
    r.latency = j.at("latency").get<double>();
    r.energy = j.at("energy").get<double>();
    r.parameters = j.at("parameters").get<std::size_t>();
    r.p_prime = j.at("p_prime").get<double>();
    r.fault_seed = j.at("fault_seed").get<std::uint64_t>();
    r.device_tiles = j.at("device_tiles").get<std::size_t>();
    r.checkpoint = j.at("checkpoint").get<std::string>();
    r.state_hash = j.at("state_hash").get<std::string>();
}

namespace {

struct ModelJob {
    std::string key;
    std::string placement;
    double width = 1.0;
    double dc_rate = 0.0;
    NetworkSpec net;
    PlacementPlan plan;
    DropConnectConfig dc;
    nlohmann::json config;           // everything that determines the trained weights
    std::vector<double> p_primes;    // snapshots still needed
    std::vector<Snapshot> snapshots;
};

struct CellJob {
    std::size_t model = 0;
    double fault_rate = 0.0;
    std::uint64_t fault_seed = 0;
    std::string key;
    nlohmann::json config;
    bool done = false;
    SweepRecord record;
};

DropConnectConfig training_selection(const std::string& placement, const NetworkSpec& net, const PlacementPlan& plan) {
    DropConnectConfig dc;
    if (placement == "default" || placement == "fault-free-pointwise") {
        dc.applies_to = LayerSelection::kernel_above_1x1;
    } else if (placement == "all-rram") {
        dc.applies_to = LayerSelection::all_conv;
    } else {
        dc.applies_to = LayerSelection::listed;
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            if (plan.on_rram(li)) dc.layers.push_back(net.layers[li].id);
        }
    }
    return dc;
}

std::string placement_tag(const std::string& placement) {
    if (placement == "default" || placement == "all-rram" || placement == "fault-free-pointwise") return placement;
    return "custom-" + fs::path(placement).stem().string();
}

std::optional<Checkpoint> load_matching(const fs::path& path, const nlohmann::json& config) {
    if (!fs::exists(path)) return std::nullopt;
    Checkpoint ckpt = load_checkpoint(path.string());
    if (!ckpt.metadata.contains("sweep") || ckpt.metadata["sweep"] != config) return std::nullopt;
    return ckpt;
}

void write_json_atomic(const fs::path& path, const nlohmann::json& j) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw FormatError("cannot write '" + tmp.string() + "'");
        os << j.dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    std::exception_ptr failure;
    const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(std::max<std::size_t>(workers, 1)))
    for (long i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(rramft_sweep_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

void log_line(std::ostream* log, const std::string& line) {
    if (!log) return;
#pragma omp critical(rramft_sweep_log)
    *log << line << std::endl;
}

} // namespace

std::vector<SweepRecord> run_sweep(const SweepSpec& spec, const SweepOptions& opt) {
    spec.validate();
    if (opt.out_dir.empty()) throw ConfigError("sweep needs an output directory");
    const fs::path out(opt.out_dir);
    fs::create_directories(out / "models");
    fs::create_directories(out / "cells");

    NetworkSpec base = resolve_network(spec.net);
    if (spec.expand_shortcut) base = expand_shortcut(base).spec;
    const std::string net_name = base.name;

    CostModelParams cost;
    if (spec.cost_anchor) {
        cost = calibrate(*spec.cost_anchor);
    } else {
        cost = calibrate(CostModelParams{}, base, plan_placement(base, PlacementPolicy::fault_free_pointwise), 1.0,
                         1.0);
    }

    const nlohmann::json dataset_json = spec.dataset;
    const nlohmann::json train_json = spec.train;

    std::vector<ModelJob> models;
    std::vector<CellJob> cells;
    for (const auto& placement : spec.placements) {
        for (double width : spec.widths) {
            const NetworkSpec net = widen(base, WidenConfig{width - 1.0});
            const PlacementPlan plan = resolve_placement(net, placement);
            const CostEstimate est = estimate(net, plan, cost);
            for (double dc_rate : spec.dc_rates) {
                ModelJob m;
                m.placement = placement;
                m.width = width;
                m.dc_rate = dc_rate;
                m.net = net;
                m.plan = plan;
                m.dc = training_selection(placement, net, plan);
                m.dc.p = dc_rate;
                m.dc.mask_seed = derive_seed(spec.train.seed, 0xdc);
                m.key = net_name + "_" + placement_tag(placement) + "_w" + fmt_rate(width) + "_dc" + fmt_rate(dc_rate);
                m.config = {{"net", net}, {"dataset", dataset_json}, {"train", train_json}, {"drop_connect", m.dc}};
                const std::size_t model_index = models.size();
                for (std::size_t fi = 0; fi < spec.fault_rates.size(); ++fi) {
                    CellJob c;
                    c.model = model_index;
                    c.fault_rate = spec.fault_rates[fi];
                    const std::size_t slot = spec.paired_fault_seeds ? fi : cells.size();
                    c.fault_seed = spec.fault_seed + static_cast<std::uint64_t>(slot * spec.crossbars);
                    const std::size_t device_tiles = spec.device_tiles;
                    c.key = m.key + "_f" + fmt_rate(c.fault_rate) + "_s" + std::to_string(c.fault_seed);
                    if (device_tiles) c.key += "_d" + std::to_string(device_tiles);
                    c.config = {{"model", m.config},
                                {"placement", placement},
                                {"plan", [&] {
                                     std::vector<std::string> v;
                                     for (auto p : plan.layers) v.push_back(p == Placement::rram ? "rram" : "host");
                                     return v;
                                 }()},
                                {"fault_rate", c.fault_rate},
                                {"crossbars", spec.crossbars},
                                {"fault_seed", c.fault_seed},
                                {"device_tiles", device_tiles},
                                {"geometry", {spec.geometry.rows, spec.geometry.cols}},
                                {"fault_mode", std::string(to_string(spec.fault_mode))},
                                {"scale_correction", spec.scale_correction},
                                {"recalibration", {{"epochs", spec.recalibration_epochs},
                                                   {"mask_seed", spec.recalibration_mask_seed}}}};
                    c.record.net = net_name;
                    c.record.placement = placement_tag(placement);
                    c.record.width = width;
                    c.record.dc_rate = dc_rate;
                    c.record.fault_rate = c.fault_rate;
                    c.record.crossbars = spec.crossbars;
                    c.record.latency = est.latency;
                    c.record.energy = est.energy;
                    c.record.p_prime = c.fault_rate;
                    c.record.fault_seed = c.fault_seed;
                    c.record.checkpoint = "models/" + m.key + "_pp" + fmt_rate(c.fault_rate) + ".ckpt";
                    cells.push_back(std::move(c));
                }
                models.push_back(std::move(m));
            }
        }
    }

    if (opt.resume) {
        for (auto& c : cells) {
            const fs::path path = out / "cells" / (c.key + ".json");
            if (!fs::exists(path)) continue;
            std::ifstream is(path);
            const nlohmann::json prov = nlohmann::json::parse(is, nullptr, false);
            if (prov.is_discarded() || !prov.contains("config") || prov["config"] != c.config) continue;
            c.record = prov.at("record").get<SweepRecord>();
            c.done = true;
        }
    }
    std::vector<std::size_t> pending_models;
    for (const auto& c : cells) {
        if (c.done) continue;
        auto& pp = models[c.model].p_primes;
        if (std::find(pp.begin(), pp.end(), c.fault_rate) == pp.end()) pp.push_back(c.fault_rate);
    }
    for (std::size_t i = 0; i < models.size(); ++i) {
        if (!models[i].p_primes.empty()) pending_models.push_back(i);
    }

    const bool need_data = !pending_models.empty();
    const DatasetSplit data = need_data ? load_dataset(spec.dataset) : DatasetSplit{};

    parallel_for(pending_models.size(), opt.workers, [&](std::size_t i) {
        ModelJob& m = models[pending_models[i]];
        const fs::path ckpt_path = out / "models" / (m.key + ".ckpt");
        std::optional<Checkpoint> trained = load_matching(ckpt_path, m.config);
        if (!trained) {
            if (!spec.train_on_demand) throw MissingCheckpointError(ckpt_path.string());
            log_line(opt.log, "train " + m.key);
            trained = train_with_drop_connect(m.net, data.train, m.dc, spec.train);
            trained->metadata["sweep"] = m.config;
            save_checkpoint(*trained, ckpt_path.string());
        }
        RecalibrationConfig rc;
        rc.epochs = spec.recalibration_epochs;
        rc.mask_seed = spec.recalibration_mask_seed;
        rc.p_primes = m.p_primes;
        m.snapshots = update_var(*trained, data.train, rc);
        for (const auto& s : m.snapshots) {
            save_checkpoint(s.checkpoint, (out / "models" / (m.key + "_pp" + fmt_rate(s.p_prime) + ".ckpt")).string());
        }
    });

    std::vector<std::size_t> pending_cells;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!cells[i].done) pending_cells.push_back(i);
    }
    parallel_for(pending_cells.size(), opt.workers, [&](std::size_t i) {
        CellJob& c = cells[pending_cells[i]];
        const ModelJob& m = models[c.model];
        const auto snap = std::find_if(m.snapshots.begin(), m.snapshots.end(),
                                       [&](const Snapshot& s) { return s.p_prime == c.fault_rate; });
        const Model& model = snap->checkpoint.model;
        MonteCarloOptions mc;
        mc.geometry = spec.geometry;
        mc.mode = spec.fault_mode;
        mc.device_tiles = spec.device_tiles;
        mc.inference.scale_correction = spec.scale_correction;
        mc.inference.p_prime = c.fault_rate;
        const MonteCarloResult r = monte_carlo_eval(model, m.plan, data.test, c.fault_rate, spec.crossbars,
                                                    c.fault_seed, mc);
        c.record.samples = r.samples;
        c.record.mean = r.mean;
        c.record.stddev = r.stddev;
        c.record.min = r.min;
        c.record.max = r.max;
        c.record.parameters = model.parameter_count();
        c.record.device_tiles = std::max(spec.device_tiles, tiles_required(m.net, m.plan, spec.geometry));
        c.record.state_hash = hex64(model.state_hash());
        nlohmann::json prov = {{"config", c.config}, {"record", c.record}, {"correct", r.correct}};
        write_json_atomic(out / "cells" / (c.key + ".json"), prov);
        c.done = true;
        char buf[64];
        std::snprintf(buf, sizeof buf, " mean %.4f sd %.4f", r.mean, r.stddev);
        log_line(opt.log, "cell " + c.key + buf);
    });

    std::vector<SweepRecord> records;
    records.reserve(cells.size());
    for (auto& c : cells) records.push_back(std::move(c.record));
    return records;
}

std::vector<CriticalityRecord> criticality_experiment(SweepSpec spec, double dc_rate, const SweepOptions& opt) {
    NetworkSpec net = resolve_network(spec.net);
    if (spec.expand_shortcut) net = expand_shortcut(net).spec;
    const bool has_pointwise = std::any_of(net.layers.begin(), net.layers.end(),
                                           [](const LayerSpec& l) { return l.is_pointwise_conv(); });
    if (!has_pointwise) throw ConfigError("criticality experiment needs a network with 1x1 convolutions");

    spec.placements = {"default", "all-rram"};
    spec.dc_rates = {dc_rate};
    spec.widths = {1.0};
    spec.paired_fault_seeds = true;
    spec.device_tiles = std::max(spec.device_tiles,
                                 tiles_required(net, plan_placement(net, PlacementPolicy::all_rram), spec.geometry));
    const std::vector<SweepRecord> records = run_sweep(spec, opt);

    std::vector<CriticalityRecord> out;
    const std::size_t n = spec.fault_rates.size();
    for (std::size_t fi = 0; fi < n; ++fi) {
        out.push_back({spec.fault_rates[fi], records[fi], records[n + fi]});
    }
    return out;
}

} // namespace rramft
