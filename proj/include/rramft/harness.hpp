#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rramft/cost_model.hpp"
#include "rramft/crossbar.hpp"
#include "rramft/dataset.hpp"
#include "rramft/train.hpp"

namespace rramft {

/// Experiment grid: fault rate x drop-connect rate x width x placement. One
/// model is trained per (placement, width, drop-connect rate), recalibrated
/// once per fault rate and evaluated on `crossbars` faulty devices.
struct SweepSpec {
    std::string name = "sweep";
    std::string net = "builtin:desk-resnet";
    bool expand_shortcut = false;
    DatasetSpec dataset;
    TrainConfig train;
    std::vector<double> fault_rates = {0.0, 0.1, 0.2, 0.3};
    std::vector<double> dc_rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<double> widths = {1.0};
    std::vector<std::string> placements = {"default"};
    std::size_t crossbars = 100;
    std::uint64_t fault_seed = 1000;
    // Cells with the same fault rate share fault seeds (otherwise every cell
    // gets its own seed range).
    bool paired_fault_seeds = false;
    // Physical tiles faults are drawn over; 0 means each model's own count.
    std::size_t device_tiles = 0;
    CrossbarGeometry geometry;
    FaultMode fault_mode = FaultMode::iid;
    bool scale_correction = true;
    std::size_t recalibration_epochs = 1;
    std::uint64_t recalibration_mask_seed = 0x5eed;
    bool train_on_demand = true;
    std::optional<CostAnchor> cost_anchor;  // otherwise cost is relative to the 1x default-placed net

    void validate() const;
};

void to_json(nlohmann::json& j, const SweepSpec& s);
void from_json(const nlohmann::json& j, SweepSpec& s);
SweepSpec load_sweep_spec(const std::string& path);

/// One evaluated grid cell.
struct SweepRecord {
    std::string net;
    std::string placement;
    double width = 1.0;
    double dc_rate = 0.0;
    double fault_rate = 0.0;
    std::size_t crossbars = 0;
    std::size_t samples = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;
    double latency = 0.0;
    double energy = 0.0;
    std::size_t parameters = 0;
    double p_prime = 0.0;
    std::uint64_t fault_seed = 0;  // crossbar i used fault_seed + i
    std::size_t device_tiles = 0;
    std::string checkpoint;        // recalibrated snapshot, relative to the output directory
    std::string state_hash;        // hex hash of the snapshot's parameters and statistics

    bool operator==(const SweepRecord&) const = default;
};

void to_json(nlohmann::json& j, const SweepRecord& r);
void from_json(const nlohmann::json& j, SweepRecord& r);

struct SweepOptions {
    std::string out_dir;
    std::size_t workers = 1;
    bool resume = false;
    std::ostream* log = nullptr;
};

/// Runs every cell of the grid. Models go to out_dir/models and one
/// provenance file per cell to out_dir/cells. With `resume`, cells whose
/// provenance matches the current configuration are read back, not rerun.
/// Records come back in grid order: placement, width, dc rate, fault rate.
std::vector<SweepRecord> run_sweep(const SweepSpec& spec, const SweepOptions& opt);

struct CriticalityRecord {
    double fault_rate = 0.0;
    SweepRecord pointwise_on_host;  // default placement
    SweepRecord all_rram;           // every conv on crossbars, drop-connect on every conv
    double margin() const noexcept { return pointwise_on_host.mean - all_rram.mean; }
};

/// Host-placed versus crossbar-placed 1x1 convolutions at one drop-connect
/// rate. Both arms see the same fault seeds on a device sized for the
/// all-rram arm, so their fault maps are identical.
std::vector<CriticalityRecord> criticality_experiment(SweepSpec spec, double dc_rate, const SweepOptions& opt);

// Fixed column order of results.csv.
const std::vector<std::string>& csv_columns();
std::string records_to_csv(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> records_from_csv(const std::string& text);
void write_results_csv(const std::vector<SweepRecord>& records, const std::string& path);
std::vector<SweepRecord> read_results_csv(const std::string& path);

// Accuracy against drop-connect rate, one line per fault rate (and per
// width/placement when the grid has several).
std::string accuracy_plot_svg(const std::vector<SweepRecord>& records, const std::string& net);
// Best mean accuracy per fault rate over the drop-connect grid, one bar per
// width/placement series, labelled with the winning rate.
std::string best_rate_plot_svg(const std::vector<SweepRecord>& records, const std::string& net);

/// Writes results.csv plus fig_accuracy_<net>.svg and fig_bestrate_<net>.svg
/// for every net in `records`. Returns the written paths.
std::vector<std::string> report(const std::vector<SweepRecord>& records, const std::string& out_dir);

} // namespace rramft
