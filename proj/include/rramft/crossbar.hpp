#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rramft/dataset.hpp"
#include "rramft/dropconnect.hpp"
#include "rramft/model.hpp"
#include "rramft/transforms.hpp"

namespace rramft {

/// Symmetric per-layer 8-bit quantisation: q = round(w / scale) with ties
/// away from zero, scale = max|w| / 127. An all-zero layer gets scale 1.
struct QuantSpec {
    int bits = 8;

    void validate() const;  // only 8-bit cells are modelled
    int levels() const noexcept { return (1 << (bits - 1)) - 1; }
    double scale_for(std::span<const double> weights) const;
    std::int8_t quantize(double w, double scale) const;
    static double dequantize(std::int8_t q, double scale) noexcept { return static_cast<double>(q) * scale; }
};

struct CrossbarGeometry {
    std::size_t rows = 128;
    std::size_t cols = 128;

    void validate() const;
    std::size_t cells() const noexcept { return rows * cols; }
    bool operator==(const CrossbarGeometry&) const = default;
};

/// Where one conv layer lives. The weight [m, n/g, k, k] is unfolded to a
/// (n/g)·k·k by m matrix, one column per output filter, and cut into a
/// row_tiles by col_tiles block of tiles starting at first_tile (row-major).
struct LayerMapping {
    std::size_t layer = 0;
    std::string layer_id;
    Shape weight_shape;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t first_tile = 0;
    std::size_t row_tiles = 0;
    std::size_t col_tiles = 0;
    double scale = 1.0;

    std::size_t tile_count() const noexcept { return row_tiles * col_tiles; }
};

struct CellCoord {
    std::size_t tile = 0;
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const CellCoord&) const = default;
};

/// Programmed crossbar tiles holding the RRAM-placed layers of one model.
class CrossbarArray {
public:
    CrossbarArray(CrossbarGeometry geometry, std::size_t tiles);

    const CrossbarGeometry& geometry() const noexcept { return geometry_; }
    std::size_t tile_count() const noexcept { return tile_count_; }
    std::size_t cell_count() const noexcept { return cells_.size(); }

    std::int8_t cell(std::size_t tile, std::size_t row, std::size_t col) const;
    void set_cell(std::size_t tile, std::size_t row, std::size_t col, std::int8_t value);
    std::size_t flat_index(std::size_t tile, std::size_t row, std::size_t col) const;

    const std::vector<LayerMapping>& mappings() const noexcept { return mappings_; }
    const LayerMapping* mapping_for(std::size_t layer) const noexcept;

    // Cell that holds element `index` of the layer's weight tensor.
    CellCoord locate(const LayerMapping& m, std::size_t index) const;

private:
    friend CrossbarArray map_network(const Model&, const PlacementPlan&, const QuantSpec&, CrossbarGeometry);
    CrossbarGeometry geometry_;
    std::size_t tile_count_ = 0;
    std::vector<std::int8_t> cells_;
    std::vector<LayerMapping> mappings_;
};

/// Unfolds, quantises and programs every RRAM-placed layer. Each layer gets
/// its own block of tiles; unused cells hold 0.
CrossbarArray map_network(const Model& model, const PlacementPlan& plan, const QuantSpec& q = {},
                          CrossbarGeometry geometry = {});

// Tiles map_network would allocate for `net` under `plan`, without weights.
std::size_t tiles_required(const NetworkSpec& net, const PlacementPlan& plan, CrossbarGeometry geometry = {});

enum class FaultMode {
    iid,          // every cell faulty independently with probability f
    exact_count,  // exactly round(f * cells) faulty cells, uniformly placed
};

std::string_view to_string(FaultMode mode) noexcept;
FaultMode parse_fault_mode(std::string_view name);

/// Stuck-at-one cells of a device of `tiles` tiles. A faulty cell reads 0.
class FaultMap {
public:
    FaultMap(CrossbarGeometry geometry, std::size_t tiles, double rate, std::uint64_t seed,
             FaultMode mode = FaultMode::iid);

    const CrossbarGeometry& geometry() const noexcept { return geometry_; }
    std::size_t tile_count() const noexcept { return tiles_; }
    double rate() const noexcept { return rate_; }
    std::uint64_t seed() const noexcept { return seed_; }
    FaultMode mode() const noexcept { return mode_; }
    static constexpr std::string_view kind() noexcept { return "SA1"; }

    std::size_t cell_count() const noexcept { return bits_.size(); }
    std::size_t fault_count() const noexcept { return faults_; }
    bool faulty(std::size_t tile, std::size_t row, std::size_t col) const;
    bool faulty_flat(std::size_t index) const noexcept { return bits_[index] != 0; }
    std::vector<CellCoord> coordinates() const;

    void mark(const CellCoord& c);
    bool operator==(const FaultMap&) const = default;

private:
    friend FaultMap read_fault_map(std::istream& is);
    FaultMap() = default;
    CrossbarGeometry geometry_;
    std::size_t tiles_ = 0;
    double rate_ = 0.0;
    std::uint64_t seed_ = 0;
    FaultMode mode_ = FaultMode::iid;
    std::size_t faults_ = 0;
    std::vector<std::uint8_t> bits_;
};

// Draws SA1 faults over max(arrays.tile_count(), device_tiles) tiles. The map
// depends only on (geometry, tile count, f, seed, mode), so two models mapped
// onto the same device size see identical faults.
FaultMap inject_sa1(const CrossbarArray& arrays, double f, std::uint64_t seed, FaultMode mode = FaultMode::iid,
                    std::size_t device_tiles = 0);

// Text format:
//   # rramft fault map
//   geometry <rows> <cols> <tiles>
//   rate <f>
//   seed <seed>
//   kind SA1
//   mode <iid|exact-count>
//   faults <count>
//   <tile> <row> <col>      one line per faulty cell, ascending
void write_fault_map(const FaultMap& map, std::ostream& os);
FaultMap read_fault_map(std::istream& is);
void save_fault_map(const FaultMap& map, const std::string& path);
FaultMap load_fault_map(const std::string& path);

// Value read from a cell, honouring SA1 faults.
std::int8_t read_cell(const CrossbarArray& arrays, const FaultMap* faults, std::size_t tile, std::size_t row,
                      std::size_t col);

// Dequantised weight tensor of one mapped layer as read from the device.
Tensor read_layer_weights(const CrossbarArray& arrays, const LayerMapping& m, const FaultMap* faults = nullptr);

// Copy of `model` whose RRAM-placed weights are replaced by their
// quantise-dequantise round trip; everything else is untouched.
Model quantized_model(const Model& model, const PlacementPlan& plan, const QuantSpec& q = {});

struct InferenceOptions {
    bool scale_correction = true;
    double p_prime = 0.0;  // correction factor is 1 / (1 - p_prime)
    BnScaling bn_scaling = BnScaling::implicit;
};

// Overrides that make Model::infer compute with the device's faulty weights.
Overrides crossbar_overrides(const Model& model, const CrossbarArray& arrays, const FaultMap& faults,
                             const InferenceOptions& opt = {});

std::vector<int> faulty_inference(const Model& model, const CrossbarArray& arrays, const FaultMap& faults,
                                  const Tensor& input, const InferenceOptions& opt = {});

// Number of correctly classified samples of `data`.
std::size_t count_correct(const Model& model, const Dataset& data, const Overrides* overrides,
                          std::size_t batch_size = 250);

struct MonteCarloOptions {
    QuantSpec quant;
    CrossbarGeometry geometry;
    FaultMode mode = FaultMode::iid;
    std::size_t device_tiles = 0;
    InferenceOptions inference;
    std::size_t batch_size = 250;
};

struct MonteCarloResult {
    std::size_t crossbars = 0;
    std::size_t samples = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<std::size_t> correct;  // per crossbar, aligned with seeds
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
    double min = 0.0;
    double max = 0.0;
};

// Statistics over per-crossbar correct counts; exact integer sums make them
// independent of the order of the counts.
void summarize(MonteCarloResult& r);

/// Accuracy over `n_crossbars` independently faulted devices with seeds
/// base_seed .. base_seed + n - 1, evaluated in parallel.
MonteCarloResult monte_carlo_eval(const Model& model, const PlacementPlan& plan, const Dataset& test, double f,
                                  std::size_t n_crossbars, std::uint64_t base_seed, const MonteCarloOptions& opt = {});

// Same with an explicit seed list.
MonteCarloResult monte_carlo_eval(const Model& model, const PlacementPlan& plan, const Dataset& test, double f,
                                  std::span<const std::uint64_t> seeds, const MonteCarloOptions& opt = {});

} // namespace rramft
