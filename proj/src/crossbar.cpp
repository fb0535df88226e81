#include "rramft/crossbar.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rramft/error.hpp"
#include "rramft/rng.hpp"

namespace rramft {

void QuantSpec::validate() const {
    if (bits != 8) throw ConfigError("only 8-bit cells are supported, got " + std::to_string(bits));
}

double QuantSpec::scale_for(std::span<const double> weights) const {
    double amax = 0.0;
    for (double w : weights) amax = std::max(amax, std::abs(w));
    return amax > 0.0 ? amax / levels() : 1.0;
}

std::int8_t QuantSpec::quantize(double w, double scale) const {
    const double q = std::round(w / scale);  // std::round breaks ties away from zero
    const double lim = levels();
    return static_cast<std::int8_t>(std::clamp(q, -lim, lim));
}

void CrossbarGeometry::validate() const {
    if (rows == 0 || cols == 0) throw ConfigError("crossbar tiles need at least one row and one column");
}

CrossbarArray::CrossbarArray(CrossbarGeometry geometry, std::size_t tiles)
    : geometry_(geometry), tile_count_(tiles), cells_(tiles * geometry.cells(), 0) {
    geometry_.validate();
}

std::size_t CrossbarArray::flat_index(std::size_t tile, std::size_t row, std::size_t col) const {
    if (tile >= tile_count_ || row >= geometry_.rows || col >= geometry_.cols) {
        throw ShapeError("cell (" + std::to_string(tile) + ", " + std::to_string(row) + ", " + std::to_string(col) +
                         ") is outside the device");
    }
    return (tile * geometry_.rows + row) * geometry_.cols + col;
}

std::int8_t CrossbarArray::cell(std::size_t tile, std::size_t row, std::size_t col) const {
    return cells_[flat_index(tile, row, col)];
}

void CrossbarArray::set_cell(std::size_t tile, std::size_t row, std::size_t col, std::int8_t value) {
    cells_[flat_index(tile, row, col)] = value;
}

const LayerMapping* CrossbarArray::mapping_for(std::size_t layer) const noexcept {
    for (const auto& m : mappings_) {
        if (m.layer == layer) return &m;
    }
    return nullptr;
}

CellCoord CrossbarArray::locate(const LayerMapping& m, std::size_t index) const {
    const std::size_t filter = index / m.rows;  // column of the unfolded matrix
    const std::size_t r = index % m.rows;
    const std::size_t tile = m.first_tile + (r / geometry_.rows) * m.col_tiles + filter / geometry_.cols;
    return {tile, r % geometry_.rows, filter % geometry_.cols};
}

CrossbarArray map_network(const Model& model, const PlacementPlan& plan, const QuantSpec& q,
                          CrossbarGeometry geometry) {
    q.validate();
    geometry.validate();
    const auto& layers = model.spec().layers;
    if (plan.layers.size() != layers.size()) throw ShapeError("placement plan does not match the network");

    std::vector<LayerMapping> mappings;
    std::size_t tiles = 0;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        if (!plan.on_rram(li)) continue;
        if (!layers[li].is_conv()) throw ConfigError("layer '" + layers[li].id + "' cannot be mapped to RRAM");
        const Tensor& w = model.params(li).weight;
        LayerMapping m;
        m.layer = li;
        m.layer_id = layers[li].id;
        m.weight_shape = w.shape();
        m.cols = w.dim(0);
        m.rows = w.size() / m.cols;
        m.row_tiles = (m.rows + geometry.rows - 1) / geometry.rows;
        m.col_tiles = (m.cols + geometry.cols - 1) / geometry.cols;
        m.first_tile = tiles;
        m.scale = q.scale_for(w.data());
        tiles += m.tile_count();
        mappings.push_back(std::move(m));
    }

    CrossbarArray arrays(geometry, tiles);
    for (const auto& m : mappings) {
        const Tensor& w = model.params(m.layer).weight;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const CellCoord c = arrays.locate(m, i);
            arrays.set_cell(c.tile, c.row, c.col, q.quantize(w[i], m.scale));
        }
    }
    arrays.mappings_ = std::move(mappings);
    return arrays;
}

std::size_t tiles_required(const NetworkSpec& net, const PlacementPlan& plan, CrossbarGeometry geometry) {
    geometry.validate();
    std::size_t tiles = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        if (!plan.on_rram(li)) continue;
        const LayerSpec& l = net.layers[li];
        const std::size_t rows = (l.in_channels / l.groups) * l.kernel * l.kernel;
        tiles += ((rows + geometry.rows - 1) / geometry.rows) * ((l.out_channels + geometry.cols - 1) / geometry.cols);
    }
    return tiles;
}

std::string_view to_string(FaultMode mode) noexcept {
    return mode == FaultMode::iid ? "iid" : "exact-count";
}

FaultMode parse_fault_mode(std::string_view name) {
    if (name == "iid") return FaultMode::iid;
    if (name == "exact-count") return FaultMode::exact_count;
    throw ConfigError("unknown fault mode '" + std::string(name) + "'");
}

FaultMap::FaultMap(CrossbarGeometry geometry, std::size_t tiles, double rate, std::uint64_t seed, FaultMode mode)
    : geometry_(geometry), tiles_(tiles), rate_(rate), seed_(seed), mode_(mode), bits_(tiles * geometry.cells(), 0) {
    geometry_.validate();
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("fault rate must lie in [0, 1]");
    if (rate == 0.0) return;
    Rng rng(derive_seed(seed, 0x5a1));
    if (mode == FaultMode::iid) {
        for (auto& b : bits_) b = uniform01(rng) < rate ? 1 : 0;
        faults_ = static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
        return;
    }
    const std::size_t n = bits_.size();
    const auto k = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(rate * static_cast<double>(n))));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(order[i], order[i + uniform_index(rng, n - i)]);
        bits_[order[i]] = 1;
    }
    faults_ = k;
}

bool FaultMap::faulty(std::size_t tile, std::size_t row, std::size_t col) const {
    if (tile >= tiles_ || row >= geometry_.rows || col >= geometry_.cols) {
        throw ShapeError("fault map lookup outside the device");
    }
    return bits_[(tile * geometry_.rows + row) * geometry_.cols + col] != 0;
}

std::vector<CellCoord> FaultMap::coordinates() const {
    std::vector<CellCoord> out;
    out.reserve(faults_);
    const std::size_t per_tile = geometry_.cells();
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (!bits_[i]) continue;
        const std::size_t in_tile = i % per_tile;
        out.push_back({i / per_tile, in_tile / geometry_.cols, in_tile % geometry_.cols});
    }
    return out;
}

void FaultMap::mark(const CellCoord& c) {
    if (c.tile >= tiles_ || c.row >= geometry_.rows || c.col >= geometry_.cols) {
        throw ShapeError("fault coordinate outside the device");
    }
    auto& b = bits_[(c.tile * geometry_.rows + c.row) * geometry_.cols + c.col];
    if (!b) ++faults_;
    b = 1;
}

FaultMap inject_sa1(const CrossbarArray& arrays, double f, std::uint64_t seed, FaultMode mode,
                    std::size_t device_tiles) {
    return FaultMap(arrays.geometry(), std::max(arrays.tile_count(), device_tiles), f, seed, mode);
}

void write_fault_map(const FaultMap& map, std::ostream& os) {
    const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
    os << "# rramft fault map\n"
       << "geometry " << map.geometry().rows << ' ' << map.geometry().cols << ' ' << map.tile_count() << '\n'
       << "rate " << map.rate() << '\n'
       << "seed " << map.seed() << '\n'
       << "kind " << FaultMap::kind() << '\n'
       << "mode " << to_string(map.mode()) << '\n'
       << "faults " << map.fault_count() << '\n';
    for (const auto& c : map.coordinates()) os << c.tile << ' ' << c.row << ' ' << c.col << '\n';
    os.precision(old_precision);
}

FaultMap read_fault_map(std::istream& is) {
    FaultMap map;
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() -> std::istringstream {
        while (std::getline(is, line)) {
            ++lineno;
            if (!line.empty() && line[0] != '#') return std::istringstream(line);
        }
        throw FormatError("fault map ends after line " + std::to_string(lineno));
    };
    auto field = [&](const char* key) {
        auto ls = next();
        std::string k;
        ls >> k;
        if (k != key) throw FormatError("fault map line " + std::to_string(lineno) + ": expected '" + key + "'");
        return ls;
    };
    auto bad = [&]() { return FormatError("fault map line " + std::to_string(lineno) + " is malformed"); };

    if (!(field("geometry") >> map.geometry_.rows >> map.geometry_.cols >> map.tiles_)) throw bad();
    map.geometry_.validate();
    if (!(field("rate") >> map.rate_)) throw bad();
    if (!(field("seed") >> map.seed_)) throw bad();
    std::string kind, mode;
    if (!(field("kind") >> kind)) throw bad();
    if (kind != FaultMap::kind()) throw FormatError("unsupported fault kind '" + kind + "'");
    if (!(field("mode") >> mode)) throw bad();
    map.mode_ = parse_fault_mode(mode);
    std::size_t count = 0;
    if (!(field("faults") >> count)) throw bad();
    map.bits_.assign(map.tiles_ * map.geometry_.cells(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        CellCoord c;
        if (!(next() >> c.tile >> c.row >> c.col)) throw bad();
        map.mark(c);
    }
    if (map.faults_ != count) throw FormatError("fault map lists duplicate coordinates");
    return map;
}

void save_fault_map(const FaultMap& map, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write fault map '" + path + "'");
    write_fault_map(map, os);
    if (!os) throw FormatError("failed writing fault map '" + path + "'");
}

FaultMap load_fault_map(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open fault map '" + path + "'");
    return read_fault_map(is);
}

std::int8_t read_cell(const CrossbarArray& arrays, const FaultMap* faults, std::size_t tile, std::size_t row,
                      std::size_t col) {
    if (faults && faults->faulty(tile, row, col)) return 0;
    return arrays.cell(tile, row, col);
}

namespace {

void check_compatible(const CrossbarArray& arrays, const FaultMap& faults) {
    if (!(faults.geometry() == arrays.geometry()) || faults.tile_count() < arrays.tile_count()) {
        throw ShapeError("fault map geometry (" + std::to_string(faults.geometry().rows) + "x" +
                         std::to_string(faults.geometry().cols) + ", " + std::to_string(faults.tile_count()) +
                         " tiles) does not cover the crossbar array (" + std::to_string(arrays.geometry().rows) +
                         "x" + std::to_string(arrays.geometry().cols) + ", " + std::to_string(arrays.tile_count()) +
                         " tiles)");
    }
}

} // namespace

Tensor read_layer_weights(const CrossbarArray& arrays, const LayerMapping& m, const FaultMap* faults) {
    if (faults) check_compatible(arrays, *faults);
    Tensor w(m.weight_shape);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const CellCoord c = arrays.locate(m, i);
        w[i] = QuantSpec::dequantize(read_cell(arrays, faults, c.tile, c.row, c.col), m.scale);
    }
    return w;
}

Model quantized_model(const Model& model, const PlacementPlan& plan, const QuantSpec& q) {
    q.validate();
    std::vector<LayerParams> params;
    params.reserve(model.layer_count());
    for (std::size_t li = 0; li < model.layer_count(); ++li) {
        params.push_back(model.params(li));
        if (!plan.on_rram(li)) continue;
        Tensor& w = params.back().weight;
        const double scale = q.scale_for(w.data());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = QuantSpec::dequantize(q.quantize(w[i], scale), scale);
    }
    return Model(model.spec(), std::move(params), model.batchnorm_options());
}

Overrides crossbar_overrides(const Model& model, const CrossbarArray& arrays, const FaultMap& faults,
                             const InferenceOptions& opt) {
    check_compatible(arrays, faults);
    if (!(opt.p_prime >= 0.0 && opt.p_prime < 1.0)) throw ConfigError("p_prime must lie in [0, 1)");
    const auto& layers = model.spec().layers;
    const auto& shapes = model.shapes();
    Overrides ov(layers.size());
    const double factor = opt.scale_correction ? 1.0 / (1.0 - opt.p_prime) : 1.0;
    for (const auto& m : arrays.mappings()) {
        if (m.layer >= layers.size() || layers[m.layer].id != m.layer_id) {
            throw ShapeError("crossbar array was mapped from a different network");
        }
        ov[m.layer].weight = read_layer_weights(arrays, m, &faults);
        double scale = factor;
        if (opt.bn_scaling == BnScaling::explicit_input && shapes.fanout[m.layer] == 1) {
            for (std::size_t lj = m.layer + 1; lj < layers.size(); ++lj) {
                if (layers[lj].kind == LayerKind::batchnorm &&
                    shapes.predecessors[lj][0] == static_cast<long>(m.layer)) {
                    ov[lj].input_scale = scale;
                    scale = 1.0;
                    break;
                }
            }
        }
        ov[m.layer].output_scale = scale;
    }
    return ov;
}

std::vector<int> faulty_inference(const Model& model, const CrossbarArray& arrays, const FaultMap& faults,
                                  const Tensor& input, const InferenceOptions& opt) {
    const Overrides ov = crossbar_overrides(model, arrays, faults, opt);
    return argmax_rows(model.infer(input, &ov));
}

std::size_t count_correct(const Model& model, const Dataset& data, const Overrides* overrides,
                          std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t first = 0; first < data.size(); first += batch_size) {
        const std::size_t n = std::min(batch_size, data.size() - first);
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), first);
        const std::vector<int> pred = argmax_rows(model.infer(data.batch(idx), overrides));
        for (std::size_t i = 0; i < n; ++i) correct += pred[i] == data.labels[first + i] ? 1 : 0;
    }
    return correct;
}

void summarize(MonteCarloResult& r) {
    r.crossbars = r.correct.size();
    if (r.crossbars == 0 || r.samples == 0) throw UsageError("no Monte-Carlo runs to summarize");
    std::uint64_t sum = 0;
    std::uint64_t sum_sq = 0;
    for (std::size_t c : r.correct) {
        sum += c;
        sum_sq += static_cast<std::uint64_t>(c) * c;
    }
    const auto n = static_cast<std::uint64_t>(r.crossbars);
    const auto s = static_cast<double>(r.samples);
    // n^2 * variance of the counts, exact in integers.
    const std::uint64_t spread = n * sum_sq - sum * sum;
    r.mean = static_cast<double>(sum) / (static_cast<double>(n) * s);
    r.stddev = std::sqrt(static_cast<double>(spread)) / (static_cast<double>(n) * s);
    const auto [lo, hi] = std::minmax_element(r.correct.begin(), r.correct.end());
    r.min = static_cast<double>(*lo) / s;
    r.max = static_cast<double>(*hi) / s;
}

MonteCarloResult monte_carlo_eval(const Model& model, const PlacementPlan& plan, const Dataset& test, double f,
                                  std::size_t n_crossbars, std::uint64_t base_seed, const MonteCarloOptions& opt) {
    std::vector<std::uint64_t> seeds(n_crossbars);
    std::iota(seeds.begin(), seeds.end(), base_seed);
    return monte_carlo_eval(model, plan, test, f, seeds, opt);
}

MonteCarloResult monte_carlo_eval(const Model& model, const PlacementPlan& plan, const Dataset& test, double f,
                                  std::span<const std::uint64_t> seeds, const MonteCarloOptions& opt) {
    if (seeds.empty()) throw ConfigError("Monte-Carlo evaluation needs at least one crossbar");
    if (test.size() == 0) throw ConfigError("Monte-Carlo evaluation needs a non-empty test set");
    const CrossbarArray arrays = map_network(model, plan, opt.quant, opt.geometry);

    MonteCarloResult r;
    r.samples = test.size();
    r.seeds.assign(seeds.begin(), seeds.end());
    r.correct.assign(seeds.size(), 0);

    if (f == 0.0) {
        // Every fault map is empty, so all devices behave identically.
        const FaultMap clean = inject_sa1(arrays, 0.0, seeds[0], opt.mode, opt.device_tiles);
        const Overrides ov = crossbar_overrides(model, arrays, clean, opt.inference);
        std::fill(r.correct.begin(), r.correct.end(), count_correct(model, test, &ov, opt.batch_size));
        summarize(r);
        return r;
    }

    std::exception_ptr failure;
    const auto n = static_cast<long>(seeds.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        try {
            const FaultMap faults = inject_sa1(arrays, f, seeds[i], opt.mode, opt.device_tiles);
            const Overrides ov = crossbar_overrides(model, arrays, faults, opt.inference);
            r.correct[i] = count_correct(model, test, &ov, opt.batch_size);
        } catch (...) {
#pragma omp critical(rramft_mc_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    summarize(r);
    return r;
}

} // namespace rramft
