#include "rramft/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "rramft/error.hpp"
#include "rramft/rng.hpp"

namespace rramft {

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
    const std::size_t n = image.numel();
    Tensor out({indices.size(), image.channels, image.height, image.width});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= size()) throw ShapeError("dataset index " + std::to_string(indices[i]) + " out of range");
        std::copy_n(pixels.begin() + static_cast<long>(indices[i] * n), n, out.data().begin() + static_cast<long>(i * n));
    }
    return out;
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels.at(indices[i]);
    return out;
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
    if (first + count > size()) throw ShapeError("dataset slice out of range");
    Dataset d;
    d.image = image;
    d.classes = classes;
    const std::size_t n = image.numel();
    d.pixels.assign(pixels.begin() + static_cast<long>(first * n), pixels.begin() + static_cast<long>((first + count) * n));
    d.labels.assign(labels.begin() + static_cast<long>(first), labels.begin() + static_cast<long>(first + count));
    return d;
}

namespace {

constexpr std::size_t kShapeClasses = 10;

// Ink coverage in [0, 1] of one glyph at pixel (x, y).
double glyph(int cls, double x, double y, double cx, double cy, double r, double t) {
    const double dx = x - cx, dy = y - cy;
    const double ax = std::abs(dx), ay = std::abs(dy);
    auto band = [t](double d) { return d <= t * 0.5 ? 1.0 : 0.0; };
    const bool inside = ax <= r && ay <= r;
    switch (cls) {
    case 0: return inside ? band(ay) : 0.0;                                   // horizontal bar
    case 1: return inside ? band(ax) : 0.0;                                   // vertical bar
    case 2: return inside ? band(std::abs(dx - dy) / std::sqrt(2.0)) : 0.0;   // "\" diagonal
    case 3: return inside ? band(std::abs(dx + dy) / std::sqrt(2.0)) : 0.0;   // "/" diagonal
    case 4: return inside ? std::max(band(ax), band(ay)) : 0.0;               // plus
    case 5:                                                                   // cross
        return inside ? std::max(band(std::abs(dx - dy) / std::sqrt(2.0)), band(std::abs(dx + dy) / std::sqrt(2.0)))
                      : 0.0;
    case 6: return inside ? band(r - std::max(ax, ay)) : 0.0;                 // box outline
    case 7: return inside && std::max(ax, ay) <= r * 0.6 ? 1.0 : 0.0;         // filled box
    case 8: return band(std::abs(std::hypot(dx, dy) - r * 0.8));              // ring
    case 9: return inside ? band(std::abs(ay - r * 0.5)) : 0.0;               // two parallel bars
    default: return 0.0;
    }
}

} // namespace

Dataset make_shapes_dataset(std::size_t count, std::size_t image_size, double noise, std::uint64_t seed) {
    if (image_size < 6) throw ConfigError("shapes dataset needs image_size >= 6");
    Dataset d;
    d.image = FeatureShape{3, image_size, image_size};
    d.classes = kShapeClasses;
    d.pixels.resize(count * d.image.numel());
    d.labels.resize(count);
    const double s = static_cast<double>(image_size);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, i));
        const int cls = static_cast<int>(uniform_index(rng, kShapeClasses));
        d.labels[i] = cls;
        const double cx = s / 2.0 - 0.5 + (uniform01(rng) - 0.5) * s * 0.3;
        const double cy = s / 2.0 - 0.5 + (uniform01(rng) - 0.5) * s * 0.3;
        const double r = s * (0.22 + 0.16 * uniform01(rng));
        const double t = 1.0 + uniform01(rng);
        std::array<double, 3> fg{}, bg{};
        for (int c = 0; c < 3; ++c) {
            fg[c] = 0.45 + 0.55 * uniform01(rng);
            bg[c] = 0.35 * uniform01(rng);
        }
        double* px = d.pixels.data() + i * d.image.numel();
        for (std::size_t y = 0; y < image_size; ++y)
            for (std::size_t x = 0; x < image_size; ++x) {
                const double ink = glyph(cls, static_cast<double>(x), static_cast<double>(y), cx, cy, r, t);
                for (std::size_t c = 0; c < 3; ++c) {
                    const double v = bg[c] + ink * (fg[c] - bg[c]) + noise * standard_normal(rng);
                    px[(c * image_size + y) * image_size + x] = (v - 0.4) / 0.3;
                }
            }
    }
    return d;
}

Dataset load_cifar10(const std::vector<std::string>& files, std::size_t limit, std::size_t image_size) {
    constexpr std::size_t kSide = 32, kRecord = 1 + 3 * kSide * kSide;
    constexpr std::array<double, 3> kMean{0.4914, 0.4822, 0.4465};
    constexpr std::array<double, 3> kStd{0.2470, 0.2435, 0.2616};
    if (image_size == 0 || kSide % image_size != 0) throw ConfigError("cifar10 image_size must divide 32");
    const std::size_t f = kSide / image_size;
    Dataset d;
    d.image = FeatureShape{3, image_size, image_size};
    d.classes = 10;
    std::vector<unsigned char> rec(kRecord);
    for (const auto& file : files) {
        std::ifstream is(file, std::ios::binary);
        if (!is) throw FormatError("cannot open CIFAR-10 batch '" + file + "'");
        while (d.size() < limit && is.read(reinterpret_cast<char*>(rec.data()), kRecord)) {
            if (rec[0] > 9) throw FormatError("CIFAR-10 batch '" + file + "' has label " + std::to_string(rec[0]));
            d.labels.push_back(rec[0]);
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t y = 0; y < image_size; ++y)
                    for (std::size_t x = 0; x < image_size; ++x) {
                        double s = 0.0;
                        for (std::size_t dy = 0; dy < f; ++dy)
                            for (std::size_t dx = 0; dx < f; ++dx)
                                s += rec[1 + c * kSide * kSide + (y * f + dy) * kSide + x * f + dx];
                        d.pixels.push_back((s / static_cast<double>(f * f) / 255.0 - kMean[c]) / kStd[c]);
                    }
        }
    }
    if (d.size() == 0) throw FormatError("no CIFAR-10 records read");
    return d;
}

DatasetSplit load_dataset(const DatasetSpec& spec) {
    if (spec.kind == "shapes") {
        return {make_shapes_dataset(spec.train_size, spec.image_size, spec.noise, spec.seed),
                make_shapes_dataset(spec.test_size, spec.image_size, spec.noise, derive_seed(spec.seed, 0x7e57))};
    }
    if (spec.kind == "cifar10") {
        namespace fs = std::filesystem;
        std::vector<std::string> train_files;
        for (int i = 1; i <= 5; ++i) train_files.push_back((fs::path(spec.cifar_dir) / ("data_batch_" + std::to_string(i) + ".bin")).string());
        const std::string test_file = (fs::path(spec.cifar_dir) / "test_batch.bin").string();
        return {load_cifar10(train_files, spec.train_size, spec.image_size),
                load_cifar10({test_file}, spec.test_size, spec.image_size)};
    }
    throw ConfigError("unknown dataset kind '" + spec.kind + "'");
}

void to_json(nlohmann::json& j, const DatasetSpec& spec) {
    j = nlohmann::json{{"kind", spec.kind},           {"train_size", spec.train_size},
                       {"test_size", spec.test_size}, {"image_size", spec.image_size},
                       {"noise", spec.noise},         {"seed", spec.seed}};
    if (!spec.cifar_dir.empty()) j["cifar_dir"] = spec.cifar_dir;
}

void from_json(const nlohmann::json& j, DatasetSpec& spec) {
    spec = DatasetSpec{};
    spec.kind = j.value("kind", spec.kind);
    spec.train_size = j.value("train_size", spec.train_size);
    spec.test_size = j.value("test_size", spec.test_size);
    spec.image_size = j.value("image_size", spec.image_size);
    spec.noise = j.value("noise", spec.noise);
    spec.seed = j.value("seed", spec.seed);
    spec.cifar_dir = j.value("cifar_dir", spec.cifar_dir);
}

} // namespace rramft
