#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rramft/network.hpp"
#include "rramft/tensor.hpp"

namespace rramft {

/// In-memory labelled image set, NCHW doubles.
struct Dataset {
    FeatureShape image;
    std::size_t classes = 0;
    std::vector<double> pixels;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    Tensor batch(std::span<const std::size_t> indices) const;
    std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
    // Contiguous range [first, first + count).
    Dataset slice(std::size_t first, std::size_t count) const;
};

/// Where a dataset comes from. `shapes` is procedurally generated and needs
/// no files; `cifar10` reads the standard binary batches from `cifar_dir`.
struct DatasetSpec {
    std::string kind = "shapes";
    std::size_t train_size = 2000;
    std::size_t test_size = 1000;
    std::size_t image_size = 12;
    double noise = 0.2;
    std::uint64_t seed = 7;
    std::string cifar_dir;

    bool operator==(const DatasetSpec&) const = default;
};

struct DatasetSplit {
    Dataset train;
    Dataset test;
};

DatasetSplit load_dataset(const DatasetSpec& spec);

// Ten classes of noisy strokes (bars, diagonals, crosses, boxes, rings, ...)
// drawn at a random position, size and colour on a random background.
Dataset make_shapes_dataset(std::size_t count, std::size_t image_size, double noise, std::uint64_t seed);

// Reads CIFAR-10 binary batch files (3073-byte records), keeping at most
// `limit` images, channel-normalised and average-pooled down to `image_size`
// (which must divide 32).
Dataset load_cifar10(const std::vector<std::string>& files, std::size_t limit, std::size_t image_size);

void to_json(nlohmann::json& j, const DatasetSpec& spec);
void from_json(const nlohmann::json& j, DatasetSpec& spec);

} // namespace rramft
