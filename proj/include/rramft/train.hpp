#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rramft/checkpoint.hpp"
#include "rramft/dataset.hpp"
#include "rramft/dropconnect.hpp"

namespace rramft {

enum class LrSchedule { constant, cosine, step };

/// Training hyperparameters. The defaults are tuned for the desk-scale
/// shapes task, not for CIFAR-10.
struct TrainConfig {
    std::size_t epochs = 12;
    std::size_t batch_size = 32;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    LrSchedule schedule = LrSchedule::cosine;
    std::size_t step_epochs = 10;  // step schedule: decay every N epochs
    double step_gamma = 0.1;
    std::uint64_t seed = 1;        // parameter init and batch shuffling
    BatchNormOptions batchnorm;

    void validate() const;
};

struct TrainLog {
    std::vector<double> losses;                             // one per iteration
    std::map<std::string, std::size_t> mask_applications;  // per layer id
    std::size_t iterations = 0;
    double train_accuracy = 0.0;                            // on the last epoch's batches
};

// Learning rate at `iteration` of `total` under the configured schedule.
double scheduled_lr(const TrainConfig& cfg, std::size_t iteration, std::size_t total, std::size_t per_epoch);

/// Trains `model` in place with a fresh drop-connect mask per iteration on
/// every applicable layer. Throws DivergenceError naming the iteration if the
/// loss stops being finite.
void train_model(Model& model, const Dataset& data, const DropConnectConfig& dc, const TrainConfig& cfg,
                 TrainLog* log = nullptr);

/// Builds a freshly initialised model from `net` and trains it. The returned
/// checkpoint's metadata records the drop-connect and training settings.
Checkpoint train_with_drop_connect(const NetworkSpec& net, const Dataset& data, const DropConnectConfig& dc,
                                   const TrainConfig& cfg, TrainLog* log = nullptr);

struct RecalibrationConfig {
    std::vector<double> p_primes = {0.0, 0.1, 0.2, 0.3};
    std::size_t epochs = 1;
    std::size_t batch_size = 128;
    // Layers that get masks; taken from the checkpoint's training metadata
    // when unset.
    std::optional<LayerSelection> applies_to;
    std::vector<std::string> layers;
    std::uint64_t mask_seed = 0x5eed;
    BnScaling bn_scaling = BnScaling::implicit;
};

struct Snapshot {
    double p_prime = 0.0;
    Checkpoint checkpoint;
};

/// Batchnorm recalibration with frozen weights: for each p' a copy of the
/// model runs `epochs` train-mode passes over `data` with drop rate p' and
/// scale 1/(1-p'), so only the running statistics move. One snapshot per p'.
std::vector<Snapshot> update_var(const Checkpoint& model, const Dataset& data, const RecalibrationConfig& cfg);

// Accuracy of eval-mode inference over a whole dataset.
double evaluate_accuracy(const Model& model, const Dataset& data, std::size_t batch_size = 250,
                         const Overrides* overrides = nullptr);

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);
TrainConfig load_train_config(const std::string& path);

} // namespace rramft
