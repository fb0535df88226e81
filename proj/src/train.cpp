#include "rramft/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "rramft/error.hpp"
#include "rramft/optim.hpp"

namespace rramft {
namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    return idx;
}

std::string_view schedule_name(LrSchedule s) {
    switch (s) {
    case LrSchedule::constant: return "constant";
    case LrSchedule::cosine: return "cosine";
    case LrSchedule::step: return "step";
    }
    return "cosine";
}

} // namespace

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(batchnorm.epsilon > 0.0)) throw ConfigError("batchnorm epsilon must be > 0");
    if (!(batchnorm.momentum > 0.0 && batchnorm.momentum <= 1.0)) throw ConfigError("batchnorm momentum must be in (0, 1]");
}

double scheduled_lr(const TrainConfig& cfg, std::size_t iteration, std::size_t total, std::size_t per_epoch) {
    switch (cfg.schedule) {
    case LrSchedule::constant:
        return cfg.lr;
    case LrSchedule::cosine: {
        const double floor = cfg.lr * 0.01;
        const double t = total > 1 ? static_cast<double>(iteration) / static_cast<double>(total) : 0.0;
        return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(3.141592653589793 * t));
    }
    case LrSchedule::step: {
        const std::size_t epoch = per_epoch ? iteration / per_epoch : 0;
        return cfg.lr * std::pow(cfg.step_gamma, static_cast<double>(epoch / std::max<std::size_t>(cfg.step_epochs, 1)));
    }
    }
    return cfg.lr;
}

void train_model(Model& model, const Dataset& data, const DropConnectConfig& dc, const TrainConfig& cfg,
                 TrainLog* log) {
    cfg.validate();
    dc.validate();
    if (data.size() == 0) throw ConfigError("training set is empty");
    if (data.image != model.spec().input) throw ShapeError("dataset images do not match the network input");

    Sgd opt({cfg.lr, cfg.momentum, cfg.weight_decay});
    const std::size_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total = per_epoch * cfg.epochs;
    const bool masking = dc.p > 0.0 || dc.convention == MaskConvention::keep_probability;
    Tape tape;
    std::size_t iteration = 0;
    std::size_t correct = 0, seen = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled(data.size(), derive_seed(cfg.seed, 0xba7c4, epoch));
        correct = seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++iteration) {
            const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, order.size() - start));
            const Tensor x = data.batch(idx);
            const std::vector<int> y = data.batch_labels(idx);

            std::vector<std::size_t> masked;
            Overrides ov;
            if (masking) ov = drop_connect_overrides(model, dc, iteration, true, &masked);

            opt.set_lr(scheduled_lr(cfg, iteration, total, per_epoch));
            model.zero_grad();
            double loss;
            try {
                const Tensor probs = model.forward(x, Mode::train, tape, ov.empty() ? nullptr : &ov);
                loss = cross_entropy(probs, y);
                if (!std::isfinite(loss)) throw NumericError("loss is " + std::to_string(loss));
                const auto pred = argmax_rows(probs);
                for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
                seen += y.size();
                model.backward_cross_entropy(tape, y);
                opt.step(model.trainable_tensors());
                for (const Tensor* t : model.trainable_tensors()) require_finite(t->data(), "updated parameters");
            } catch (const NumericError& e) {
                throw DivergenceError(iteration, "training diverged at iteration " + std::to_string(iteration) +
                                                     " (epoch " + std::to_string(epoch) + "): " + e.what());
            }
            if (log) {
                log->losses.push_back(loss);
                for (std::size_t li : masked) ++log->mask_applications[model.spec().layers[li].id];
            }
        }
    }
    if (log) {
        log->iterations = iteration;
        log->train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    }
}

Checkpoint train_with_drop_connect(const NetworkSpec& net, const Dataset& data, const DropConnectConfig& dc,
                                   const TrainConfig& cfg, TrainLog* log) {
    cfg.validate();
    Model model(net, derive_seed(cfg.seed, 0x1417), cfg.batchnorm);
    TrainLog local;
    train_model(model, data, dc, cfg, log ? log : &local);
    const TrainLog& l = log ? *log : local;
    Checkpoint ckpt{std::move(model), nlohmann::json::object()};
    ckpt.metadata["drop_connect"] = dc;
    ckpt.metadata["train"] = cfg;
    ckpt.metadata["final_loss"] = l.losses.empty() ? 0.0 : l.losses.back();
    ckpt.metadata["train_accuracy"] = l.train_accuracy;
    return ckpt;
}

std::vector<Snapshot> update_var(const Checkpoint& source, const Dataset& data, const RecalibrationConfig& cfg) {
    if (data.size() == 0) throw ConfigError("recalibration set is empty");
    if (cfg.batch_size == 0 || cfg.epochs == 0) throw ConfigError("recalibration needs batch_size and epochs >= 1");
    DropConnectConfig trained;
    if (source.metadata.contains("drop_connect")) trained = source.metadata["drop_connect"].get<DropConnectConfig>();

    std::vector<Snapshot> out;
    for (double p_prime : cfg.p_primes) {
        DropConnectConfig dc;
        dc.p = p_prime;
        dc.applies_to = cfg.applies_to.value_or(trained.applies_to);
        dc.layers = cfg.applies_to ? cfg.layers : trained.layers;
        dc.mask_seed = derive_seed(cfg.mask_seed, static_cast<std::uint64_t>(std::llround(p_prime * 1e6)));
        dc.bn_scaling = cfg.bn_scaling;
        dc.validate();

        Model model = source.model;
        Tape tape;
        std::uint64_t draw = 0;
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            for (std::size_t start = 0; start < data.size(); start += cfg.batch_size, ++draw) {
                std::vector<std::size_t> idx(std::min(cfg.batch_size, data.size() - start));
                std::iota(idx.begin(), idx.end(), start);
                Overrides ov;
                if (p_prime > 0.0) ov = drop_connect_overrides(model, dc, draw, false);
                model.forward(data.batch(idx), Mode::train, tape, ov.empty() ? nullptr : &ov);
            }
        }
        Checkpoint snap{std::move(model), source.metadata};
        snap.metadata["p_prime"] = p_prime;
        snap.metadata["updatevar"] = {{"epochs", cfg.epochs},
                                      {"applies_to", std::string(to_string(dc.applies_to))},
                                      {"mask_seed", cfg.mask_seed}};
        out.push_back({p_prime, std::move(snap)});
    }
    return out;
}

double evaluate_accuracy(const Model& model, const Dataset& data, std::size_t batch_size, const Overrides* overrides) {
    if (data.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto pred = argmax_rows(model.infer(data.batch(idx), overrides));
        for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == data.labels[idx[i]];
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
    j = nlohmann::json{{"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"lr", cfg.lr},
                       {"momentum", cfg.momentum},
                       {"weight_decay", cfg.weight_decay},
                       {"schedule", std::string(schedule_name(cfg.schedule))},
                       {"step_epochs", cfg.step_epochs},
                       {"step_gamma", cfg.step_gamma},
                       {"seed", cfg.seed},
                       {"bn_epsilon", cfg.batchnorm.epsilon},
                       {"bn_momentum", cfg.batchnorm.momentum}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
    cfg = TrainConfig{};
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    const std::string s = j.value("schedule", std::string("cosine"));
    if (s == "constant") cfg.schedule = LrSchedule::constant;
    else if (s == "cosine") cfg.schedule = LrSchedule::cosine;
    else if (s == "step") cfg.schedule = LrSchedule::step;
    else throw ConfigError("unknown lr schedule '" + s + "'");
    cfg.step_epochs = j.value("step_epochs", cfg.step_epochs);
    cfg.step_gamma = j.value("step_gamma", cfg.step_gamma);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.batchnorm.epsilon = j.value("bn_epsilon", cfg.batchnorm.epsilon);
    cfg.batchnorm.momentum = j.value("bn_momentum", cfg.batchnorm.momentum);
    cfg.validate();
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open training config '" + path + "'");
    try {
        return nlohmann::json::parse(is).get<TrainConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("training config '" + path + "': " + e.what());
    }
}

} // namespace rramft
