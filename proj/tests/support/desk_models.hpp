#pragma once

// Small models trained on the synthetic shapes task, cached per process.

#include <map>

#include "rramft/dataset.hpp"
#include "rramft/topologies.hpp"
#include "rramft/train.hpp"

namespace desk {

inline const rramft::DatasetSplit& data() {
    static const rramft::DatasetSplit split = [] {
        rramft::DatasetSpec ds;
        ds.train_size = 2000;
        ds.test_size = 500;
        return rramft::load_dataset(ds);
    }();
    return split;
}

inline rramft::TrainConfig schedule() {
    rramft::TrainConfig cfg;
    cfg.epochs = 12;
    return cfg;
}

// desk-resnet trained with drop-connect rate p under the default layer selection.
inline const rramft::Checkpoint& trained(double p) {
    static std::map<double, rramft::Checkpoint> cache;
    auto it = cache.find(p);
    if (it == cache.end()) {
        rramft::DropConnectConfig dc;
        dc.p = p;
        it = cache.emplace(p, rramft::train_with_drop_connect(rramft::builtin_network("desk-resnet"), data().train,
                                                              dc, schedule()))
                 .first;
    }
    return it->second;
}

// Snapshot of trained(p) recalibrated at p_prime.
inline const rramft::Checkpoint& recalibrated(double p, double p_prime) {
    static std::map<std::pair<double, double>, rramft::Checkpoint> cache;
    const auto key = std::make_pair(p, p_prime);
    auto it = cache.find(key);
    if (it == cache.end()) {
        rramft::RecalibrationConfig rc;
        rc.p_primes = {p_prime};
        auto snaps = rramft::update_var(trained(p), data().train, rc);
        it = cache.emplace(key, std::move(snaps.front().checkpoint)).first;
    }
    return it->second;
}

} // namespace desk
