#pragma once

#include <vector>

#include "rramft/model.hpp"

namespace rramft {

struct SgdOptions {
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 0.0;
};

/// SGD with heavy-ball momentum: v <- mu*v + (g + wd*w); w <- w - lr*v.
class Sgd {
public:
    explicit Sgd(SgdOptions options);

    void step(std::vector<Tensor*> params);
    void set_lr(double lr);
    const SgdOptions& options() const noexcept { return options_; }

private:
    SgdOptions options_;
    std::vector<std::vector<double>> velocity_;
};

} // namespace rramft
