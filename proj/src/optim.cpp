#include "rramft/optim.hpp"

#include "rramft/error.hpp"

namespace rramft {

Sgd::Sgd(SgdOptions options) : options_(options) {
    set_lr(options.lr);
    if (options.momentum < 0.0 || options.momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (options.weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
}

void Sgd::set_lr(double lr) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
    options_.lr = lr;
}

void Sgd::step(std::vector<Tensor*> params) {
    if (velocity_.empty()) {
        velocity_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i]->size(), 0.0);
    }
    if (velocity_.size() != params.size()) throw ShapeError("sgd: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (velocity_[i].size() != p.size()) throw ShapeError("sgd: parameter shape changed between steps");
        if (!p.has_grad()) continue;
        auto g = p.grad();
        auto& v = velocity_[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double d = g[k] + options_.weight_decay * p[k];
            v[k] = options_.momentum * v[k] + d;
            p[k] -= options_.lr * v[k];
        }
    }
}

} // namespace rramft
