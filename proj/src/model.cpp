#include "rramft/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rramft/error.hpp"
#include "rramft/kernels.hpp"
#include "rramft/rng.hpp"

namespace rramft {
namespace {

ConvGeometry conv_geometry(const LayerSpec& layer, const FeatureShape& in, std::size_t batch) {
    ConvGeometry g;
    g.batch = batch;
    g.in_channels = layer.in_channels;
    g.out_channels = layer.out_channels;
    g.height = in.height;
    g.width = in.width;
    g.kernel = layer.kernel;
    g.stride = layer.stride;
    g.padding = layer.padding;
    g.groups = layer.groups;
    return g;
}

Shape batched(const FeatureShape& s, std::size_t batch) {
    return {batch, s.channels, s.height, s.width};
}

void add_into(std::span<double> dst, std::span<const double> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

LayerParams init_params(const LayerSpec& layer, std::uint64_t seed) {
    LayerParams p;
    Rng rng(derive_seed(seed, fnv1a(layer.id)));
    switch (layer.kind) {
    case LayerKind::conv2d: {
        const std::size_t fan_in = (layer.in_channels / layer.groups) * layer.kernel * layer.kernel;
        p.weight = Tensor({layer.out_channels, layer.in_channels / layer.groups, layer.kernel, layer.kernel});
        const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (double& w : p.weight.data()) w = std * standard_normal(rng);
        break;
    }
    case LayerKind::fc: {
        p.weight = Tensor({layer.out_channels, layer.in_channels});
        const double std = std::sqrt(1.0 / static_cast<double>(layer.in_channels));
        for (double& w : p.weight.data()) w = std * standard_normal(rng);
        p.bias = Tensor({layer.out_channels});
        break;
    }
    case LayerKind::batchnorm:
        p.gamma = Tensor({layer.in_channels}, 1.0);
        p.beta = Tensor({layer.in_channels}, 0.0);
        p.running_mean = Tensor({layer.in_channels}, 0.0);
        p.running_var = Tensor({layer.in_channels}, 1.0);
        break;
    default:
        break;
    }
    return p;
}

void check_param(const LayerSpec& layer, const Tensor& t, const Shape& expected, const char* name) {
    if (t.shape() != expected) {
        throw ShapeError("layer '" + layer.id + "' " + name + " has shape " + shape_to_string(t.shape()) +
                         ", expected " + shape_to_string(expected));
    }
}

} // namespace

void Tape::clear() {
    recorded_ = false;
    outputs_.clear();
    bn_xhat_.clear();
    bn_inv_std_.clear();
    input_ = Tensor();
    overrides_ = nullptr;
}

Model::Model(NetworkSpec spec, std::uint64_t init_seed, BatchNormOptions bn)
    : spec_(std::move(spec)), shapes_(infer_shapes(spec_)), bn_(bn) {
    params_.reserve(spec_.layers.size());
    for (const auto& layer : spec_.layers) params_.push_back(init_params(layer, init_seed));
}

Model::Model(NetworkSpec spec, std::vector<LayerParams> params, BatchNormOptions bn)
    : spec_(std::move(spec)), shapes_(infer_shapes(spec_)), params_(std::move(params)), bn_(bn) {
    if (params_.size() != spec_.layers.size()) {
        throw ShapeError("parameter list has " + std::to_string(params_.size()) + " entries for " +
                         std::to_string(spec_.layers.size()) + " layers");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const LayerParams& p = params_[i];
        if (l.kind == LayerKind::conv2d) {
            check_param(l, p.weight, {l.out_channels, l.in_channels / l.groups, l.kernel, l.kernel}, "weight");
        } else if (l.kind == LayerKind::fc) {
            check_param(l, p.weight, {l.out_channels, l.in_channels}, "weight");
            check_param(l, p.bias, {l.out_channels}, "bias");
        } else if (l.kind == LayerKind::batchnorm) {
            for (const Tensor* t : {&p.gamma, &p.beta, &p.running_mean, &p.running_var}) {
                check_param(l, *t, {l.in_channels}, "batchnorm parameter");
            }
        }
    }
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : trainable_tensors()) n += t->size();
    return n;
}

void Model::check_overrides(const Overrides* overrides) const {
    if (!overrides || overrides->empty()) return;
    if (overrides->size() != params_.size()) {
        throw UsageError("override list has " + std::to_string(overrides->size()) + " entries for " +
                         std::to_string(params_.size()) + " layers");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& o = (*overrides)[i];
        if (o.weight && o.weight->shape() != params_[i].weight.shape()) {
            throw ShapeError("override weight for layer '" + spec_.layers[i].id + "' has shape " +
                             shape_to_string(o.weight->shape()) + ", expected " +
                             shape_to_string(params_[i].weight.shape()));
        }
        if (o.grad_mask && o.grad_mask->shape() != params_[i].weight.shape()) {
            throw ShapeError("gradient mask for layer '" + spec_.layers[i].id + "' has wrong shape");
        }
    }
}

Tensor Model::run(const Tensor& input, Mode mode, Tape* tape, const Overrides* overrides,
                  std::vector<BatchStats>* batch_stats) const {
    const FeatureShape& in_shape = spec_.input;
    if (input.rank() != 4 || input.dim(1) != in_shape.channels || input.dim(2) != in_shape.height ||
        input.dim(3) != in_shape.width) {
        throw ShapeError("network '" + spec_.name + "' expects input [B, " + std::to_string(in_shape.channels) +
                         ", " + std::to_string(in_shape.height) + ", " + std::to_string(in_shape.width) +
                         "], got " + shape_to_string(input.shape()));
    }
    check_overrides(overrides);
    const std::size_t batch = input.dim(0);
    if (batch == 0) throw ShapeError("empty batch");
    const std::size_t n_layers = spec_.layers.size();
    const bool have_ov = overrides && !overrides->empty();

    std::vector<Tensor> outputs(n_layers);
    std::vector<std::size_t> pending = shapes_.fanout;
    if (tape) {
        tape->clear();
        tape->mode_ = mode;
        tape->batch_ = batch;
        tape->input_ = input;
        tape->bn_xhat_.assign(n_layers, {});
        tape->bn_inv_std_.assign(n_layers, {});
        tape->overrides_ = overrides;
    }
    if (batch_stats) batch_stats->assign(n_layers, {});

    auto source = [&](std::size_t li, std::size_t k) -> const Tensor& {
        const long p = shapes_.predecessors[li][k];
        return p < 0 ? input : outputs[static_cast<std::size_t>(p)];
    };

    for (std::size_t li = 0; li < n_layers; ++li) {
        const LayerSpec& layer = spec_.layers[li];
        const LayerParams& prm = params_[li];
        const LayerOverride* ov = have_ov ? &(*overrides)[li] : nullptr;
        const FeatureShape in = shapes_.input_shape_of(li, 0, in_shape);
        const FeatureShape out = shapes_.output_shapes[li];
        const Tensor& x = source(li, 0);
        Tensor y(batched(out, batch));

        switch (layer.kind) {
        case LayerKind::conv2d: {
            const Tensor& w = (ov && ov->weight) ? *ov->weight : prm.weight;
            kernels::conv2d_forward(conv_geometry(layer, in, batch), x.data(), w.data(), y.data());
            if (ov && ov->output_scale != 1.0) {
                for (double& v : y.data()) v *= ov->output_scale;
            }
            break;
        }
        case LayerKind::batchnorm: {
            const std::size_t c_n = in.channels, plane = in.height * in.width;
            const double count = static_cast<double>(batch * plane);
            const double in_scale = ov ? ov->input_scale : 1.0;
            std::vector<double> xhat(tape ? x.size() : 0), inv_std_all(c_n);
            if (batch_stats) (*batch_stats)[li] = {std::vector<double>(c_n), std::vector<double>(c_n)};
#pragma omp parallel for schedule(static)
            for (std::size_t c = 0; c < c_n; ++c) {
                double mean, var;
                if (mode == Mode::train) {
                    double s = 0.0;
                    for (std::size_t b = 0; b < batch; ++b) {
                        const double* px = x.data().data() + (b * c_n + c) * plane;
                        for (std::size_t p = 0; p < plane; ++p) s += in_scale * px[p];
                    }
                    mean = s / count;
                    double ss = 0.0;
                    for (std::size_t b = 0; b < batch; ++b) {
                        const double* px = x.data().data() + (b * c_n + c) * plane;
                        for (std::size_t p = 0; p < plane; ++p) {
                            const double d = in_scale * px[p] - mean;
                            ss += d * d;
                        }
                    }
                    var = ss / count;
                    if (batch_stats) {
                        (*batch_stats)[li].mean[c] = mean;
                        (*batch_stats)[li].var[c] = count > 1.0 ? ss / (count - 1.0) : var;
                    }
                } else {
                    mean = prm.running_mean[c];
                    var = prm.running_var[c];
                }
                // Negative variances can only come from round-off or a corrupt
                // checkpoint; epsilon keeps the divisor positive.
                const double inv_std = 1.0 / std::sqrt(std::max(var, 0.0) + bn_.epsilon);
                inv_std_all[c] = inv_std;
                const double g = prm.gamma[c], bt = prm.beta[c];
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t off = (b * c_n + c) * plane;
                    for (std::size_t p = 0; p < plane; ++p) {
                        const double xh = (in_scale * x[off + p] - mean) * inv_std;
                        if (tape) xhat[off + p] = xh;
                        y[off + p] = g * xh + bt;
                    }
                }
            }
            if (tape) {
                tape->bn_xhat_[li] = std::move(xhat);
                tape->bn_inv_std_[li] = std::move(inv_std_all);
            }
            break;
        }
        case LayerKind::relu:
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        case LayerKind::avgpool: {
            const std::size_t c_n = in.channels;
            const std::size_t k_h = layer.global_pool ? in.height : layer.kernel;
            const std::size_t k_w = layer.global_pool ? in.width : layer.kernel;
            const std::size_t stride = layer.global_pool ? 1 : layer.stride;
            const double inv = 1.0 / static_cast<double>(k_h * k_w);
            for (std::size_t bc = 0; bc < batch * c_n; ++bc) {
                const double* px = x.data().data() + bc * in.height * in.width;
                double* py = y.data().data() + bc * out.height * out.width;
                for (std::size_t oy = 0; oy < out.height; ++oy)
                    for (std::size_t ox = 0; ox < out.width; ++ox) {
                        double s = 0.0;
                        for (std::size_t ky = 0; ky < k_h; ++ky)
                            for (std::size_t kx = 0; kx < k_w; ++kx)
                                s += px[(oy * stride + ky) * in.width + ox * stride + kx];
                        py[oy * out.width + ox] = s * inv;
                    }
            }
            break;
        }
        case LayerKind::fc:
            kernels::fc_forward(batch, layer.in_channels, layer.out_channels, x.data(), prm.weight.data(),
                                prm.bias.data(), y.data());
            break;
        case LayerKind::softmax_xent: {
            const std::size_t f = in.numel();
            for (std::size_t b = 0; b < batch; ++b) {
                const double* px = x.data().data() + b * f;
                double* py = y.data().data() + b * f;
                const double mx = *std::max_element(px, px + f);
                double s = 0.0;
                for (std::size_t i = 0; i < f; ++i) s += (py[i] = std::exp(px[i] - mx));
                for (std::size_t i = 0; i < f; ++i) py[i] /= s;
            }
            break;
        }
        case LayerKind::residual_add:
            std::copy(x.data().begin(), x.data().end(), y.data().begin());
            for (std::size_t k = 1; k < shapes_.predecessors[li].size(); ++k) add_into(y.data(), source(li, k).data());
            break;
        }

        require_finite(y.data(), "output of layer '" + layer.id + "'");
        outputs[li] = std::move(y);
        if (!tape) {
            // Release activations whose consumers have all run.
            for (long p : shapes_.predecessors[li]) {
                if (p >= 0 && --pending[static_cast<std::size_t>(p)] == 0) outputs[static_cast<std::size_t>(p)] = Tensor();
            }
        }
    }

    Tensor result = outputs.back();
    const FeatureShape& fin = shapes_.output_shapes.back();
    if (fin.height == 1 && fin.width == 1) result.reshape({batch, fin.channels});
    if (tape) {
        tape->outputs_ = std::move(outputs);
        tape->recorded_ = true;
    }
    return result;
}

Tensor Model::infer(const Tensor& input, const Overrides* overrides) const {
    return run(input, Mode::eval, nullptr, overrides, nullptr);
}

Tensor Model::forward(const Tensor& input, Mode mode, Tape& tape, const Overrides* overrides) {
    std::vector<BatchStats> stats;
    Tensor out = run(input, mode, &tape, overrides, mode == Mode::train ? &stats : nullptr);
    if (mode == Mode::train) {
        const double mom = bn_.momentum;
        for (std::size_t li = 0; li < params_.size(); ++li) {
            if (spec_.layers[li].kind != LayerKind::batchnorm) continue;
            LayerParams& p = params_[li];
            for (std::size_t c = 0; c < p.running_mean.size(); ++c) {
                p.running_mean[c] = (1.0 - mom) * p.running_mean[c] + mom * stats[li].mean[c];
                p.running_var[c] = (1.0 - mom) * p.running_var[c] + mom * stats[li].var[c];
            }
        }
    }
    return out;
}

Tensor Model::backward(Tape& tape, const Tensor& grad_output) {
    if (!tape.recorded()) throw UsageError("backward called before a recorded forward pass");
    const std::size_t last = spec_.layers.size() - 1;
    if (grad_output.size() != tape.outputs_[last].size()) {
        throw ShapeError("gradient of network output has " + std::to_string(grad_output.size()) +
                         " values, output has " + std::to_string(tape.outputs_[last].size()));
    }
    Tensor seed(tape.outputs_[last].shape(), grad_output.values());
    return backward_from(tape, last, std::move(seed), false);
}

Tensor Model::backward_cross_entropy(Tape& tape, std::span<const int> labels) {
    if (!tape.recorded()) throw UsageError("backward called before a recorded forward pass");
    const std::size_t last = spec_.layers.size() - 1;
    if (spec_.layers[last].kind != LayerKind::softmax_xent) {
        throw UsageError("network '" + spec_.name + "' does not end in softmax-xent");
    }
    const Tensor& probs = tape.outputs_[last];
    const std::size_t batch = tape.batch_;
    if (labels.size() != batch) throw ShapeError("label count does not match batch size");
    const std::size_t f = probs.size() / batch;
    Tensor seed(probs.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= f) {
            throw ShapeError("label " + std::to_string(labels[b]) + " out of range");
        }
        for (std::size_t i = 0; i < f; ++i) {
            seed[b * f + i] = (probs[b * f + i] - (static_cast<std::size_t>(labels[b]) == i ? 1.0 : 0.0)) /
                              static_cast<double>(batch);
        }
    }
    return backward_from(tape, last, std::move(seed), true);
}

Tensor Model::backward_from(Tape& tape, std::size_t seed_layer, Tensor seed, bool skip_last) {
    const std::size_t n_layers = spec_.layers.size();
    const std::size_t batch = tape.batch_;
    const Overrides* overrides = tape.overrides_;
    const bool have_ov = overrides && !overrides->empty();
    std::vector<Tensor> grads(n_layers);
    Tensor grad_input(tape.input_.shape());

    auto accumulate = [&](std::size_t li, std::size_t k, std::span<const double> g) {
        const long p = shapes_.predecessors[li][k];
        if (p < 0) {
            add_into(grad_input.data(), g);
            return;
        }
        Tensor& dst = grads[static_cast<std::size_t>(p)];
        if (dst.empty()) dst = Tensor(tape.outputs_[static_cast<std::size_t>(p)].shape());
        add_into(dst.data(), g);
    };
    auto source = [&](std::size_t li, std::size_t k) -> const Tensor& {
        const long p = shapes_.predecessors[li][k];
        return p < 0 ? tape.input_ : tape.outputs_[static_cast<std::size_t>(p)];
    };

    if (skip_last) {
        accumulate(seed_layer, 0, seed.data());
    } else {
        grads[seed_layer] = std::move(seed);
    }

    for (std::size_t li = n_layers; li-- > 0;) {
        if (grads[li].empty()) continue;
        const LayerSpec& layer = spec_.layers[li];
        LayerParams& prm = params_[li];
        const LayerOverride* ov = have_ov ? &(*overrides)[li] : nullptr;
        const FeatureShape in = shapes_.input_shape_of(li, 0, spec_.input);
        const FeatureShape out = shapes_.output_shapes[li];
        const Tensor& dy = grads[li];
        const Tensor& x = source(li, 0);
        std::vector<double> dx(x.size(), 0.0);

        switch (layer.kind) {
        case LayerKind::conv2d: {
            const ConvGeometry g = conv_geometry(layer, in, batch);
            const Tensor& w = (ov && ov->weight) ? *ov->weight : prm.weight;
            std::vector<double> dys;
            std::span<const double> dyv = dy.data();
            if (ov && ov->output_scale != 1.0) {
                dys.assign(dy.data().begin(), dy.data().end());
                for (double& v : dys) v *= ov->output_scale;
                dyv = dys;
            }
            std::vector<double> dw(prm.weight.size());
            kernels::conv2d_backward_weight(g, x.data(), dyv, dw);
            if (ov && ov->grad_mask) {
                for (std::size_t i = 0; i < dw.size(); ++i) dw[i] *= (*ov->grad_mask)[i];
            }
            add_into(prm.weight.grad(), dw);
            kernels::conv2d_backward_data(g, w.data(), dyv, dx);
            break;
        }
        case LayerKind::batchnorm: {
            const std::size_t c_n = in.channels, plane = in.height * in.width;
            const double count = static_cast<double>(batch * plane);
            const double in_scale = ov ? ov->input_scale : 1.0;
            const auto& xhat = tape.bn_xhat_[li];
            const auto& inv_std = tape.bn_inv_std_[li];
            auto dgamma = prm.gamma.grad();
            auto dbeta = prm.beta.grad();
            for (std::size_t c = 0; c < c_n; ++c) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t off = (b * c_n + c) * plane;
                    for (std::size_t p = 0; p < plane; ++p) {
                        sum_dy += dy[off + p];
                        sum_dy_xhat += dy[off + p] * xhat[off + p];
                    }
                }
                dgamma[c] += sum_dy_xhat;
                dbeta[c] += sum_dy;
                const double g = prm.gamma[c];
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t off = (b * c_n + c) * plane;
                    for (std::size_t p = 0; p < plane; ++p) {
                        double d;
                        if (tape.mode_ == Mode::train) {
                            d = g * inv_std[c] *
                                (dy[off + p] - sum_dy / count - xhat[off + p] * sum_dy_xhat / count);
                        } else {
                            d = g * inv_std[c] * dy[off + p];
                        }
                        dx[off + p] = in_scale * d;
                    }
                }
            }
            break;
        }
        case LayerKind::relu:
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
            break;
        case LayerKind::avgpool: {
            const std::size_t k_h = layer.global_pool ? in.height : layer.kernel;
            const std::size_t k_w = layer.global_pool ? in.width : layer.kernel;
            const std::size_t stride = layer.global_pool ? 1 : layer.stride;
            const double inv = 1.0 / static_cast<double>(k_h * k_w);
            for (std::size_t bc = 0; bc < batch * in.channels; ++bc) {
                double* pdx = dx.data() + bc * in.height * in.width;
                const double* pdy = dy.data().data() + bc * out.height * out.width;
                for (std::size_t oy = 0; oy < out.height; ++oy)
                    for (std::size_t ox = 0; ox < out.width; ++ox) {
                        const double v = pdy[oy * out.width + ox] * inv;
                        for (std::size_t ky = 0; ky < k_h; ++ky)
                            for (std::size_t kx = 0; kx < k_w; ++kx)
                                pdx[(oy * stride + ky) * in.width + ox * stride + kx] += v;
                    }
            }
            break;
        }
        case LayerKind::fc: {
            std::vector<double> dw(prm.weight.size()), db(prm.bias.size());
            kernels::fc_backward(batch, layer.in_channels, layer.out_channels, x.data(), prm.weight.data(),
                                 dy.data(), dx, dw, db);
            add_into(prm.weight.grad(), dw);
            add_into(prm.bias.grad(), db);
            break;
        }
        case LayerKind::softmax_xent: {
            const Tensor& p = tape.outputs_[li];
            const std::size_t f = in.numel();
            for (std::size_t b = 0; b < batch; ++b) {
                double dot = 0.0;
                for (std::size_t i = 0; i < f; ++i) dot += dy[b * f + i] * p[b * f + i];
                for (std::size_t i = 0; i < f; ++i) dx[b * f + i] = p[b * f + i] * (dy[b * f + i] - dot);
            }
            break;
        }
        case LayerKind::residual_add:
            for (std::size_t k = 0; k < shapes_.predecessors[li].size(); ++k) accumulate(li, k, dy.data());
            grads[li] = Tensor();
            continue;
        }
        require_finite(dx, "gradient entering layer '" + layer.id + "'");
        accumulate(li, 0, dx);
        grads[li] = Tensor();
    }

    for (const Tensor* t : trainable_tensors()) {
        if (t->has_grad()) require_finite(t->grad(), "parameter gradient");
    }
    return grad_input;
}

void Model::zero_grad() {
    for (Tensor* t : trainable_tensors()) t->zero_grad();
}

std::vector<Tensor*> Model::trainable_tensors() {
    std::vector<Tensor*> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        LayerParams& p = params_[i];
        for (Tensor* t : {&p.weight, &p.bias, &p.gamma, &p.beta})
            if (!t->empty()) out.push_back(t);
    }
    return out;
}

std::vector<const Tensor*> Model::trainable_tensors() const {
    std::vector<const Tensor*> out;
    for (const LayerParams& p : params_) {
        for (const Tensor* t : {&p.weight, &p.bias, &p.gamma, &p.beta})
            if (!t->empty()) out.push_back(t);
    }
    return out;
}

std::uint64_t Model::weights_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Tensor* t : trainable_tensors()) h = hash_values(t->data(), h);
    return h;
}

std::uint64_t Model::state_hash() const {
    std::uint64_t h = weights_hash();
    for (const LayerParams& p : params_) {
        h = hash_values(p.running_mean.data(), h);
        h = hash_values(p.running_var.data(), h);
    }
    return h;
}

double cross_entropy(const Tensor& probabilities, std::span<const int> labels) {
    if (labels.empty()) throw ShapeError("cross_entropy: no labels");
    const std::size_t batch = labels.size();
    if (probabilities.size() % batch != 0) throw ShapeError("cross_entropy: probabilities do not match batch");
    const std::size_t f = probabilities.size() / batch;
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        loss -= std::log(std::max(probabilities[b * f + static_cast<std::size_t>(labels[b])], 1e-300));
    }
    return loss / static_cast<double>(batch);
}

std::vector<int> argmax_rows(const Tensor& scores) {
    if (scores.rank() == 0 || scores.dim(0) == 0) return {};
    const std::size_t batch = scores.dim(0);
    const std::size_t f = scores.size() / batch;
    std::vector<int> out(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto row = scores.data().subspan(b * f, f);
        out[b] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double accuracy(const Tensor& scores, std::span<const int> labels) {
    const auto pred = argmax_rows(scores);
    if (pred.size() != labels.size()) throw ShapeError("accuracy: label count mismatch");
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == labels[i];
    return pred.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(pred.size());
}

} // namespace rramft
