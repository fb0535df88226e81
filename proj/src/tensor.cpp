#include "rramft/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "rramft/error.hpp"

namespace rramft {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) n *= extent;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + shape_to_string(shape_) + " holds " +
                         std::to_string(shape_numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
    }
}

void Tensor::fill(double value) {
    std::fill(data_.begin(), data_.end(), value);
}

void Tensor::reshape(Shape shape) {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                         shape_to_string(shape));
    }
    shape_ = std::move(shape);
}

std::span<double> Tensor::grad() {
    if (!grad_) grad_.emplace(data_.size(), 0.0);
    return *grad_;
}

std::span<const double> Tensor::grad() const {
    if (!grad_) throw UsageError("tensor has no gradient buffer");
    return *grad_;
}

void Tensor::zero_grad() {
    if (!grad_) {
        grad_.emplace(data_.size(), 0.0);
    } else {
        std::fill(grad_->begin(), grad_->end(), 0.0);
    }
}

void require_finite(std::span<const double> values, std::string_view what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError("non-finite value " + std::to_string(values[i]) + " at index " +
                               std::to_string(i) + " in " + std::string(what));
        }
    }
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

std::uint64_t hash_values(std::span<const double> values, std::uint64_t seed) {
    std::uint64_t h = seed;
    const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
    for (std::size_t i = 0; i < values.size_bytes(); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace rramft
