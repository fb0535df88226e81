#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rramft {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer of the
/// same shape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    void fill(double value);
    // Reinterprets the extents; the element count must not change.
    void reshape(Shape shape);

    bool has_grad() const noexcept { return grad_.has_value(); }
    // Allocates a zeroed gradient buffer on first use.
    std::span<double> grad();
    std::span<const double> grad() const;
    void zero_grad();
    void drop_grad() noexcept { grad_.reset(); }

private:
    Shape shape_;
    std::vector<double> data_;
    std::optional<std::vector<double>> grad_;
};

// Throws NumericError naming `what` if any value is NaN or infinite.
void require_finite(std::span<const double> values, std::string_view what);

bool bitwise_equal(std::span<const double> a, std::span<const double> b);

// FNV-1a over the raw bytes of the values.
std::uint64_t hash_values(std::span<const double> values, std::uint64_t seed = 0xcbf29ce484222325ULL);

} // namespace rramft
