#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bae {

/// Dimension sizes, outermost first. Batched tensors carry the batch as dim 0.
using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Shape contract violated (layer wiring, batch layout, loss operands).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Same data, new shape; element counts must agree.
    Tensor reshaped(Shape shape) const;

    /// Copy of rows [begin, end) along dim 0.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;
    /// Row i along dim 0, without the leading dim.
    Tensor row(std::size_t i) const;
    /// Gathers rows along dim 0 in the given order.
    Tensor gather_rows(std::span<const std::size_t> indices) const;
    /// Elements per dim-0 row.
    std::size_t row_size() const;

    void fill(double value);
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Prepends a batch dimension of 1.
Tensor as_batch(const Tensor& sample);

}  // namespace bae
