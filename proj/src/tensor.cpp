#include "bae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace bae {

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + to_string(shape_) + " holds " +
                         std::to_string(element_count(shape_)) + " elements, got " +
                         std::to_string(data_.size()));
    }
}

Tensor Tensor::reshaped(Shape shape) const {
    if (element_count(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

std::size_t Tensor::row_size() const {
    if (shape_.empty()) throw ShapeError("row access on a rank-0 tensor");
    return shape_[0] == 0 ? 0 : data_.size() / shape_[0];
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || begin > end || end > shape_[0]) {
        throw ShapeError("row slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + to_string(shape_));
    }
    const std::size_t stride = row_size();
    Shape out = shape_;
    out[0] = end - begin;
    return Tensor(std::move(out),
                  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                      data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

Tensor Tensor::row(std::size_t i) const {
    Tensor r = slice_rows(i, i + 1);
    return r.reshaped(Shape(shape_.begin() + 1, shape_.end()));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
    const std::size_t stride = row_size();
    Shape out = shape_;
    out[0] = indices.size();
    std::vector<double> buf(indices.size() * stride);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= shape_[0]) {
            throw ShapeError("row index " + std::to_string(indices[r]) + " out of range for " +
                             to_string(shape_));
        }
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[r] * stride), stride,
                    buf.begin() + static_cast<std::ptrdiff_t>(r * stride));
    }
    return Tensor(std::move(out), std::move(buf));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor as_batch(const Tensor& sample) {
    Shape s;
    s.reserve(sample.rank() + 1);
    s.push_back(1);
    s.insert(s.end(), sample.shape().begin(), sample.shape().end());
    return sample.reshaped(std::move(s));
}

}  // namespace bae
