// SPDX-License-Identifier: Apache-2.0
#include "maven/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace maven {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_numel(shape_)) {
        throw ShapeError("tensor: " + std::to_string(data_.size()) + " values do not fit shape " +
                         shape_to_string(shape_));
    }
}

Tensor Tensor::reshaped(Shape shape) const {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
}

void Tensor::reshape(Shape shape) {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    shape_ = std::move(shape);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.data_.size() != data_.size()) {
        throw ShapeError("add: " + shape_to_string(shape_) + " vs " + shape_to_string(other.shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows()) throw ShapeError("slice_rows out of range");
    Shape s = shape_;
    s[0] = end - begin;
    const std::size_t rs = row_size();
    std::vector<double> v(data_.begin() + static_cast<std::ptrdiff_t>(begin * rs),
                          data_.begin() + static_cast<std::ptrdiff_t>(end * rs));
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
    Shape s = shape_;
    s[0] = indices.size();
    Tensor out(s);
    const std::size_t rs = row_size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows()) throw ShapeError("gather_rows index out of range");
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * rs), rs,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(i * rs));
    }
    return out;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) return {};
    Shape s = parts.front().shape();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        Shape a = p.shape();
        if (a.size() != s.size() || !std::equal(a.begin() + 1, a.end(), s.begin() + 1)) {
            throw ShapeError("concat_rows: incompatible shapes");
        }
        rows += p.rows();
    }
    s[0] = rows;
    std::vector<double> v;
    v.reserve(shape_numel(s));
    for (const auto& p : parts) v.insert(v.end(), p.storage().begin(), p.storage().end());
    return Tensor(std::move(s), std::move(v));
}

void require_shape(const Tensor& t, const Shape& expected, const std::string& what) {
    if (t.shape() != expected) {
        throw ShapeError(what + ": expected shape " + shape_to_string(expected) + ", got " +
                         shape_to_string(t.shape()));
    }
}

}  // namespace maven
