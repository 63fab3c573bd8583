// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace maven {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles. Images are stored NHWC.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    /// Number of rows when viewed as (dim0, everything else).
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t row_size() const { return rows() == 0 ? 0 : data_.size() / rows(); }
    std::span<double> row(std::size_t r) { return {data_.data() + r * row_size(), row_size()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * row_size(), row_size()}; }

    Tensor reshaped(Shape shape) const;
    void reshape(Shape shape);
    void fill(double v);

    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double s);

    /// Rows [begin, end) along axis 0.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;
    /// Rows at the given indices along axis 0.
    Tensor gather_rows(std::span<const std::size_t> indices) const;

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Stack equally-shaped tensors along a new leading axis of size 1 each (concatenate rows).
Tensor concat_rows(std::span<const Tensor> parts);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void require_shape(const Tensor& t, const Shape& expected, const std::string& what);

}  // namespace maven
