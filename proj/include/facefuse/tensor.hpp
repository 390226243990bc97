#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "facefuse/errors.hpp"

namespace facefuse {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles. The single value type of the numeric
/// core; both training and the oracle suites run at 64-bit.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<Real> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, Real value);
    static Tensor scalar(Real value);  // rank-1, extent-1

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }
    std::vector<Real>& values() { return data_; }
    const std::vector<Real>& values() const { return data_; }

    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }

    Real& operator()(std::size_t i, std::size_t j);
    Real operator()(std::size_t i, std::size_t j) const;
    Real& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
    Real operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

    bool all_finite() const;

private:
    Shape shape_;
    std::vector<Real> data_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);

/// Throws NumericError naming `op` if any value is NaN or Inf.
void ensure_finite(const Tensor& t, const char* op);

Tensor random_normal(Shape shape, Real stddev, std::mt19937_64& rng);
Tensor random_uniform(Shape shape, Real lo, Real hi, std::mt19937_64& rng);

}  // namespace facefuse
