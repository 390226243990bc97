#include "facefuse/tensor.hpp"

#include <cmath>
#include <sstream>

namespace facefuse {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    for (std::size_t e : shape_) {
        if (e == 0) throw DimensionError("tensor extent must be positive, got shape " + shape_str(shape_));
    }
    data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (std::size_t e : shape_) {
        if (e == 0) throw DimensionError("tensor extent must be positive, got shape " + shape_str(shape_));
    }
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::full(Shape shape, Real value) {
    Tensor t(std::move(shape));
    for (Real& v : t.data_) v = value;
    return t;
}

Tensor Tensor::scalar(Real value) {
    return Tensor({1}, {value});
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    }
    return shape_[axis];
}

Real& Tensor::operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
}

Real Tensor::operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
}

Real& Tensor::operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

Real Tensor::operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

bool Tensor::all_finite() const {
    for (Real v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    const Real* pa = a.data();
    const Real* pb = b.data();
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (pa[i] != pb[i] || std::signbit(pa[i]) != std::signbit(pb[i])) return false;
    }
    return true;
}

void ensure_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) {
        throw NumericError(std::string(op) + " produced a non-finite value");
    }
}

Tensor random_normal(Shape shape, Real stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<Real> dist(0.0, stddev);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

Tensor random_uniform(Shape shape, Real lo, Real hi, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<Real> dist(lo, hi);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

}  // namespace facefuse
