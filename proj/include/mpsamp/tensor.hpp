#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

#include "mpsamp/errors.hpp"

namespace mpsamp {

using cdouble = std::complex<double>;

// Dense row-major complex tensor. Values live in double precision containers;
// reduced-precision behavior is realized by rounding values onto the target
// grid (see precision.hpp), not by narrower storage.
class ComplexTensor {
  public:
    ComplexTensor() = default;

    explicit ComplexTensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_)) {}

    ComplexTensor(std::vector<std::size_t> shape, std::vector<cdouble> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size()) {
            throw DimensionError("tensor data length does not match shape");
        }
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }

    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    cdouble* data() { return data_.data(); }
    const cdouble* data() const { return data_.data(); }
    std::span<cdouble> values() { return data_; }
    std::span<const cdouble> values() const { return data_; }

    cdouble& operator[](std::size_t flat) { return data_[flat]; }
    const cdouble& operator[](std::size_t flat) const { return data_[flat]; }

    cdouble& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const cdouble& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    cdouble& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const cdouble& at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const ComplexTensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const cdouble& v : data_) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        }
        return true;
    }

  private:
    std::vector<std::size_t> shape_;
    std::vector<cdouble> data_;
};

// max(|Re|, |Im|) — the magnitude measure used by the scaling pipeline.
inline double component_mag(cdouble v) {
    double re = std::abs(v.real());
    double im = std::abs(v.imag());
    return re > im ? re : im;
}

}  // namespace mpsamp
