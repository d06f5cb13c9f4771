#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfedmoe/error.hpp"

namespace pfedmoe {

#ifdef PFEDMOE_FLOAT32
using real = float;
#else
using real = double;
#endif

// Dense n-dimensional row-major array. The single value type used for
// samples, activations, parameters and gradients.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, std::vector<real> data);

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::int64_t> shape, real v);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    std::vector<real>& values() { return data_; }
    const std::vector<real>& values() const { return data_; }

    real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    real operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // 2-D and 4-D accessors for the shapes the layers use
    real& at2(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    real at2(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    real& at4(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
        return data_[static_cast<std::size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }
    real at4(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
        return data_[static_cast<std::size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }

    void fill(real v);
    void zero() { fill(real(0)); }

    bool all_finite() const;

    std::string shape_str() const;

private:
    std::vector<std::int64_t> shape_;
    std::vector<real> data_;
};

std::int64_t shape_size(const std::vector<std::int64_t>& shape);

// Throws Error{"non_finite"} naming `where` if any value is NaN/Inf.
void check_finite(const Tensor& t, const std::string& where);

}  // namespace pfedmoe
