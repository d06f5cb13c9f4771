#include "pfedmoe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pfedmoe {

std::int64_t shape_size(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        require(d > 0, "shape", "tensor dims must be positive");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_size(shape_)), real(0)) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<real> data) : shape_(std::move(shape)) {
    require(shape_size(shape_) == static_cast<std::int64_t>(data.size()), "shape",
            "tensor data length does not match shape");
    data_ = std::move(data);
}

Tensor Tensor::full(std::vector<std::int64_t> shape, real v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

void Tensor::fill(real v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (real v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ',';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

void check_finite(const Tensor& t, const std::string& where) {
    if (!t.all_finite()) fail("non_finite", "non-finite value in " + where);
}

}  // namespace pfedmoe
