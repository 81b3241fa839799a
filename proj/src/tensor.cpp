#include "hydrodeep/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hydrodeep {

std::size_t Tensor::element_count(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

static void check_dims(const std::vector<std::size_t>& dims) {
    if (dims.empty()) {
        throw std::invalid_argument("tensor dims must not be empty");
    }
    for (std::size_t d : dims) {
        if (d == 0) {
            throw std::invalid_argument("tensor dims must be positive, got 0 in " +
                                        shape_string(dims));
        }
    }
}

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    check_dims(dims_);
    values_.assign(element_count(dims_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
    check_dims(dims_);
    if (values_.size() != element_count(dims_)) {
        throw std::invalid_argument("tensor value count " + std::to_string(values_.size()) +
                                    " does not match shape " + shape_string(dims_));
    }
    check_finite(values_, "tensor values");
}

void Tensor::reset(std::vector<std::size_t> dims) {
    check_dims(dims);
    dims_ = std::move(dims);
    values_.resize(element_count(dims_));
}

void Tensor::reset_zero(std::vector<std::size_t> dims) {
    check_dims(dims);
    dims_ = std::move(dims);
    values_.assign(element_count(dims_), 0.0);
}

void Tensor::fill(double v) {
    for (double& x : values_) x = v;
}

std::string shape_string(const std::vector<std::size_t>& dims) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) out << " x ";
        out << dims[i];
    }
    out << "]";
    return out.str();
}

void check_finite(std::span<const double> values, const std::string& what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw std::invalid_argument(what + ": non-finite value at index " +
                                        std::to_string(i));
        }
    }
}

}  // namespace hydrodeep
