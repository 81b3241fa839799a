#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hydrodeep {

/// Dense row-major tensor of 64-bit floats.
///
/// Construction from externally supplied values rejects NaN/Inf and
/// dimension/value-count mismatches. Kernels that fill tensors from
/// already-validated numerics use the dims-only constructor plus data().
class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor of the given shape. Every dim must be >= 1.
    explicit Tensor(std::vector<std::size_t> dims);

    /// Tensor from external values; validates length and finiteness.
    Tensor(std::vector<std::size_t> dims, std::vector<double> values);

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t rank() const { return dims_.size(); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

    /// Reshape in place without zeroing; reuses capacity. Contents are
    /// unspecified afterwards and must be fully overwritten by the caller.
    void reset(std::vector<std::size_t> dims);

    /// Reshape in place and zero-fill.
    void reset_zero(std::vector<std::size_t> dims);

    void fill(double v);

    static std::size_t element_count(const std::vector<std::size_t>& dims);

private:
    std::vector<std::size_t> dims_;
    std::vector<double> values_;
};

/// "[2 x 7]" style shape string for error messages.
std::string shape_string(const std::vector<std::size_t>& dims);

/// Throws std::invalid_argument naming `what` if any entry is NaN/Inf.
void check_finite(std::span<const double> values, const std::string& what);

}  // namespace hydrodeep
