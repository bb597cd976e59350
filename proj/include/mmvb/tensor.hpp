#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmvb {

/// Error raised when operand shapes do not conform to a primitive's
/// contract. Carries the primitive name and the offending shapes.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Error raised when an operation produces a non-finite value.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

/// Dense row-major array of 64-bit floats. Rank 0 denotes a scalar
/// (one element, empty shape).
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);

    const Shape& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(v_.size()); }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& vec() { return v_; }
    const std::vector<double>& vec() const { return v_; }

    double& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

    // 2-d accessors; only valid for rank-2 tensors.
    double& at(int64_t r, int64_t c) { return v_[static_cast<size_t>(r * shape_[1] + c)]; }
    double at(int64_t r, int64_t c) const { return v_[static_cast<size_t>(r * shape_[1] + c)]; }

    double item() const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

  private:
    Shape shape_;
    std::vector<double> v_;
};

Tensor tensor_from(const std::vector<double>& v);

}  // namespace mmvb
