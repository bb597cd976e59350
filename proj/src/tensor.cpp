#include "mmvb/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mmvb {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    v_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), v_(std::move(values)) {
    if (shape_numel(shape_) != static_cast<int64_t>(v_.size()))
        throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match " +
                         std::to_string(v_.size()) + " values");
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.v_) x = v;
    return t;
}

double Tensor::item() const {
    if (v_.size() != 1)
        throw ShapeError("item: tensor with shape " + shape_str(shape_) + " is not a scalar");
    return v_[0];
}

bool Tensor::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

Tensor tensor_from(const std::vector<double>& v) {
    return Tensor({static_cast<int64_t>(v.size())}, v);
}

}  // namespace mmvb
