#include "spcut/tensor.hpp"

#include <cmath>
#include <sstream>

#include "spcut/errors.hpp"

namespace spcut {

namespace {
std::size_t checked_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw StructuralError("tensor dimension must be non-negative");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}
} // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), v_(checked_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), v_(std::move(values)) {
    if (checked_numel(shape_) != v_.size())
        throw StructuralError("tensor data length does not match shape " + shape_string());
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

void Tensor::fill(double value) {
    for (double& x : v_) x = value;
}

void Tensor::add(const Tensor& other) {
    if (!same_shape(other))
        throw StructuralError("tensor add: shape mismatch " + shape_string() + " vs " + other.shape_string());
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += other.v_[i];
}

void Tensor::scale(double s) {
    for (double& x : v_) x *= s;
}

bool Tensor::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ", ";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

void check_finite(const Tensor& t, const std::string& what) {
    if (!t.all_finite()) throw NumericError("non-finite values in " + what);
}

double dot(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw StructuralError("dot: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    double s = 0.0;
    for (long long i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace spcut
