#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace spcut {

/// Dense row-major tensor of 64-bit reals. 4-D tensors are laid out as
/// (batch, channels, height, width); 2-D tensors as (rows, cols).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value);

    int dim() const { return static_cast<int>(shape_.size()); }
    int size(int d) const { return shape_[static_cast<std::size_t>(d)]; }
    const std::vector<int>& shape() const { return shape_; }
    long long numel() const { return static_cast<long long>(v_.size()); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    double& operator[](long long i) { return v_[static_cast<std::size_t>(i)]; }
    double operator[](long long i) const { return v_[static_cast<std::size_t>(i)]; }

    // 2-D access
    double& at(int r, int c) { return v_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    double at(int r, int c) const { return v_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    // 4-D access
    double& at(int n, int c, int y, int x) {
        return v_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    double at(int n, int c, int y, int x) const {
        return v_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    void fill(double value);
    void zero() { fill(0.0); }

    /// Elementwise in-place add; shapes must match.
    void add(const Tensor& other);
    void scale(double s);

    bool all_finite() const;
    std::string shape_string() const;

private:
    std::vector<int> shape_;
    std::vector<double> v_;
};

/// Throws NumericError naming `what` if any entry is non-finite.
void check_finite(const Tensor& t, const std::string& what);

double dot(const Tensor& a, const Tensor& b);

} // namespace spcut
