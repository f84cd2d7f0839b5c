#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"

namespace ivusseg {

// Dense N-dimensional array of doubles in row-major order. Images use the
// canonical 4-axis layout (batch, channels, height, width); biases and
// scalars are 1-axis.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);  // zero-filled
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const;
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 4-axis accessors; only valid for rank-4 tensors.
    double& at(int n, int c, int y, int x) {
        return data_[offset4(n, c, y, x)];
    }
    double at(int n, int c, int y, int x) const {
        return data_[offset4(n, c, y, x)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double v);

    std::string shape_str() const;

private:
    std::size_t offset4(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

// Throws DimError naming `what` if the shapes differ; `axis_names` is used
// to point at the first differing axis.
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

std::size_t shape_numel(const std::vector<int>& shape);

} // namespace ivusseg
