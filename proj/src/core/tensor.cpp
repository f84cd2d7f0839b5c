#include "tensor.hpp"

#include <cmath>
#include <sstream>

namespace ivusseg {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0)
            throw DimError("tensor shape axes must be positive, got " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw DimError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str());
}

Tensor Tensor::scalar(double v) {
    return Tensor({1}, {v});
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

int Tensor::dim(int axis) const {
    if (axis < 0 || axis >= rank())
        throw DimError("axis " + std::to_string(axis) + " out of range for rank " +
                       std::to_string(rank()) + " tensor");
    return shape_[axis];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    if (a.same_shape(b)) return;
    static const char* names[] = {"batch", "channel", "height", "width"};
    std::string axis = "rank";
    if (a.rank() == b.rank()) {
        for (int i = 0; i < a.rank(); ++i) {
            if (a.shape()[i] != b.shape()[i]) {
                axis = (a.rank() == 4 && i < 4) ? names[i] : "axis " + std::to_string(i);
                break;
            }
        }
    }
    throw DimError(what + ": shape mismatch on " + axis + ", " + a.shape_str() +
                   " vs " + b.shape_str());
}

} // namespace ivusseg
