#ifndef MVANET_TENSOR_HPP
#define MVANET_TENSOR_HPP

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvanet {

using Index = std::int64_t;

// Dense row-major double tensor. Value semantics; rank is dynamic.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<Index> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}
    Tensor(std::vector<Index> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<Index>(data_.size()) != checked_numel(shape_))
            throw std::invalid_argument("tensor data size does not match shape");
    }

    static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<Index> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<Index>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    Index dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    Index numel() const { return static_cast<Index>(data_.size()); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

    // 4-axis convenience accessors (batch, channels, height, width).
    double& at4(Index b, Index c, Index y, Index x) {
        return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }
    double at4(Index b, Index c, Index y, Index x) const {
        return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }
    // 3-axis accessor for token sequences (token, batch, channels).
    double& at3(Index n, Index b, Index c) {
        return data_[static_cast<std::size_t>((n * shape_[1] + b) * shape_[2] + c)];
    }
    double at3(Index n, Index b, Index c) const {
        return data_[static_cast<std::size_t>((n * shape_[1] + b) * shape_[2] + c)];
    }

    Tensor reshaped(std::vector<Index> new_shape) const {
        Tensor out(std::move(new_shape), data_);
        return out;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

private:
    static Index checked_numel(const std::vector<Index>& shape) {
        Index n = 1;
        for (Index d : shape) {
            if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
            n *= d;
        }
        return n;
    }

    std::vector<Index> shape_;
    std::vector<double> data_;
};

} // namespace mvanet

#endif
