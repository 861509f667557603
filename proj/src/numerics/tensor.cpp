#include "plad/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace plad::num {

std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
    for (auto d : shape) {
        if (d == 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_string(shape));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    values_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape(shape_);
    if (shape_product(shape_) != values_.size()) {
        throw std::invalid_argument("tensor of shape " + shape_string(shape_) + " cannot hold " +
                                    std::to_string(values_.size()) + " values");
    }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::rows() const noexcept {
    if (shape_.size() < 2) return shape_.empty() ? 0 : 1;
    return shape_[0];
}

std::size_t Tensor::cols() const noexcept {
    if (shape_.empty()) return 0;
    return shape_.size() < 2 ? shape_[0] : shape_[1];
}

double Tensor::item() const {
    if (values_.size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_string(shape_));
    return values_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) noexcept { std::fill(values_.begin(), values_.end(), v); }

std::vector<double> log_softmax_temperature(std::span<const double> logits, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("softmax temperature must be positive");
    if (logits.empty()) throw std::invalid_argument("softmax over an empty vector");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp((z - mx) / gamma);
    const double lse = std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = (logits[i] - mx) / gamma - lse;
    return out;
}

std::vector<double> softmax_temperature(std::span<const double> logits, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("softmax temperature must be positive");
    if (logits.empty()) throw std::invalid_argument("softmax over an empty vector");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / gamma);
        sum += out[i];
    }
    for (double& p : out) p /= sum;
    return out;
}

Tensor softmax_temperature(const Tensor& logits, double gamma) {
    Tensor out(logits.shape());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto p = softmax_temperature(logits.row(r), gamma);
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
}

}  // namespace plad::num
