#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace microseg {

// Dense row-major tensor of doubles. Shapes are small (desk-scale), so no
// views or strides; indexing helpers cover the ranks we actually use.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(count(shape), 0.0);
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::initializer_list<std::size_t> s) {
        return Tensor(std::vector<std::size_t>(s));
    }

    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // rank-2
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    // rank-3
    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * shape[1] + y) * shape[2] + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * shape[1] + y) * shape[2] + x];
    }

    // rank-4
    double& at(std::size_t o, std::size_t i, std::size_t y, std::size_t x) {
        return data[((o * shape[1] + i) * shape[2] + y) * shape[3] + x];
    }
    double at(std::size_t o, std::size_t i, std::size_t y, std::size_t x) const {
        return data[((o * shape[1] + i) * shape[2] + y) * shape[3] + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void add_scaled(const Tensor& o, double a) {
        if (!same_shape(o)) throw std::invalid_argument("tensor shape mismatch in add_scaled");
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += a * o.data[i];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace microseg
