#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace sider {

using real = double;

// Dense row-major tensor. Shapes used in this project are {n} vectors,
// {C,H,W} feature maps and {Co,Ci,Kh,Kw} conv kernels.
struct Tensor {
    std::vector<int> shape;
    std::vector<real> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0) {}
    Tensor(std::vector<int> s, std::vector<real> d) : shape(std::move(s)), data(std::move(d)) {
        if ((size_t)count(shape) != data.size()) throw std::invalid_argument("tensor: shape/data mismatch");
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor: nonpositive dim");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, real v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(real v) { return Tensor({1}, {v}); }

    int64_t size() const { return (int64_t)data.size(); }
    int dim(int i) const { return shape[(size_t)i]; }
    int ndim() const { return (int)shape.size(); }

    real& operator[](int64_t i) { return data[(size_t)i]; }
    real operator[](int64_t i) const { return data[(size_t)i]; }

    // {C,H,W} accessor
    real& at3(int c, int y, int x) {
        return data[(size_t)((int64_t)(c * shape[1] + y) * shape[2] + x)];
    }
    real at3(int c, int y, int x) const {
        return data[(size_t)((int64_t)(c * shape[1] + y) * shape[2] + x)];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
        return s + "]";
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace sider
