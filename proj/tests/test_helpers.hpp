#pragma once

#include <cmath>
#include <functional>

#include "sider/rng.hpp"
#include "sider/tensor.hpp"

namespace sider::testing {

// central finite differences of a scalar-valued function at x
inline Tensor numeric_grad(const std::function<real(const Tensor&)>& f, const Tensor& x,
                           real h = 1e-6) {
    Tensor g(x.shape);
    Tensor probe = x;
    for (int64_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        real fp = f(probe);
        probe[i] = x[i] - h;
        real fm = f(probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (2 * h);
    }
    return g;
}

inline real max_abs_diff(const Tensor& a, const Tensor& b) {
    real m = 0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline real max_rel_err(const Tensor& got, const Tensor& want, real floor = 1e-8) {
    real m = 0;
    for (int64_t i = 0; i < got.size(); ++i) {
        real denom = std::max(std::fabs(want[i]), floor);
        m = std::max(m, std::fabs(got[i] - want[i]) / denom);
    }
    return m;
}

inline real linf(const Tensor& a) {
    real m = 0;
    for (real v : a.data) m = std::max(m, std::fabs(v));
    return m;
}

}  // namespace sider::testing
