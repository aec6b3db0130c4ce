#pragma once

#include <stdexcept>
#include <vector>

#include "sider/tensor.hpp"

namespace sider {

// Variance schedule: beta_1..beta_T and cumulative alpha_bar_t = prod(1-beta_i).
// alpha_bar(0) is defined as 1 so the final denoising step lands on a clean
// latent.
struct NoiseSchedule {
    int T = 0;
    std::vector<real> beta;       // index 0 -> beta_1
    std::vector<real> alpha_bar;  // index 0 -> alpha_bar_1

    real abar(int t) const {  // t in [0, T]
        if (t < 0 || t > T) throw std::out_of_range("schedule: t out of range");
        return t == 0 ? 1.0 : alpha_bar[(size_t)(t - 1)];
    }
};

inline NoiseSchedule make_schedule(int T, real beta_min, real beta_max) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
        throw std::invalid_argument("make_schedule: need 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize((size_t)T);
    s.alpha_bar.resize((size_t)T);
    real prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[(size_t)t] = (T == 1) ? beta_min : beta_min + (beta_max - beta_min) * t / (real)(T - 1);
        prod *= 1.0 - s.beta[(size_t)t];
        s.alpha_bar[(size_t)t] = prod;
    }
    return s;
}

// strength in (0,1] -> starting timestep round(strength*T), clamped to [1,T]
inline int strength_to_t_start(real strength, int T) {
    if (!(strength > 0.0 && strength <= 1.0)) throw std::invalid_argument("strength must be in (0,1]");
    int t = (int)std::lround(strength * T);
    return std::min(std::max(t, 1), T);
}

}  // namespace sider
