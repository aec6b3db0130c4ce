#include "sider/wavelet.hpp"

#include <stdexcept>

namespace sider {

Tensor dwt_stack(const Tensor& image) {
    Graph g;
    return g.dwt2(g.constant(image))->value;
}

Tensor idwt_stack(const Tensor& stacked) {
    Graph g;
    return g.idwt2(g.constant(stacked))->value;
}

Tensor planes_stack(const WaveletPlanes& p) {
    check_same_shape(p.ll, p.lh, "planes_stack");
    check_same_shape(p.ll, p.hl, "planes_stack");
    check_same_shape(p.ll, p.hh, "planes_stack");
    int C = p.ll.dim(0), h = p.ll.dim(1), w = p.ll.dim(2);
    Tensor out({4 * C, h, w});
    int64_t band = (int64_t)C * h * w;
    std::copy(p.ll.data.begin(), p.ll.data.end(), out.data.begin());
    std::copy(p.lh.data.begin(), p.lh.data.end(), out.data.begin() + band);
    std::copy(p.hl.data.begin(), p.hl.data.end(), out.data.begin() + 2 * band);
    std::copy(p.hh.data.begin(), p.hh.data.end(), out.data.begin() + 3 * band);
    return out;
}

WaveletPlanes planes_unstack(const Tensor& stacked) {
    if (stacked.ndim() != 3 || stacked.dim(0) % 4)
        throw std::invalid_argument("planes_unstack: need {4C,h,w}");
    int C = stacked.dim(0) / 4, h = stacked.dim(1), w = stacked.dim(2);
    int64_t band = (int64_t)C * h * w;
    WaveletPlanes p;
    Tensor* bands[4] = {&p.ll, &p.lh, &p.hl, &p.hh};
    for (int b = 0; b < 4; ++b) {
        *bands[b] = Tensor({C, h, w});
        std::copy(stacked.data.begin() + b * band, stacked.data.begin() + (b + 1) * band,
                  bands[b]->data.begin());
    }
    return p;
}

WaveletPlanes dwt(const Tensor& image) {
    if (image.ndim() != 3 || image.dim(1) % 2 || image.dim(2) % 2)
        throw std::invalid_argument("dwt: need even H,W");
    return planes_unstack(dwt_stack(image));
}

Tensor idwt(const WaveletPlanes& planes) { return idwt_stack(planes_stack(planes)); }

}  // namespace sider
