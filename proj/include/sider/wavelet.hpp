#pragma once

#include "sider/graph.hpp"
#include "sider/tensor.hpp"

namespace sider {

// Single-level orthonormal Haar sub-bands, each {3,H/2,W/2}.
struct WaveletPlanes {
    Tensor ll, lh, hl, hh;
};

// analysis/synthesis; requires even H,W. idwt(dwt(x)) == x up to fp rounding
// and energy is preserved (orthonormal transform).
WaveletPlanes dwt(const Tensor& image);
Tensor idwt(const WaveletPlanes& planes);

// The CRM works on the band-stacked layout {4C,h,w} with channel order
// ll,lh,hl,hh (matching Graph::dwt2). These convert between the two views.
Tensor planes_stack(const WaveletPlanes& p);
WaveletPlanes planes_unstack(const Tensor& stacked);

Tensor dwt_stack(const Tensor& image);    // == planes_stack(dwt(image))
Tensor idwt_stack(const Tensor& stacked);

}  // namespace sider
