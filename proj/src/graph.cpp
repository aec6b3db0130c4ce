#include "sider/graph.hpp"

#include <cmath>

namespace sider {

Var Graph::make(Tensor value) {
    tape_.push_back(std::make_unique<Node>());
    Var n = tape_.back().get();
    n->value = std::move(value);
    return n;
}

void Graph::ensure_grad(Var n) {
    if (!n->grad_ready) {
        n->grad = Tensor::zeros(n->value.shape);
        n->grad_ready = true;
    }
}

void Graph::accum(Var n, const Tensor& g) {
    ensure_grad(n);
    for (int64_t i = 0; i < g.size(); ++i) n->grad[i] += g[i];
}

Var Graph::constant(Tensor t) { return make(std::move(t)); }

Var Graph::leaf(Tensor t, bool requires_grad) {
    Var n = make(std::move(t));
    n->requires_grad = requires_grad;
    return n;
}

Var Graph::param(Tensor& stored, bool trainable) {
    auto it = param_cache_.find(&stored);
    if (it != param_cache_.end()) return it->second;
    Var n = make(stored);  // copy; optimizer reads grad from the node afterwards
    n->requires_grad = trainable;
    param_cache_[&stored] = n;
    if (trainable) trainables_.push_back({n, &stored});
    return n;
}

void Graph::backward(Var loss) {
    if (loss->value.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    ensure_grad(loss);
    loss->grad[0] = 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        Node* n = it->get();
        if (n->requires_grad && n->grad_ready && n->backprop) n->backprop(*this);
    }
}

// ---------------------------------------------------------------------------
// elementwise

Var Graph::add(Var a, Var b) { return lincomb(1.0, a, 1.0, b); }
Var Graph::sub(Var a, Var b) { return lincomb(1.0, a, -1.0, b); }

Var Graph::lincomb(real sa, Var a, real sb, Var b) {
    check_same_shape(a->value, b->value, "lincomb");
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = sa * a->value[i] + sb * b->value[i];
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad || b->requires_grad;
    n->backprop = [a, b, sa, sb, n](Graph&) {
        if (a->requires_grad) {
            ensure_grad(a);
            for (int64_t i = 0; i < n->grad.size(); ++i) a->grad[i] += sa * n->grad[i];
        }
        if (b->requires_grad) {
            ensure_grad(b);
            for (int64_t i = 0; i < n->grad.size(); ++i) b->grad[i] += sb * n->grad[i];
        }
    };
    return n;
}

Var Graph::mul(Var a, Var b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad || b->requires_grad;
    n->backprop = [a, b, n](Graph&) {
        if (a->requires_grad) {
            ensure_grad(a);
            for (int64_t i = 0; i < n->grad.size(); ++i) a->grad[i] += b->value[i] * n->grad[i];
        }
        if (b->requires_grad) {
            ensure_grad(b);
            for (int64_t i = 0; i < n->grad.size(); ++i) b->grad[i] += a->value[i] * n->grad[i];
        }
    };
    return n;
}

Var Graph::scale(Var a, real s) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = s * a->value[i];
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, s, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i) a->grad[i] += s * n->grad[i];
    };
    return n;
}

Var Graph::add_scalar(Var a, real s) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + s;
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, n](Graph&) {
        if (!a->requires_grad) return;
        accum(a, n->grad);
    };
    return n;
}

Var Graph::lrelu(Var a, real slope) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) {
        real v = a->value[i];
        out[i] = v > 0 ? v : slope * v;
    }
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, slope, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i)
            a->grad[i] += (a->value[i] > 0 ? 1.0 : slope) * n->grad[i];
    };
    return n;
}

Var Graph::silu(Var a) {
    Tensor out(a->value.shape);
    std::vector<real> sig(out.size());
    for (int64_t i = 0; i < out.size(); ++i) {
        sig[(size_t)i] = 1.0 / (1.0 + std::exp(-a->value[i]));
        out[i] = a->value[i] * sig[(size_t)i];
    }
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, n, sig = std::move(sig)](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i) {
            real s = sig[(size_t)i];
            a->grad[i] += s * (1.0 + a->value[i] * (1.0 - s)) * n->grad[i];
        }
    };
    return n;
}

Var Graph::sigmoid(Var a) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a->value[i]));
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i) {
            real y = n->value[i];
            a->grad[i] += y * (1.0 - y) * n->grad[i];
        }
    };
    return n;
}

Var Graph::tanh_(Var a) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a->value[i]);
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i) {
            real y = n->value[i];
            a->grad[i] += (1.0 - y * y) * n->grad[i];
        }
    };
    return n;
}

Var Graph::coupling_scale(Var a, real c) {
    // exp(c*(2*sigmoid(x)-1)); range [e^-c, e^c], invertible for any input
    Tensor out(a->value.shape);
    std::vector<real> sig(out.size());
    for (int64_t i = 0; i < out.size(); ++i) {
        sig[(size_t)i] = 1.0 / (1.0 + std::exp(-a->value[i]));
        out[i] = std::exp(c * (2.0 * sig[(size_t)i] - 1.0));
    }
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, c, n, sig = std::move(sig)](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i) {
            real s = sig[(size_t)i];
            a->grad[i] += n->value[i] * c * 2.0 * s * (1.0 - s) * n->grad[i];
        }
    };
    return n;
}

Var Graph::reciprocal(Var a) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / a->value[i];
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i) {
            real y = n->value[i];
            a->grad[i] += -y * y * n->grad[i];
        }
    };
    return n;
}

Var Graph::clamp01(Var a) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::min(1.0, std::max(0.0, a->value[i]));
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i) {
            real v = a->value[i];
            if (v > 0.0 && v < 1.0) a->grad[i] += n->grad[i];
        }
    };
    return n;
}

Var Graph::quantize8_ste(Var a) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::round(a->value[i] * 255.0) / 255.0;
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, n](Graph&) {
        if (!a->requires_grad) return;
        accum(a, n->grad);
    };
    return n;
}

// ---------------------------------------------------------------------------
// shape

Var Graph::concat_ch(Var a, Var b) {
    const auto& sa = a->value.shape;
    const auto& sb = b->value.shape;
    if (sa.size() != 3 || sb.size() != 3 || sa[1] != sb[1] || sa[2] != sb[2])
        throw std::invalid_argument("concat_ch: incompatible shapes");
    Tensor out({sa[0] + sb[0], sa[1], sa[2]});
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(), out.data.begin() + a->value.size());
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad || b->requires_grad;
    n->backprop = [a, b, n](Graph&) {
        int64_t na = a->value.size();
        if (a->requires_grad) {
            ensure_grad(a);
            for (int64_t i = 0; i < na; ++i) a->grad[i] += n->grad[i];
        }
        if (b->requires_grad) {
            ensure_grad(b);
            for (int64_t i = 0; i < b->value.size(); ++i) b->grad[i] += n->grad[na + i];
        }
    };
    return n;
}

Var Graph::concat_vec(Var a, Var b) {
    if (a->value.ndim() != 1 || b->value.ndim() != 1)
        throw std::invalid_argument("concat_vec: need vectors");
    Tensor out({a->value.dim(0) + b->value.dim(0)});
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(), out.data.begin() + a->value.size());
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad || b->requires_grad;
    n->backprop = [a, b, n](Graph&) {
        int64_t na = a->value.size();
        if (a->requires_grad) {
            ensure_grad(a);
            for (int64_t i = 0; i < na; ++i) a->grad[i] += n->grad[i];
        }
        if (b->requires_grad) {
            ensure_grad(b);
            for (int64_t i = 0; i < b->value.size(); ++i) b->grad[i] += n->grad[na + i];
        }
    };
    return n;
}

Var Graph::slice_ch(Var a, int c0, int c1) {
    const auto& s = a->value.shape;
    if (s.size() != 3 || c0 < 0 || c1 > s[0] || c0 >= c1)
        throw std::invalid_argument("slice_ch: bad range");
    int64_t plane = (int64_t)s[1] * s[2];
    Tensor out({c1 - c0, s[1], s[2]});
    std::copy(a->value.data.begin() + c0 * plane, a->value.data.begin() + c1 * plane, out.data.begin());
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, c0, plane, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i) a->grad[c0 * plane + i] += n->grad[i];
    };
    return n;
}

Var Graph::slice_vec(Var a, int i0, int i1) {
    if (a->value.ndim() != 1 || i0 < 0 || i1 > a->value.dim(0) || i0 >= i1)
        throw std::invalid_argument("slice_vec: bad range");
    Tensor out({i1 - i0});
    std::copy(a->value.data.begin() + i0, a->value.data.begin() + i1, out.data.begin());
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, i0, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i) a->grad[i0 + i] += n->grad[i];
    };
    return n;
}

Var Graph::add_chvec(Var x, Var v) {
    const auto& s = x->value.shape;
    if (s.size() != 3 || v->value.ndim() != 1 || v->value.dim(0) != s[0])
        throw std::invalid_argument("add_chvec: incompatible shapes");
    Tensor out(s);
    int64_t plane = (int64_t)s[1] * s[2];
    for (int c = 0; c < s[0]; ++c)
        for (int64_t i = 0; i < plane; ++i) out[c * plane + i] = x->value[c * plane + i] + v->value[c];
    Var n = make(std::move(out));
    n->requires_grad = x->requires_grad || v->requires_grad;
    n->backprop = [x, v, plane, n](Graph&) {
        int C = x->value.shape[0];
        if (x->requires_grad) accum(x, n->grad);
        if (v->requires_grad) {
            ensure_grad(v);
            for (int c = 0; c < C; ++c) {
                real s2 = 0;
                for (int64_t i = 0; i < plane; ++i) s2 += n->grad[c * plane + i];
                v->grad[c] += s2;
            }
        }
    };
    return n;
}

Var Graph::mul_chvec(Var x, Var v) {
    const auto& s = x->value.shape;
    if (s.size() != 3 || v->value.ndim() != 1 || v->value.dim(0) != s[0])
        throw std::invalid_argument("mul_chvec: incompatible shapes");
    Tensor out(s);
    int64_t plane = (int64_t)s[1] * s[2];
    for (int c = 0; c < s[0]; ++c)
        for (int64_t i = 0; i < plane; ++i) out[c * plane + i] = x->value[c * plane + i] * v->value[c];
    Var n = make(std::move(out));
    n->requires_grad = x->requires_grad || v->requires_grad;
    n->backprop = [x, v, plane, n](Graph&) {
        int C = x->value.shape[0];
        if (x->requires_grad) {
            ensure_grad(x);
            for (int c = 0; c < C; ++c)
                for (int64_t i = 0; i < plane; ++i) x->grad[c * plane + i] += v->value[c] * n->grad[c * plane + i];
        }
        if (v->requires_grad) {
            ensure_grad(v);
            for (int c = 0; c < C; ++c) {
                real s2 = 0;
                for (int64_t i = 0; i < plane; ++i) s2 += x->value[c * plane + i] * n->grad[c * plane + i];
                v->grad[c] += s2;
            }
        }
    };
    return n;
}

Var Graph::reshape(Var a, std::vector<int> shape) {
    if (Tensor::count(shape) != a->value.size()) throw std::invalid_argument("reshape: size mismatch");
    Tensor out(std::move(shape), a->value.data);
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (int64_t i = 0; i < n->grad.size(); ++i) a->grad[i] += n->grad[i];
    };
    return n;
}

// ---------------------------------------------------------------------------
// linear / conv

Var Graph::matvec(Var w, Var x) {
    if (w->value.ndim() != 2 || x->value.ndim() != 1 || w->value.dim(1) != x->value.dim(0))
        throw std::invalid_argument("matvec: incompatible shapes");
    int out_n = w->value.dim(0), in_n = w->value.dim(1);
    Tensor out({out_n});
    for (int o = 0; o < out_n; ++o) {
        real s = 0;
        const real* wr = &w->value.data[(size_t)o * in_n];
        for (int i = 0; i < in_n; ++i) s += wr[i] * x->value[i];
        out[o] = s;
    }
    Var n = make(std::move(out));
    n->requires_grad = w->requires_grad || x->requires_grad;
    n->backprop = [w, x, out_n, in_n, n](Graph&) {
        if (x->requires_grad) {
            ensure_grad(x);
            for (int o = 0; o < out_n; ++o) {
                real g = n->grad[o];
                const real* wr = &w->value.data[(size_t)o * in_n];
                for (int i = 0; i < in_n; ++i) x->grad[i] += wr[i] * g;
            }
        }
        if (w->requires_grad) {
            ensure_grad(w);
            for (int o = 0; o < out_n; ++o) {
                real g = n->grad[o];
                real* wg = &w->grad.data[(size_t)o * in_n];
                for (int i = 0; i < in_n; ++i) wg[i] += x->value[i] * g;
            }
        }
    };
    return n;
}

Var Graph::conv2d(Var x, Var w, Var b, int stride, int pad) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0])
        throw std::invalid_argument("conv2d: incompatible shapes");
    if (b->value.ndim() != 1 || b->value.dim(0) != ws[0])
        throw std::invalid_argument("conv2d: bad bias shape");
    int Ci = xs[0], H = xs[1], W = xs[2];
    int Co = ws[0], Kh = ws[2], Kw = ws[3];
    int Ho = (H + 2 * pad - Kh) / stride + 1;
    int Wo = (W + 2 * pad - Kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");

    Tensor out({Co, Ho, Wo});
    for (int co = 0; co < Co; ++co) {
        real bias = b->value[co];
        for (int yo = 0; yo < Ho; ++yo)
            for (int xo = 0; xo < Wo; ++xo) out.at3(co, yo, xo) = bias;
        for (int ci = 0; ci < Ci; ++ci) {
            const real* xp = &x->value.data[(size_t)ci * H * W];
            const real* wp = &w->value.data[(size_t)((co * Ci + ci) * Kh) * Kw];
            for (int yo = 0; yo < Ho; ++yo) {
                int yi0 = yo * stride - pad;
                real* op = &out.data[(size_t)(co * Ho + yo) * Wo];
                for (int ky = 0; ky < Kh; ++ky) {
                    int yi = yi0 + ky;
                    if (yi < 0 || yi >= H) continue;
                    const real* xr = xp + (size_t)yi * W;
                    const real* wr = wp + (size_t)ky * Kw;
                    for (int xo = 0; xo < Wo; ++xo) {
                        int xi0 = xo * stride - pad;
                        real s = 0;
                        for (int kx = 0; kx < Kw; ++kx) {
                            int xi = xi0 + kx;
                            if (xi < 0 || xi >= W) continue;
                            s += wr[kx] * xr[xi];
                        }
                        op[xo] += s;
                    }
                }
            }
        }
    }
    Var n = make(std::move(out));
    n->requires_grad = x->requires_grad || w->requires_grad || b->requires_grad;
    n->backprop = [x, w, b, stride, pad, Ci, H, W, Co, Ho, Wo, Kh, Kw, n](Graph&) {
        if (b->requires_grad) {
            ensure_grad(b);
            for (int co = 0; co < Co; ++co) {
                real s = 0;
                const real* gp = &n->grad.data[(size_t)co * Ho * Wo];
                for (int64_t i = 0; i < (int64_t)Ho * Wo; ++i) s += gp[i];
                b->grad[co] += s;
            }
        }
        if (x->requires_grad) {
            ensure_grad(x);
            for (int co = 0; co < Co; ++co) {
                const real* gp = &n->grad.data[(size_t)co * Ho * Wo];
                for (int ci = 0; ci < Ci; ++ci) {
                    real* xg = &x->grad.data[(size_t)ci * H * W];
                    const real* wp = &w->value.data[(size_t)((co * Ci + ci) * Kh) * Kw];
                    for (int yo = 0; yo < Ho; ++yo) {
                        int yi0 = yo * stride - pad;
                        for (int ky = 0; ky < Kh; ++ky) {
                            int yi = yi0 + ky;
                            if (yi < 0 || yi >= H) continue;
                            real* xr = xg + (size_t)yi * W;
                            const real* wr = wp + (size_t)ky * Kw;
                            const real* gr = gp + (size_t)yo * Wo;
                            for (int xo = 0; xo < Wo; ++xo) {
                                int xi0 = xo * stride - pad;
                                real g = gr[xo];
                                for (int kx = 0; kx < Kw; ++kx) {
                                    int xi = xi0 + kx;
                                    if (xi < 0 || xi >= W) continue;
                                    xr[xi] += wr[kx] * g;
                                }
                            }
                        }
                    }
                }
            }
        }
        if (w->requires_grad) {
            ensure_grad(w);
            for (int co = 0; co < Co; ++co) {
                const real* gp = &n->grad.data[(size_t)co * Ho * Wo];
                for (int ci = 0; ci < Ci; ++ci) {
                    const real* xp = &x->value.data[(size_t)ci * H * W];
                    real* wg = &w->grad.data[(size_t)((co * Ci + ci) * Kh) * Kw];
                    for (int ky = 0; ky < Kh; ++ky) {
                        for (int kx = 0; kx < Kw; ++kx) {
                            real s = 0;
                            for (int yo = 0; yo < Ho; ++yo) {
                                int yi = yo * stride - pad + ky;
                                if (yi < 0 || yi >= H) continue;
                                const real* xr = xp + (size_t)yi * W;
                                const real* gr = gp + (size_t)yo * Wo;
                                for (int xo = 0; xo < Wo; ++xo) {
                                    int xi = xo * stride - pad + kx;
                                    if (xi < 0 || xi >= W) continue;
                                    s += xr[xi] * gr[xo];
                                }
                            }
                            wg[(size_t)ky * Kw + kx] += s;
                        }
                    }
                }
            }
        }
    };
    return n;
}

Var Graph::upsample2(Var x) {
    const auto& s = x->value.shape;
    if (s.size() != 3) throw std::invalid_argument("upsample2: need {C,H,W}");
    int C = s[0], H = s[1], W = s[2];
    Tensor out({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
            for (int xx = 0; xx < 2 * W; ++xx) out.at3(c, y, xx) = x->value.at3(c, y / 2, xx / 2);
    Var n = make(std::move(out));
    n->requires_grad = x->requires_grad;
    n->backprop = [x, C, H, W, n](Graph&) {
        if (!x->requires_grad) return;
        ensure_grad(x);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * H; ++y)
                for (int xx = 0; xx < 2 * W; ++xx) x->grad.at3(c, y / 2, xx / 2) += n->grad.at3(c, y, xx);
    };
    return n;
}

Var Graph::global_avg_pool(Var x) {
    const auto& s = x->value.shape;
    if (s.size() != 3) throw std::invalid_argument("global_avg_pool: need {C,H,W}");
    int C = s[0];
    int64_t plane = (int64_t)s[1] * s[2];
    Tensor out({C});
    for (int c = 0; c < C; ++c) {
        real acc = 0;
        for (int64_t i = 0; i < plane; ++i) acc += x->value[c * plane + i];
        out[c] = acc / (real)plane;
    }
    Var n = make(std::move(out));
    n->requires_grad = x->requires_grad;
    n->backprop = [x, C, plane, n](Graph&) {
        if (!x->requires_grad) return;
        ensure_grad(x);
        for (int c = 0; c < C; ++c) {
            real g = n->grad[c] / (real)plane;
            for (int64_t i = 0; i < plane; ++i) x->grad[c * plane + i] += g;
        }
    };
    return n;
}

// ---------------------------------------------------------------------------
// reductions

Var Graph::sum(Var a) {
    real s = 0;
    for (int64_t i = 0; i < a->value.size(); ++i) s += a->value[i];
    Var n = make(Tensor::scalar(s));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        real g = n->grad[0];
        for (int64_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    };
    return n;
}

Var Graph::mse(Var a, Var b) {
    check_same_shape(a->value, b->value, "mse");
    int64_t m = a->value.size();
    real s = 0;
    for (int64_t i = 0; i < m; ++i) {
        real d = a->value[i] - b->value[i];
        s += d * d;
    }
    Var n = make(Tensor::scalar(s / (real)m));
    n->requires_grad = a->requires_grad || b->requires_grad;
    n->backprop = [a, b, m, n](Graph&) {
        real g = 2.0 * n->grad[0] / (real)m;
        if (a->requires_grad) {
            ensure_grad(a);
            for (int64_t i = 0; i < m; ++i) a->grad[i] += g * (a->value[i] - b->value[i]);
        }
        if (b->requires_grad) {
            ensure_grad(b);
            for (int64_t i = 0; i < m; ++i) b->grad[i] -= g * (a->value[i] - b->value[i]);
        }
    };
    return n;
}

Var Graph::dot(Var a, Var b) {
    check_same_shape(a->value, b->value, "dot");
    real s = 0;
    for (int64_t i = 0; i < a->value.size(); ++i) s += a->value[i] * b->value[i];
    Var n = make(Tensor::scalar(s));
    n->requires_grad = a->requires_grad || b->requires_grad;
    n->backprop = [a, b, n](Graph&) {
        real g = n->grad[0];
        if (a->requires_grad) {
            ensure_grad(a);
            for (int64_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g * b->value[i];
        }
        if (b->requires_grad) {
            ensure_grad(b);
            for (int64_t i = 0; i < b->grad.size(); ++i) b->grad[i] += g * a->value[i];
        }
    };
    return n;
}

Var Graph::l2_normalize(Var a) {
    if (a->value.ndim() != 1) throw std::invalid_argument("l2_normalize: need vector");
    real nrm2 = 0;
    for (int64_t i = 0; i < a->value.size(); ++i) nrm2 += a->value[i] * a->value[i];
    real nrm = std::sqrt(nrm2) + 1e-12;
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] / nrm;
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, nrm, n](Graph&) {
        if (!a->requires_grad) return;
        ensure_grad(a);
        // d(x/|x|) = (I - y y^T)/|x|
        real dy = 0;
        for (int64_t i = 0; i < n->grad.size(); ++i) dy += n->grad[i] * n->value[i];
        for (int64_t i = 0; i < n->grad.size(); ++i)
            a->grad[i] += (n->grad[i] - dy * n->value[i]) / nrm;
    };
    return n;
}

Var Graph::row_l2_normalize(Var w) {
    if (w->value.ndim() != 2) throw std::invalid_argument("row_l2_normalize: need matrix");
    int rows = w->value.dim(0), cols = w->value.dim(1);
    Tensor out(w->value.shape);
    std::vector<real> norms((size_t)rows);
    for (int r = 0; r < rows; ++r) {
        const real* src = &w->value.data[(size_t)r * cols];
        real n2 = 0;
        for (int i = 0; i < cols; ++i) n2 += src[i] * src[i];
        norms[(size_t)r] = std::sqrt(n2) + 1e-12;
        real* dst = &out.data[(size_t)r * cols];
        for (int i = 0; i < cols; ++i) dst[i] = src[i] / norms[(size_t)r];
    }
    Var n = make(std::move(out));
    n->requires_grad = w->requires_grad;
    n->backprop = [w, rows, cols, n, norms = std::move(norms)](Graph&) {
        if (!w->requires_grad) return;
        ensure_grad(w);
        for (int r = 0; r < rows; ++r) {
            const real* y = &n->value.data[(size_t)r * cols];
            const real* gy = &n->grad.data[(size_t)r * cols];
            real* gw = &w->grad.data[(size_t)r * cols];
            real dy = 0;
            for (int i = 0; i < cols; ++i) dy += gy[i] * y[i];
            for (int i = 0; i < cols; ++i) gw[i] += (gy[i] - dy * y[i]) / norms[(size_t)r];
        }
    };
    return n;
}

Var Graph::add_onehot(Var a, int idx, real v) {
    if (a->value.ndim() != 1 || idx < 0 || idx >= a->value.dim(0))
        throw std::invalid_argument("add_onehot: bad index");
    Tensor out = a->value;
    out[idx] += v;
    Var n = make(std::move(out));
    n->requires_grad = a->requires_grad;
    n->backprop = [a, n](Graph&) {
        if (!a->requires_grad) return;
        accum(a, n->grad);
    };
    return n;
}

Var Graph::softmax_ce(Var logits, int label) {
    if (logits->value.ndim() != 1 || label < 0 || label >= logits->value.dim(0))
        throw std::invalid_argument("softmax_ce: bad label");
    int m = logits->value.dim(0);
    real mx = logits->value[0];
    for (int i = 1; i < m; ++i) mx = std::max(mx, logits->value[i]);
    real z = 0;
    std::vector<real> p((size_t)m);
    for (int i = 0; i < m; ++i) {
        p[(size_t)i] = std::exp(logits->value[i] - mx);
        z += p[(size_t)i];
    }
    for (int i = 0; i < m; ++i) p[(size_t)i] /= z;
    real loss = -std::log(std::max(p[(size_t)label], 1e-300));
    Var n = make(Tensor::scalar(loss));
    n->requires_grad = logits->requires_grad;
    n->backprop = [logits, label, m, n, p = std::move(p)](Graph&) {
        if (!logits->requires_grad) return;
        ensure_grad(logits);
        real g = n->grad[0];
        for (int i = 0; i < m; ++i)
            logits->grad[i] += g * (p[(size_t)i] - (i == label ? 1.0 : 0.0));
    };
    return n;
}

// ---------------------------------------------------------------------------
// Haar DWT (orthonormal). For a 2x2 block [p00 p01; p10 p11]:
//   ll = (p00+p01+p10+p11)/2   lh = (p00+p01-p10-p11)/2
//   hl = (p00-p01+p10-p11)/2   hh = (p00-p01-p10+p11)/2
// The transform is its own transpose-inverse, so backward reuses the
// opposite direction.

namespace {
void dwt_forward(const Tensor& x, Tensor& out) {
    int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    int h = H / 2, w = W / 2;
    int64_t band = (int64_t)C * h * w;
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                real p00 = x.at3(c, 2 * y, 2 * xx);
                real p01 = x.at3(c, 2 * y, 2 * xx + 1);
                real p10 = x.at3(c, 2 * y + 1, 2 * xx);
                real p11 = x.at3(c, 2 * y + 1, 2 * xx + 1);
                int64_t i = (int64_t)(c * h + y) * w + xx;
                out.data[(size_t)(0 * band + i)] = 0.5 * (p00 + p01 + p10 + p11);
                out.data[(size_t)(1 * band + i)] = 0.5 * (p00 + p01 - p10 - p11);
                out.data[(size_t)(2 * band + i)] = 0.5 * (p00 - p01 + p10 - p11);
                out.data[(size_t)(3 * band + i)] = 0.5 * (p00 - p01 - p10 + p11);
            }
        }
    }
}

void dwt_inverse(const Tensor& y, Tensor& out) {
    int C4 = y.shape[0], h = y.shape[1], w = y.shape[2];
    int C = C4 / 4;
    int64_t band = (int64_t)C * h * w;
    for (int c = 0; c < C; ++c) {
        for (int yy = 0; yy < h; ++yy) {
            for (int xx = 0; xx < w; ++xx) {
                int64_t i = (int64_t)(c * h + yy) * w + xx;
                real ll = y.data[(size_t)(0 * band + i)];
                real lh = y.data[(size_t)(1 * band + i)];
                real hl = y.data[(size_t)(2 * band + i)];
                real hh = y.data[(size_t)(3 * band + i)];
                out.at3(c, 2 * yy, 2 * xx) = 0.5 * (ll + lh + hl + hh);
                out.at3(c, 2 * yy, 2 * xx + 1) = 0.5 * (ll + lh - hl - hh);
                out.at3(c, 2 * yy + 1, 2 * xx) = 0.5 * (ll - lh + hl - hh);
                out.at3(c, 2 * yy + 1, 2 * xx + 1) = 0.5 * (ll - lh - hl + hh);
            }
        }
    }
}
}  // namespace

Var Graph::dwt2(Var x) {
    const auto& s = x->value.shape;
    if (s.size() != 3 || s[1] % 2 || s[2] % 2) throw std::invalid_argument("dwt2: need even H,W");
    Tensor out({4 * s[0], s[1] / 2, s[2] / 2});
    dwt_forward(x->value, out);
    Var n = make(std::move(out));
    n->requires_grad = x->requires_grad;
    n->backprop = [x, n](Graph&) {
        if (!x->requires_grad) return;
        ensure_grad(x);
        Tensor tmp(x->value.shape);
        dwt_inverse(n->grad, tmp);
        for (int64_t i = 0; i < tmp.size(); ++i) x->grad[i] += tmp[i];
    };
    return n;
}

Var Graph::idwt2(Var x) {
    const auto& s = x->value.shape;
    if (s.size() != 3 || s[0] % 4) throw std::invalid_argument("idwt2: need 4k channels");
    Tensor out({s[0] / 4, 2 * s[1], 2 * s[2]});
    dwt_inverse(x->value, out);
    Var n = make(std::move(out));
    n->requires_grad = x->requires_grad;
    n->backprop = [x, n](Graph&) {
        if (!x->requires_grad) return;
        ensure_grad(x);
        Tensor tmp(x->value.shape);
        dwt_forward(n->grad, tmp);
        for (int64_t i = 0; i < tmp.size(); ++i) x->grad[i] += tmp[i];
    };
    return n;
}

}  // namespace sider
