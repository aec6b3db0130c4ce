#include "sider/attack.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sider/image_io.hpp"

namespace sider {

void AttackConfig::validate() const {
    if (iterations < 0) throw std::invalid_argument("attack: N must be >= 0");
    if (!(alpha > 0)) throw std::invalid_argument("attack: alpha must be > 0");
    if (mu < 0) throw std::invalid_argument("attack: mu must be >= 0");
    if (!(strength > 0 && strength <= 1)) throw std::invalid_argument("attack: strength in (0,1]");
    if (mask_mode != "oval" && mask_mode != "full" && mask_mode != "external")
        throw std::invalid_argument("attack: unknown mask_mode " + mask_mode);
}

int64_t FaceMask::support() const {
    int64_t n = 0;
    for (real v : values.data) n += (v != 0.0);
    return n;
}

Tensor majority_downsample(const Tensor& mask_hw, int h, int w) {
    int H = mask_hw.dim(0), W = mask_hw.dim(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        int y0 = y * H / h, y1 = (y + 1) * H / h;
        for (int x = 0; x < w; ++x) {
            int x0 = x * W / w, x1 = (x + 1) * W / w;
            int64_t ones = 0, total = 0;
            for (int yy = y0; yy < y1; ++yy)
                for (int xx = x0; xx < x1; ++xx) {
                    ones += mask_hw.data[(size_t)(yy * W + xx)] != 0.0;
                    ++total;
                }
            out.data[(size_t)(y * w + x)] = (2 * ones > total) ? 1.0 : 0.0;
        }
    }
    return out;
}

FaceMask make_mask(int image_size, const std::vector<int>& latent_shape, const std::string& mode,
                   const std::string& external_path) {
    if (latent_shape.size() != 3) throw std::invalid_argument("make_mask: latent shape must be {C,h,w}");
    int h = latent_shape[1], w = latent_shape[2];
    FaceMask m;
    if (mode == "full") {
        m.values = Tensor::full({h, w}, 1.0);
        return m;
    }
    Tensor img_mask({image_size, image_size});
    if (mode == "oval") {
        // ellipse sized to the face region of the aligned crop
        real cx = 0.5, cy = 0.52, rx = 0.36, ry = 0.44;
        for (int y = 0; y < image_size; ++y)
            for (int x = 0; x < image_size; ++x) {
                real px = (x + 0.5) / image_size, py = (y + 0.5) / image_size;
                real ex = (px - cx) / rx, ey = (py - cy) / ry;
                img_mask.data[(size_t)(y * image_size + x)] = (ex * ex + ey * ey <= 1.0) ? 1.0 : 0.0;
            }
    } else if (mode == "external") {
        Tensor img = read_png(external_path);  // throws if missing
        img_mask = Tensor({img.dim(1), img.dim(2)});
        for (int y = 0; y < img.dim(1); ++y)
            for (int x = 0; x < img.dim(2); ++x) {
                real gray = (img.at3(0, y, x) + img.at3(1, y, x) + img.at3(2, y, x)) / 3.0;
                img_mask.data[(size_t)(y * img.dim(2) + x)] = gray > 0.5 ? 1.0 : 0.0;
            }
    } else {
        throw std::invalid_argument("make_mask: unknown mode " + mode);
    }
    m.values = majority_downsample(img_mask, h, w);
    return m;
}

Tensor grad_zT(const LatentCode& zT, int t_start, const Tensor& x, const EnsembleConfig& ens,
               const ConditionEmbedding& cond, const GuidanceConfig& gcfg, const NoisePredictor& den,
               const Autoencoder& ae, const NoiseSchedule& sched, real* loss_out) {
    Graph g;
    Var z = g.leaf(zT.values, true);
    Var z0 = sample_omega(g, den, sched, z, t_start, cond, gcfg);
    Var x_gen = ae.decode(g, z0, false);
    Var loss = ensemble_loss(g, ens, x_gen, x);
    g.backward(loss);
    if (loss_out) *loss_out = loss->value[0];
    if (!z->grad_ready) return Tensor::zeros(zT.values.shape);
    for (real v : z->grad.data)
        if (!std::isfinite(v))
            throw std::runtime_error("grad_zT: non-finite gradient (t_start=" + std::to_string(t_start) +
                                     ", loss=" + std::to_string(loss->value[0]) + ")");
    return z->grad;
}

MomentumState momentum_step(const MomentumState& g_prev, const Tensor& grad, real mu) {
    check_same_shape(g_prev.g, grad, "momentum_step");
    real l1 = 0;
    for (real v : grad.data) l1 += std::fabs(v);
    if (l1 == 0.0) throw std::runtime_error("momentum_step: degenerate gradient (L1 norm is zero)");
    MomentumState out;
    out.g = Tensor(grad.shape);
    for (int64_t i = 0; i < grad.size(); ++i) out.g[i] = mu * g_prev.g[i] + grad[i] / l1;
    return out;
}

Tensor masked_update(const Tensor& zT, const Tensor& g, real alpha, const FaceMask& mask) {
    check_same_shape(zT, g, "masked_update");
    if (zT.ndim() != 3 || mask.values.ndim() != 2 || mask.values.dim(0) != zT.dim(1) ||
        mask.values.dim(1) != zT.dim(2))
        throw std::invalid_argument("masked_update: mask incompatible with latent");
    Tensor out = zT;
    int C = zT.dim(0), h = zT.dim(1), w = zT.dim(2);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                real mg = mask.values.data[(size_t)(y * w + x)] * g.at3(c, y, x);
                if (mg > 0)
                    out.at3(c, y, x) -= alpha;
                else if (mg < 0)
                    out.at3(c, y, x) += alpha;
                // sign(0) := 0, coordinate left bit-identical
            }
    return out;
}

AttackResult attack(const Tensor& x, const ConditionEmbedding& cond, const EnsembleConfig& ens,
                    const NoiseSchedule& sched, const AttackConfig& cfg, uint64_t seed,
                    const NoisePredictor& den, const Autoencoder& ae, const FaceMask& mask) {
    cfg.validate();
    int t_start = strength_to_t_start(cfg.strength, sched.T);

    LatentCode z0 = ae.encode_value(x);
    Rng rng(seed);
    Tensor eps = rng.randn(z0.values.shape);
    LatentCode zT = forward_noise(sched, z0, t_start, eps);

    AttackResult res;
    res.zT_init = zT;
    MomentumState mom{Tensor::zeros(zT.values.shape)};

    for (int k = 0; k < cfg.iterations; ++k) {
        real loss = 0;
        Tensor grad = grad_zT(zT, t_start, x, ens, cond, cfg.guidance, den, ae, sched, &loss);
        res.loss_trace.push_back(loss);
        mom = momentum_step(mom, grad, cfg.mu);
        zT.values = masked_update(zT.values, mom.g, cfg.alpha, mask);
    }
    // final loss after the last update
    LatentCode zfin = sample_omega_value(den, sched, zT, t_start, cond, cfg.guidance);
    res.decoded = ae.decode_value(zfin.values);
    res.loss_trace.push_back(ensemble_loss_value(ens, res.decoded, x));
    res.zT = zT;
    return res;
}

AdversarialPair generate_pair(const Tensor& x, const ConditionEmbedding& cond, const EnsembleConfig& ens,
                              const NoiseSchedule& sched, const AttackConfig& cfg,
                              const NoisePredictor& den, const Autoencoder& ae, const FaceMask& mask,
                              std::vector<real>* cover_trace, std::vector<real>* decoy_trace) {
    if (cfg.seed_cover == cfg.seed_decoy) throw std::invalid_argument("generate_pair: seeds must differ");
    AttackResult rc = attack(x, cond, ens, sched, cfg, cfg.seed_cover, den, ae, mask);
    AttackResult rd = attack(x, cond, ens, sched, cfg, cfg.seed_decoy, den, ae, mask);
    if (cover_trace) *cover_trace = rc.loss_trace;
    if (decoy_trace) *decoy_trace = rd.loss_trace;
    AdversarialPair pair;
    pair.x_cover = rc.decoded;
    pair.x_decoy = rd.decoded;
    pair.seed_cover = cfg.seed_cover;
    pair.seed_decoy = cfg.seed_decoy;
    return pair;
}

void write_loss_trace_csv(const std::string& path, const std::vector<real>& trace) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "iteration,loss\n";
    for (size_t i = 0; i < trace.size(); ++i) os << i << "," << trace[i] << "\n";
}

}  // namespace sider
