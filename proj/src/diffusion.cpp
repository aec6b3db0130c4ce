#include "sider/diffusion.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace sider {

// ---------------------------------------------------------------------------
// Autoencoder

Autoencoder::Autoencoder(AutoencoderMode mode, int resolution, uint64_t init_seed)
    : mode_(mode), resolution_(resolution) {
    if (mode_ == AutoencoderMode::Identity) return;
    if (resolution % 4 != 0) throw std::invalid_argument("autoencoder: resolution must be divisible by 4");
    Rng rng(init_seed);
    e1_ = Conv2d(3, 12, 3, 2, 1, rng);
    e2_ = Conv2d(12, 24, 3, 2, 1, rng);
    e3_ = Conv2d(24, 24, 3, 1, 1, rng);
    e4_ = Conv2d(24, 4, 3, 1, 1, rng);
    d1_ = Conv2d(4, 24, 3, 1, 1, rng);
    d2_ = Conv2d(24, 24, 3, 1, 1, rng);
    d3_ = Conv2d(24, 12, 3, 1, 1, rng);
    d4_ = Conv2d(12, 8, 3, 1, 1, rng);
    d5_ = Conv2d(8, 3, 3, 1, 1, rng);
}

std::vector<int> Autoencoder::latent_shape() const {
    if (mode_ == AutoencoderMode::Identity) return {3, resolution_, resolution_};
    return {4, resolution_ / 4, resolution_ / 4};
}

Var Autoencoder::encode(Graph& g, Var x, bool train) const {
    if (mode_ == AutoencoderMode::Identity) return x;
    Var h = g.silu(e1_(g, x, train));
    h = g.silu(e2_(g, h, train));
    h = g.silu(e3_(g, h, train));
    Var z = e4_(g, h, train);
    return latent_scale == 1.0 ? z : g.scale(z, 1.0 / latent_scale);
}

Var Autoencoder::decode(Graph& g, Var z, bool train) const {
    if (mode_ == AutoencoderMode::Identity) return g.clamp01(z);
    Var h = latent_scale == 1.0 ? z : g.scale(z, latent_scale);
    h = g.silu(d1_(g, h, train));
    h = g.silu(d2_(g, h, train));
    h = g.upsample2(h);
    h = g.silu(d3_(g, h, train));
    h = g.upsample2(h);
    h = g.silu(d4_(g, h, train));
    return g.sigmoid(d5_(g, h, train));
}

LatentCode Autoencoder::encode_value(const Tensor& image) const {
    Graph g;
    Var z = encode(g, g.constant(image), false);
    return {z->value, 0};
}

Tensor Autoencoder::decode_value(const Tensor& latent) const {
    Graph g;
    return decode(g, g.constant(latent), false)->value;
}

real Autoencoder::train(const DatasetManifest& data, int epochs, real lr, uint64_t seed) {
    if (mode_ == AutoencoderMode::Identity) return 0.0;
    auto train_set = data.in_split(Split::Train);
    if (train_set.empty()) throw std::invalid_argument("autoencoder: empty train split");

    Rng rng(seed);
    Adam adam(lr);
    real last = 0.0;
    const int B = 4;
    for (int ep = 0; ep < epochs; ++ep) {
        std::vector<const ImageSample*> order(train_set);
        rng.shuffle(order);
        real acc = 0;
        int steps = 0;
        for (size_t i = 0; i < order.size(); i += B) {
            Graph g;
            Var loss = nullptr;
            int nb = 0;
            for (size_t j = i; j < std::min(order.size(), i + B); ++j, ++nb) {
                Var x = g.constant(order[j]->pixels);
                Var rec = decode(g, encode(g, x, true), true);
                Var l = g.mse(rec, x);
                loss = loss ? g.add(loss, l) : l;
            }
            loss = g.scale(loss, 1.0 / nb);
            g.backward(loss);
            adam.step(g);
            if (!std::isfinite(loss->value[0]))
                throw std::runtime_error("autoencoder: training diverged (loss not finite)");
            acc += loss->value[0];
            ++steps;
        }
        last = acc / steps;
    }
    epochs_trained += epochs;

    // rescale so latents are ~unit variance for the diffusion process
    latent_scale = 1.0;
    real m = 0, m2 = 0;
    int64_t n = 0;
    for (auto* s : train_set) {
        LatentCode z = encode_value(s->pixels);
        for (real v : z.values.data) {
            m += v;
            m2 += v * v;
            ++n;
        }
    }
    m /= (real)n;
    real sd = std::sqrt(std::max(m2 / (real)n - m * m, 1e-12));
    latent_scale = sd;
    return last;
}

void Autoencoder::reg(ParamList& out) {
    if (mode_ == AutoencoderMode::Identity) return;
    e1_.reg("ae.e1", out);
    e2_.reg("ae.e2", out);
    e3_.reg("ae.e3", out);
    e4_.reg("ae.e4", out);
    d1_.reg("ae.d1", out);
    d2_.reg("ae.d2", out);
    d3_.reg("ae.d3", out);
    d4_.reg("ae.d4", out);
    d5_.reg("ae.d5", out);
}

// ---------------------------------------------------------------------------
// Denoiser

Denoiser::Denoiser(std::vector<int> latent_shape, int T, int d_cond, int width, uint64_t init_seed)
    : latent_shape_(std::move(latent_shape)), T_(T), d_cond_(d_cond), width_(width) {
    Rng rng(init_seed);
    int C = latent_shape_[0];
    emb1_ = Linear(8 + d_cond, 32, rng);
    emb2_ = Linear(32, 2 * width, rng);
    c1_ = Conv2d(C, width, 3, 1, 1, rng);
    c2_ = Conv2d(width, width, 3, 1, 1, rng);
    c3_ = Conv2d(width, width, 3, 1, 1, rng);
    c4_ = Conv2d(width, C, 3, 1, 1, rng);
}

Tensor Denoiser::time_features(int t) const {
    Tensor f({8});
    real tau = (real)t / (real)T_;
    for (int k = 0; k < 4; ++k) {
        real w = M_PI * std::pow(2.0, k);
        f[2 * k] = std::sin(w * tau);
        f[2 * k + 1] = std::cos(w * tau);
    }
    return f;
}

Var Denoiser::predict(Graph& g, Var z, int t, Var cond, bool train) const {
    if (z->value.shape != latent_shape_)
        throw std::invalid_argument("denoiser: latent shape mismatch, got " + z->value.shape_str());
    if (cond->value.ndim() != 1 || cond->value.dim(0) != d_cond_)
        throw std::invalid_argument("denoiser: condition dim mismatch");
    Var e = g.concat_vec(g.constant(time_features(t)), cond);
    Var e1 = g.silu(emb1_(g, e, train));
    Var film = emb2_(g, e1, train);
    Var sc = g.slice_vec(film, 0, width_);
    Var sh = g.slice_vec(film, width_, 2 * width_);
    Var h = c1_(g, z, train);
    h = g.silu(g.add_chvec(g.mul_chvec(h, g.add_scalar(sc, 1.0)), sh));
    h = g.silu(c2_(g, h, train));
    h = g.silu(c3_(g, h, train));
    return c4_(g, h, train);
}

void Denoiser::reg(ParamList& out) {
    emb1_.reg("den.emb1", out);
    emb2_.reg("den.emb2", out);
    c1_.reg("den.c1", out);
    c2_.reg("den.c2", out);
    c3_.reg("den.c3", out);
    c4_.reg("den.c4", out);
}

// ---------------------------------------------------------------------------
// condition provider

AttributeConditionProvider::AttributeConditionProvider(int d_cond, uint64_t init_seed) : d_cond_(d_cond) {
    Rng rng(init_seed);
    proj_ = rng.randn({d_cond, 12}, std::sqrt(1.0 / 12.0));
}

std::vector<real> AttributeConditionProvider::attributes_of(const DatasetManifest& m,
                                                            const ImageSample& s) const {
    auto it = m.identity_attributes.find(s.identity_id);
    if (it != m.identity_attributes.end()) return it->second;
    // label fallback: seeded pseudo-attributes for datasets without attribute
    // vectors
    Rng rng(0x5eedc0de ^ (uint64_t)s.identity_id * 0x9e3779b97f4a7c15ULL);
    return make_identity_vector(rng);
}

ConditionEmbedding AttributeConditionProvider::condition_for(const DatasetManifest& m,
                                                             const ImageSample& s) const {
    auto attrs = attributes_of(m, s);
    ConditionEmbedding c;
    c.values = Tensor({d_cond_});
    for (int o = 0; o < d_cond_; ++o) {
        real acc = 0;
        for (int i = 0; i < 12; ++i) acc += proj_[(int64_t)o * 12 + i] * attrs[(size_t)i];
        c.values[o] = std::tanh(acc);
    }
    c.is_null = false;
    return c;
}

Var AttributeConditionProvider::condition_var(Graph& g, const DatasetManifest& m, const ImageSample& s,
                                              bool train) const {
    auto attrs = attributes_of(m, s);
    Var a = g.constant(Tensor({12}, std::vector<real>(attrs.begin(), attrs.end())));
    return g.tanh_(g.matvec(g.param(const_cast<Tensor&>(proj_), train), a));
}

void AttributeConditionProvider::reg(ParamList& out) { out.push_back({"cond.proj", &proj_}); }

// ---------------------------------------------------------------------------
// diffusion operations

LatentCode forward_noise(const NoiseSchedule& sched, const LatentCode& z0, int t, const Tensor& eps) {
    if (t < 1 || t > sched.T) throw std::out_of_range("forward_noise: t out of range");
    check_same_shape(z0.values, eps, "forward_noise");
    real at = sched.abar(t);
    real a = std::sqrt(at), b = std::sqrt(1.0 - at);
    LatentCode out;
    out.values = Tensor(z0.values.shape);
    for (int64_t i = 0; i < out.values.size(); ++i) out.values[i] = a * z0.values[i] + b * eps[i];
    out.timestep = t;
    return out;
}

Var guided_score(Graph& g, const NoisePredictor& eps, const NoiseSchedule&, Var z, int t,
                 const ConditionEmbedding& c, const GuidanceConfig& gcfg) {
    Var null_cond = g.constant(Tensor::zeros({eps.cond_dim()}));
    Var e_null = eps.predict(g, z, t, null_cond, false);
    real es = gcfg.effective();
    if (c.is_null || es == 0.0) return e_null;
    Var e_c = eps.predict(g, z, t, g.constant(c.values), false);
    return g.lincomb(1.0, e_null, es, g.sub(e_c, e_null));
}

Var ddim_step(Graph& g, const NoisePredictor& eps, const NoiseSchedule& sched, Var z, int t,
              const ConditionEmbedding& c, const GuidanceConfig& gcfg) {
    if (t < 1) throw std::invalid_argument("ddim_step: already denoised (t must be >= 1)");
    if (t > sched.T) throw std::out_of_range("ddim_step: t beyond schedule");
    Var e = guided_score(g, eps, sched, z, t, c, gcfg);
    real at = sched.abar(t), at1 = sched.abar(t - 1);
    // x0_hat = (z - sqrt(1-at) e) / sqrt(at), then re-noise to t-1
    Var x0 = g.lincomb(1.0 / std::sqrt(at), z, -std::sqrt(1.0 - at) / std::sqrt(at), e);
    return g.lincomb(std::sqrt(at1), x0, std::sqrt(1.0 - at1), e);
}

Var sample_omega(Graph& g, const NoisePredictor& eps, const NoiseSchedule& sched, Var zT, int t_start,
                 const ConditionEmbedding& c, const GuidanceConfig& gcfg) {
    if (t_start < 1 || t_start > sched.T) throw std::out_of_range("sample_omega: t_start out of range");
    Var z = zT;
    for (int t = t_start; t >= 1; --t) z = ddim_step(g, eps, sched, z, t, c, gcfg);
    return z;
}

Tensor guided_score_value(const NoisePredictor& eps, const NoiseSchedule& sched, const LatentCode& z,
                          const ConditionEmbedding& c, const GuidanceConfig& gcfg) {
    Graph g;
    return guided_score(g, eps, sched, g.constant(z.values), z.timestep, c, gcfg)->value;
}

LatentCode ddim_step_value(const NoisePredictor& eps, const NoiseSchedule& sched, const LatentCode& z,
                           const ConditionEmbedding& c, const GuidanceConfig& gcfg) {
    Graph g;
    Var out = ddim_step(g, eps, sched, g.constant(z.values), z.timestep, c, gcfg);
    return {out->value, z.timestep - 1};
}

LatentCode sample_omega_value(const NoisePredictor& eps, const NoiseSchedule& sched, const LatentCode& zT,
                              int t_start, const ConditionEmbedding& c, const GuidanceConfig& gcfg) {
    Graph g;
    Var out = sample_omega(g, eps, sched, g.constant(zT.values), t_start, c, gcfg);
    return {out->value, 0};
}

// ---------------------------------------------------------------------------
// training

DenoiserTrainStats train_denoiser(Denoiser& den, const Autoencoder& ae, const DatasetManifest& data,
                                  const NoiseSchedule& sched, const ConditionProvider& cond, int epochs,
                                  real lr, real p_drop, uint64_t seed) {
    auto train_set = data.in_split(Split::Train);
    if (train_set.empty()) throw std::invalid_argument("train_denoiser: empty train split");

    DenoiserTrainStats stats;
    Rng rng(seed);
    Adam adam(lr);
    const int B = 4;
    int d_c = den.cond_dim();

    // latents are fixed while the denoiser trains; cache them
    std::vector<Tensor> latents;
    latents.reserve(train_set.size());
    for (auto* s : train_set) latents.push_back(ae.encode_value(s->pixels).values);

    for (int ep = 0; ep < epochs; ++ep) {
        std::vector<size_t> order(train_set.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        real acc = 0;
        int steps = 0;
        for (size_t i = 0; i < order.size(); i += B) {
            Graph g;
            Var loss = nullptr;
            int nb = 0;
            for (size_t j = i; j < std::min(order.size(), i + B); ++j, ++nb) {
                size_t idx = order[j];
                int t = rng.uniform_int(1, sched.T);
                Tensor eps = rng.randn(latents[idx].shape);
                LatentCode zt = forward_noise(sched, {latents[idx], 0}, t, eps);
                bool drop = rng.uniform() < p_drop;
                Var cv = drop ? g.constant(Tensor::zeros({d_c}))
                              : cond.condition_var(g, data, *train_set[idx], true);
                Var pred = den.predict(g, g.constant(zt.values), t, cv, true);
                Var l = g.mse(pred, g.constant(eps));
                loss = loss ? g.add(loss, l) : l;
            }
            loss = g.scale(loss, 1.0 / nb);
            g.backward(loss);
            adam.step(g);
            if (!std::isfinite(loss->value[0]))
                throw std::runtime_error("train_denoiser: diverged (loss not finite) at epoch " +
                                         std::to_string(ep));
            acc += loss->value[0];
            ++steps;
        }
        stats.epoch_loss.push_back(acc / steps);
    }
    den.epochs_trained += epochs;
    stats.val_eps_mse = denoiser_val_mse(den, ae, data, sched, cond, seed ^ 0xabcdef);
    return stats;
}

real denoiser_val_mse(const Denoiser& den, const Autoencoder& ae, const DatasetManifest& data,
                      const NoiseSchedule& sched, const ConditionProvider& cond, uint64_t seed) {
    auto val_set = data.in_split(Split::Val);
    if (val_set.empty()) val_set = data.in_split(Split::Train);
    Rng rng(seed);
    real acc = 0;
    int n = 0;
    for (auto* s : val_set) {
        LatentCode z0 = ae.encode_value(s->pixels);
        int t = rng.uniform_int(1, sched.T);
        Tensor eps = rng.randn(z0.values.shape);
        LatentCode zt = forward_noise(sched, z0, t, eps);
        Graph g;
        Var cv = cond.condition_var(g, data, *s, false);
        Var pred = den.predict(g, g.constant(zt.values), t, cv, false);
        Var l = g.mse(pred, g.constant(eps));
        acc += l->value[0];
        ++n;
    }
    return acc / n;
}

}  // namespace sider
