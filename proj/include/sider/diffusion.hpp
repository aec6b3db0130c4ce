#pragma once

#include <memory>

#include "sider/dataset.hpp"
#include "sider/graph.hpp"
#include "sider/nn.hpp"
#include "sider/schedule.hpp"

namespace sider {

struct LatentCode {
    Tensor values;  // {C,h,w}
    int timestep = 0;
};

struct ConditionEmbedding {
    Tensor values;  // {d_c}; the null embedding is the fixed all-zeros vector
    bool is_null = false;

    static ConditionEmbedding null_embedding(int d_c) {
        ConditionEmbedding c;
        c.values = Tensor::zeros({d_c});
        c.is_null = true;
        return c;
    }
};

struct GuidanceConfig {
    real s = 1.0;       // guidance scale
    real lambda = 3.0;  // modulation factor applied to the guidance differential
    real effective() const { return lambda * s; }
};

// Anything that predicts the injected noise for a latent at timestep t.
// Tests substitute oracles that return the true noise.
struct NoisePredictor {
    virtual ~NoisePredictor() = default;
    virtual Var predict(Graph& g, Var z, int t, Var cond, bool train) const = 0;
    virtual int cond_dim() const = 0;
};

// ---------------------------------------------------------------------------
// autoencoder: pluggable pixel<->latent codec

enum class AutoencoderMode { Identity, Conv };

class Autoencoder {
public:
    // identity mode: latent = 2x-1 (exact round trip); conv mode: trained codec
    Autoencoder(AutoencoderMode mode, int resolution, uint64_t init_seed);

    AutoencoderMode mode() const { return mode_; }
    std::vector<int> latent_shape() const;

    Var encode(Graph& g, Var x, bool train) const;
    Var decode(Graph& g, Var z, bool train) const;  // output in [0,1]

    LatentCode encode_value(const Tensor& image) const;
    Tensor decode_value(const Tensor& latent) const;

    // MSE reconstruction training; returns final epoch mean loss. Also
    // rescales latents to unit variance afterwards (latent_scale).
    real train(const DatasetManifest& data, int epochs, real lr, uint64_t seed);

    void reg(ParamList& out);
    real latent_scale = 1.0;
    int epochs_trained = 0;

private:
    AutoencoderMode mode_;
    int resolution_;
    Conv2d e1_, e2_, e3_, e4_;
    Conv2d d1_, d2_, d3_, d4_, d5_;
};

// ---------------------------------------------------------------------------
// conditional epsilon-predictor

class Denoiser : public NoisePredictor {
public:
    Denoiser(std::vector<int> latent_shape, int T, int d_cond, int width, uint64_t init_seed);

    Var predict(Graph& g, Var z, int t, Var cond, bool train) const override;
    int cond_dim() const override { return d_cond_; }

    Tensor time_features(int t) const;  // sinusoidal featurization of t/T

    void reg(ParamList& out);
    int epochs_trained = 0;

private:
    std::vector<int> latent_shape_;
    int T_, d_cond_, width_;
    Linear emb1_, emb2_;
    Conv2d c1_, c2_, c3_, c4_;
};

// ---------------------------------------------------------------------------
// condition providers

struct ConditionProvider {
    virtual ~ConditionProvider() = default;
    virtual ConditionEmbedding condition_for(const DatasetManifest& m, const ImageSample& s) const = 0;
    virtual Var condition_var(Graph& g, const DatasetManifest& m, const ImageSample& s, bool train) const = 0;
    virtual void reg(ParamList& out) = 0;
};

// Learned projection of the synthetic identity attributes; generalizes to
// identities unseen in training. Falls back to a seeded per-label vector when
// a manifest has no attributes (loaded real datasets).
class AttributeConditionProvider : public ConditionProvider {
public:
    AttributeConditionProvider(int d_cond, uint64_t init_seed);
    ConditionEmbedding condition_for(const DatasetManifest& m, const ImageSample& s) const override;
    Var condition_var(Graph& g, const DatasetManifest& m, const ImageSample& s, bool train) const override;
    void reg(ParamList& out) override;

private:
    std::vector<real> attributes_of(const DatasetManifest& m, const ImageSample& s) const;
    int d_cond_;
    Tensor proj_;  // {d_cond, 12}
};

// ---------------------------------------------------------------------------
// diffusion operations

// forward noising per the closed form sqrt(abar_t) z0 + sqrt(1-abar_t) eps
LatentCode forward_noise(const NoiseSchedule& sched, const LatentCode& z0, int t, const Tensor& eps);

// eps_null + lambda*s*(eps_cond - eps_null); exact single evaluation when the
// condition is null or lambda*s == 0
Var guided_score(Graph& g, const NoisePredictor& eps, const NoiseSchedule& sched, Var z, int t,
                 const ConditionEmbedding& c, const GuidanceConfig& gcfg);

// one deterministic DDIM update t -> t-1
Var ddim_step(Graph& g, const NoisePredictor& eps, const NoiseSchedule& sched, Var z, int t,
              const ConditionEmbedding& c, const GuidanceConfig& gcfg);

// full composite chain t_start -> 0; differentiable w.r.t. zT
Var sample_omega(Graph& g, const NoisePredictor& eps, const NoiseSchedule& sched, Var zT, int t_start,
                 const ConditionEmbedding& c, const GuidanceConfig& gcfg);

// value-level wrappers
Tensor guided_score_value(const NoisePredictor& eps, const NoiseSchedule& sched, const LatentCode& z,
                          const ConditionEmbedding& c, const GuidanceConfig& gcfg);
LatentCode ddim_step_value(const NoisePredictor& eps, const NoiseSchedule& sched, const LatentCode& z,
                           const ConditionEmbedding& c, const GuidanceConfig& gcfg);
LatentCode sample_omega_value(const NoisePredictor& eps, const NoiseSchedule& sched, const LatentCode& zT,
                              int t_start, const ConditionEmbedding& c, const GuidanceConfig& gcfg);

struct DenoiserTrainStats {
    std::vector<real> epoch_loss;
    real val_eps_mse = 0.0;
};

// epsilon-MSE training with condition dropout probability p_drop
DenoiserTrainStats train_denoiser(Denoiser& den, const Autoencoder& ae, const DatasetManifest& data,
                                  const NoiseSchedule& sched, const ConditionProvider& cond, int epochs,
                                  real lr, real p_drop, uint64_t seed);

// validation epsilon-MSE at fixed seeds (for before/after comparisons)
real denoiser_val_mse(const Denoiser& den, const Autoencoder& ae, const DatasetManifest& data,
                      const NoiseSchedule& sched, const ConditionProvider& cond, uint64_t seed);

}  // namespace sider
