#pragma once

#include <string>
#include <vector>

#include "sider/diffusion.hpp"
#include "sider/embedder.hpp"

namespace sider {

struct AttackConfig {
    int iterations = 30;    // N
    real alpha = 0.01;      // step size
    real mu = 0.6;          // momentum decay factor
    GuidanceConfig guidance;
    real strength = 0.75;   // noising strength, t_start = round(strength*T)
    std::string mask_mode = "oval";  // oval | full | external
    std::string mask_path;           // for external
    uint64_t seed_cover = 1;
    uint64_t seed_decoy = 2;

    void validate() const;
};

struct FaceMask {
    Tensor values;  // {h,w}, entries in {0,1}; broadcast over latent channels

    int64_t support() const;
};

struct MomentumState {
    Tensor g;  // shaped like z_T, starts at zero
};

struct AdversarialPair {
    Tensor x_cover;
    Tensor x_decoy;
    uint64_t seed_cover = 0, seed_decoy = 0;
    std::string config_hash;
};

struct AttackResult {
    LatentCode zT;                 // optimized initial latent
    LatentCode zT_init;            // the forward-noise initialization
    std::vector<real> loss_trace;  // entry k = loss at iteration k; last = final loss
    Tensor decoded;                // decode(omega(zT))
};

// oval: centered ellipse over the aligned face crop, majority-vote
// downsampled to latent resolution; full: all ones; external: thresholded
// mask image
FaceMask make_mask(int image_size, const std::vector<int>& latent_shape, const std::string& mode,
                   const std::string& external_path = "");

// majority-vote downsample of a binary map (exposed for tests)
Tensor majority_downsample(const Tensor& mask_hw, int h, int w);

// exact gradient of ensemble_loss(decode(omega(zT)),x) w.r.t. zT; also
// reports the loss at zT
Tensor grad_zT(const LatentCode& zT, int t_start, const Tensor& x, const EnsembleConfig& ens,
               const ConditionEmbedding& cond, const GuidanceConfig& gcfg, const NoisePredictor& den,
               const Autoencoder& ae, const NoiseSchedule& sched, real* loss_out = nullptr);

// g <- mu*g_prev + grad/||grad||_1; zero gradient is an error (stuck attack)
MomentumState momentum_step(const MomentumState& g_prev, const Tensor& grad, real mu);

// zT - alpha*sign(M (.) g) with sign(0) := 0; off-mask coordinates are
// bit-identical to the input
Tensor masked_update(const Tensor& zT, const Tensor& g, real alpha, const FaceMask& mask);

AttackResult attack(const Tensor& x, const ConditionEmbedding& cond, const EnsembleConfig& ens,
                    const NoiseSchedule& sched, const AttackConfig& cfg, uint64_t seed,
                    const NoisePredictor& den, const Autoencoder& ae, const FaceMask& mask);

AdversarialPair generate_pair(const Tensor& x, const ConditionEmbedding& cond, const EnsembleConfig& ens,
                              const NoiseSchedule& sched, const AttackConfig& cfg,
                              const NoisePredictor& den, const Autoencoder& ae, const FaceMask& mask,
                              std::vector<real>* cover_trace = nullptr,
                              std::vector<real>* decoy_trace = nullptr);

void write_loss_trace_csv(const std::string& path, const std::vector<real>& trace);

}  // namespace sider
