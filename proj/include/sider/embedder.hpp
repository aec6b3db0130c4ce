#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sider/dataset.hpp"
#include "sider/graph.hpp"
#include "sider/nn.hpp"

namespace sider {

struct IdentityEmbedding {
    Tensor values;  // {d}, unit L2 norm
};

inline real cos_sim(const IdentityEmbedding& a, const IdentityEmbedding& b) {
    check_same_shape(a.values, b.values, "cos_sim");
    real s = 0;
    for (int64_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
    return s;
}

// Small conv face embedder; arch_seed picks width/depth from a fixed table so
// ensemble members and the held-out model differ architecturally.
class Embedder {
public:
    Embedder(int resolution, int embed_dim, int n_classes, uint32_t arch_seed, uint64_t init_seed);

    Var embed(Graph& g, Var image, bool train) const;  // unit-norm {d}
    IdentityEmbedding embed_value(const Tensor& image) const;

    // cosine-margin classification logits for training
    Var logits(Graph& g, Var embedding, int label_for_margin, bool train) const;

    void reg(ParamList& out);
    int64_t param_count();

    int embed_dim() const { return embed_dim_; }
    uint32_t arch_seed() const { return arch_seed_; }
    int epochs_trained = 0;
    std::string model_id;

private:
    int resolution_, embed_dim_, n_classes_;
    uint32_t arch_seed_;
    int depth_, width_;
    std::vector<Conv2d> convs_;
    Linear head_;
    Tensor class_w_;  // {n_classes, d}, rows normalized in-graph
    real margin_ = 0.2, logit_scale_ = 16.0;
};

struct EnsembleConfig {
    std::vector<const Embedder*> models;
    std::vector<real> weights;  // normalized to sum 1 on construction

    static EnsembleConfig uniform(std::vector<const Embedder*> models);
    static EnsembleConfig weighted(std::vector<const Embedder*> models, std::vector<real> w);
};

// sum_f w_f (1 - cos(f(x_gen), f(x))), differentiable w.r.t. x_gen
Var ensemble_loss(Graph& g, const EnsembleConfig& ens, Var x_gen, const Tensor& x_ref);
real ensemble_loss_value(const EnsembleConfig& ens, const Tensor& x_gen, const Tensor& x_ref);

struct VerificationThreshold {
    real tau = 0.0;
    real far_target = 0.01;
    std::string model_id;
    std::string data_hash;
    int n_pairs = 0;

    std::string to_json() const;
};

// Empirical FAR quantile over all impostor pairs of the given manifest
// (callers pass a split subset for held-out calibration). Needs >= 100 pairs.
VerificationThreshold calibrate_threshold(const Embedder& model, const DatasetManifest& data,
                                          real far_target = 0.01);

// quantile of a raw impostor-similarity list (exposed for tests)
real far_quantile(std::vector<real> impostor_sims, real far_target);

struct EmbedderTrainStats {
    std::vector<real> epoch_loss;
};

EmbedderTrainStats train_embedder(Embedder& model, const DatasetManifest& data, int epochs, real lr,
                                  uint64_t seed);

// identity-preservation ASR: percentage of sims >= tau
real attack_success(const std::vector<real>& sims, real tau);

}  // namespace sider
