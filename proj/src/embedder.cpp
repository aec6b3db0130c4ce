#include "sider/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace sider {

Embedder::Embedder(int resolution, int embed_dim, int n_classes, uint32_t arch_seed, uint64_t init_seed)
    : resolution_(resolution), embed_dim_(embed_dim), n_classes_(n_classes), arch_seed_(arch_seed) {
    // architecture table keyed by arch_seed
    static const int widths[4] = {10, 12, 14, 16};
    width_ = widths[arch_seed % 4];
    depth_ = 3 + (int)((arch_seed / 4) % 2);

    Rng rng(init_seed);
    int ci = 3, w = width_;
    for (int d = 0; d < depth_; ++d) {
        convs_.emplace_back(ci, w, 3, 2, 1, rng);
        ci = w;
        if (d + 1 < depth_) w = std::min(2 * w, 4 * width_);
    }
    head_ = Linear(ci, embed_dim_, rng);
    class_w_ = rng.randn({n_classes_, embed_dim_}, 1.0 / std::sqrt((real)embed_dim_));
    model_id = "embedder_a" + std::to_string(arch_seed);
}

Var Embedder::embed(Graph& g, Var image, bool train) const {
    if (image->value.ndim() != 3 || image->value.dim(0) != 3)
        throw std::invalid_argument("embed: need {3,H,W} image");
    Var h = image;
    for (auto& c : convs_) h = g.silu(c(g, h, train));
    Var pooled = g.global_avg_pool(h);
    return g.l2_normalize(head_(g, pooled, train));
}

IdentityEmbedding Embedder::embed_value(const Tensor& image) const {
    Graph g;
    return {embed(g, g.constant(image), false)->value};
}

Var Embedder::logits(Graph& g, Var embedding, int label_for_margin, bool train) const {
    Var wn = g.row_l2_normalize(g.param(const_cast<Tensor&>(class_w_), train));
    Var cosines = g.matvec(wn, embedding);
    if (label_for_margin >= 0) cosines = g.add_onehot(cosines, label_for_margin, -margin_);
    return g.scale(cosines, logit_scale_);
}

void Embedder::reg(ParamList& out) {
    for (size_t i = 0; i < convs_.size(); ++i) convs_[i].reg("emb.conv" + std::to_string(i), out);
    head_.reg("emb.head", out);
    out.push_back({"emb.class_w", &class_w_});
}

int64_t Embedder::param_count() {
    ParamList p;
    reg(p);
    int64_t n = 0;
    for (auto& [name, t] : p) n += t->size();
    return n;
}

EnsembleConfig EnsembleConfig::uniform(std::vector<const Embedder*> models) {
    return weighted(std::move(models), {});
}

EnsembleConfig EnsembleConfig::weighted(std::vector<const Embedder*> models, std::vector<real> w) {
    if (models.empty()) throw std::invalid_argument("ensemble: need at least one model");
    if (w.empty()) w.assign(models.size(), 1.0);
    if (w.size() != models.size()) throw std::invalid_argument("ensemble: weight count mismatch");
    real s = 0;
    for (real v : w) {
        if (v < 0) throw std::invalid_argument("ensemble: negative weight");
        s += v;
    }
    if (s <= 0) throw std::invalid_argument("ensemble: weights sum to zero");
    for (auto& v : w) v /= s;
    EnsembleConfig e;
    e.models = std::move(models);
    e.weights = std::move(w);
    return e;
}

Var ensemble_loss(Graph& g, const EnsembleConfig& ens, Var x_gen, const Tensor& x_ref) {
    Var loss = nullptr;
    for (size_t i = 0; i < ens.models.size(); ++i) {
        const Embedder& f = *ens.models[i];
        Var e_gen = f.embed(g, x_gen, false);
        Tensor e_ref = f.embed_value(x_ref).values;
        // w_f * (1 - cos)
        Var cosv = g.dot(e_gen, g.constant(e_ref));
        Var term = g.scale(g.add_scalar(g.scale(cosv, -1.0), 1.0), ens.weights[i]);
        loss = loss ? g.add(loss, term) : term;
    }
    return loss;
}

real ensemble_loss_value(const EnsembleConfig& ens, const Tensor& x_gen, const Tensor& x_ref) {
    Graph g;
    return ensemble_loss(g, ens, g.constant(x_gen), x_ref)->value[0];
}

real far_quantile(std::vector<real> sims, real far_target) {
    if (sims.empty()) throw std::invalid_argument("far_quantile: empty list");
    if (!(far_target > 0.0 && far_target <= 1.0))
        throw std::invalid_argument("far_quantile: far_target must be in (0,1]");
    std::sort(sims.begin(), sims.end(), std::greater<real>());
    // tau = k-th largest impostor similarity with k = floor(far*N), so the
    // fraction scoring >= tau is far_target (ties resolve to the higher value)
    int64_t n = (int64_t)sims.size();
    int64_t k = (int64_t)std::floor(far_target * (real)n + 1e-9);
    k = std::min(std::max(k, (int64_t)1), n);
    return sims[(size_t)(k - 1)];
}

VerificationThreshold calibrate_threshold(const Embedder& model, const DatasetManifest& data,
                                          real far_target) {
    std::vector<const ImageSample*> set;
    for (auto& s : data.samples) set.push_back(&s);
    std::vector<IdentityEmbedding> embs;
    embs.reserve(set.size());
    for (auto* s : set) embs.push_back(model.embed_value(s->pixels));

    std::vector<real> impostor;
    for (size_t i = 0; i < set.size(); ++i)
        for (size_t j = i + 1; j < set.size(); ++j)
            if (set[i]->identity_id != set[j]->identity_id)
                impostor.push_back(cos_sim(embs[i], embs[j]));
    if (impostor.size() < 100)
        throw std::runtime_error("calibrate_threshold: insufficient pairs (" +
                                 std::to_string(impostor.size()) + " < 100)");

    VerificationThreshold vt;
    vt.n_pairs = (int)impostor.size();
    vt.tau = far_quantile(std::move(impostor), far_target);
    vt.far_target = far_target;
    vt.model_id = model.model_id;
    vt.data_hash = data.data_hash();
    return vt;
}

std::string VerificationThreshold::to_json() const {
    nlohmann::json j;
    j["model_id"] = model_id;
    j["tau"] = tau;
    j["far_target"] = far_target;
    j["n_pairs"] = n_pairs;
    j["data_hash"] = data_hash;
    return j.dump(2);
}

EmbedderTrainStats train_embedder(Embedder& model, const DatasetManifest& data, int epochs, real lr,
                                  uint64_t seed) {
    auto train_set = data.in_split(Split::Train);
    if (train_set.empty()) throw std::invalid_argument("train_embedder: empty train split");

    // class indices are train-split-local
    std::map<int, int> class_of;
    for (auto* s : train_set)
        if (!class_of.count(s->identity_id)) {
            int next = (int)class_of.size();
            class_of[s->identity_id] = next;
        }

    EmbedderTrainStats stats;
    Rng rng(seed);
    Adam adam(lr);
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
                int label = class_of[order[j]->identity_id];
                Var e = model.embed(g, g.constant(order[j]->pixels), true);
                Var lg = model.logits(g, e, label, true);
                Var l = g.softmax_ce(lg, label);
                loss = loss ? g.add(loss, l) : l;
            }
            loss = g.scale(loss, 1.0 / nb);
            g.backward(loss);
            adam.step(g);
            if (!std::isfinite(loss->value[0]))
                throw std::runtime_error("train_embedder: diverged (loss not finite) at epoch " +
                                         std::to_string(ep));
            acc += loss->value[0];
            ++steps;
        }
        stats.epoch_loss.push_back(acc / steps);
    }
    model.epochs_trained += epochs;
    return stats;
}

real attack_success(const std::vector<real>& sims, real tau) {
    if (sims.empty()) throw std::invalid_argument("attack_success: empty list");
    int64_t hits = 0;
    for (real s : sims)
        if (s >= tau) ++hits;
    return 100.0 * (real)hits / (real)sims.size();
}

}  // namespace sider
