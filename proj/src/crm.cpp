#include "sider/crm.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "json.hpp"
#include "sider/image_io.hpp"
#include "sider/util.hpp"

namespace sider {

Crm::Crm(const CrmConfig& cfg, uint64_t init_seed, bool zero_last)
    : cfg_(cfg),
      deep_(12, cfg.key_channels, cfg.blocks_per_stack, cfg.hidden, init_seed, zero_last),
      shallow_(12, 0, cfg.blocks_per_stack, cfg.hidden, init_seed ^ 0x51deb00bULL, zero_last) {}

Tensor Crm::key_tensor(const ProtectionKey& key, int h, int w) const {
    return key_expand(key, {cfg_.key_channels, h, w});
}

std::pair<Tensor, Tensor> Crm::deep_embed(const Tensor& cover_planes, const Tensor& secret_planes,
                                          const ProtectionKey& key) const {
    check_same_shape(cover_planes, secret_planes, "deep_embed");
    Graph g;
    Var K = g.constant(key_tensor(key, cover_planes.dim(1), cover_planes.dim(2)));
    auto [a, b] = deep_.forward(g, g.constant(cover_planes), g.constant(secret_planes), K, false);
    return {a->value, b->value};
}

std::pair<Tensor, Tensor> Crm::shallow_embed(const Tensor& h_inter_planes,
                                             const Tensor& decoy_planes) const {
    check_same_shape(h_inter_planes, decoy_planes, "shallow_embed");
    Graph g;
    auto [a, b] = shallow_.forward(g, g.constant(h_inter_planes), g.constant(decoy_planes), nullptr, false);
    return {a->value, b->value};
}

std::pair<Tensor, Tensor> Crm::shallow_invert(const Tensor& protected_planes, const Tensor& r_sub) const {
    Graph g;
    auto [a, b] = shallow_.inverse(g, g.constant(protected_planes), g.constant(r_sub), nullptr, false);
    return {a->value, b->value};
}

std::pair<Tensor, Tensor> Crm::deep_invert(const Tensor& h_inter_planes, const ProtectionKey& key,
                                           const Tensor& r_sub) const {
    Graph g;
    Var K = g.constant(key_tensor(key, h_inter_planes.dim(1), h_inter_planes.dim(2)));
    auto [a, b] = deep_.inverse(g, g.constant(h_inter_planes), g.constant(r_sub), K, false);
    return {a->value, b->value};
}

ProtectedBundle Crm::protect(const Tensor& x_cover, const Tensor& x_decoy, const Tensor& x_secret,
                             const ProtectionKey& key, uint64_t aux_seed) const {
    check_same_shape(x_cover, x_decoy, "protect");
    check_same_shape(x_cover, x_secret, "protect");
    if (epochs_trained == 0)
        std::cerr << "warning: protect() with an untrained CRM; round-trip quality unguaranteed\n";

    auto [h_inter, r_deep] = deep_embed(dwt_stack(x_cover), dwt_stack(x_secret), key);
    auto [prot, r_shallow] = shallow_embed(h_inter, dwt_stack(x_decoy));
    Tensor x_hat = idwt_stack(prot);

    ProtectedBundle b;
    b.x_hat = quantize8(x_hat);  // saved as 8-bit PNG; keep the two views identical
    b.key_salt = key.key_id;
    b.commitment = key_commitment(key);
    b.aux_seed = aux_seed;
    return b;
}

std::pair<Tensor, RecoveryPath> Crm::recover(const ProtectedBundle& bundle,
                                             const std::optional<ProtectionKey>& key_attempt) const {
    Tensor planes = dwt_stack(bundle.x_hat);
    Rng aux1(bundle.aux_seed ^ 0x5157a110c5ULL);
    Tensor r1 = aux1.randn(planes.shape);
    auto [h_inter, decoy] = shallow_invert(planes, r1);

    bool authorized = key_attempt.has_value() &&
                      verify_commitment(*key_attempt, bundle.key_salt, bundle.commitment);
    if (!authorized) {
        Tensor out = idwt_stack(decoy);
        for (auto& v : out.data) v = std::min(1.0, std::max(0.0, v));
        return {out, RecoveryPath::Unauthorized};
    }
    Rng aux2(bundle.aux_seed ^ 0xdeeb1a7e5ULL);
    Tensor r2 = aux2.randn(planes.shape);
    auto [cover, secret] = deep_invert(h_inter, *key_attempt, r2);
    Tensor out = idwt_stack(secret);
    for (auto& v : out.data) v = std::min(1.0, std::max(0.0, v));
    return {out, RecoveryPath::Authorized};
}

Tensor Crm::deep_inversion_image(const ProtectedBundle& bundle, const ProtectionKey& key) const {
    Tensor planes = dwt_stack(bundle.x_hat);
    Rng aux1(bundle.aux_seed ^ 0x5157a110c5ULL);
    auto [h_inter, decoy] = shallow_invert(planes, aux1.randn(planes.shape));
    Rng aux2(bundle.aux_seed ^ 0xdeeb1a7e5ULL);
    auto [cover, secret] = deep_invert(h_inter, key, aux2.randn(planes.shape));
    Tensor out = idwt_stack(secret);
    for (auto& v : out.data) v = std::min(1.0, std::max(0.0, v));
    return out;
}

CrmTrainStats Crm::train(const std::vector<ImageTriple>& triples, int epochs, uint64_t seed) {
    if (triples.empty()) throw std::invalid_argument("train_crm: empty triple manifest");
    CrmTrainStats stats;
    Rng rng(seed);
    Adam adam(cfg_.lr);

    int h = triples[0].cover.dim(1) / 2, w = triples[0].cover.dim(2) / 2;
    const int B = 2;

    for (int ep = 0; ep < epochs; ++ep) {
        std::vector<size_t> order(triples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        real acc = 0;
        int steps = 0;
        for (size_t i = 0; i < order.size(); i += B) {
            size_t nb = std::min(order.size(), i + B) - i;
            // per-item randomness drawn up front so threading stays deterministic
            std::vector<ProtectionKey> keys(nb), wrong(nb);
            std::vector<Tensor> Ks(nb), Kw(nb), r1s(nb), r2s(nb);
            for (size_t j = 0; j < nb; ++j) {
                keys[j] = ProtectionKey::from_seed(rng.next_u64());
                wrong[j] = ProtectionKey::from_seed(rng.next_u64());
                Ks[j] = key_tensor(keys[j], h, w);
                Kw[j] = key_tensor(wrong[j], h, w);
                r1s[j] = rng.randn({12, h, w});
                r2s[j] = rng.randn({12, h, w});
            }
            std::vector<std::unique_ptr<Graph>> graphs(nb);
            std::vector<real> losses(nb, 0.0);
            parallel_for((int64_t)nb, [&](int64_t j) {
                auto& g = *(graphs[(size_t)j] = std::make_unique<Graph>());
                const ImageTriple& tr = triples[order[i + (size_t)j]];
                Var cp = g.dwt2(g.constant(tr.cover));
                Var sp = g.dwt2(g.constant(tr.secret));
                Var dp = g.dwt2(g.constant(tr.decoy));
                Var K = g.constant(Ks[(size_t)j]);
                auto [hi, r_deep] = deep_.forward(g, cp, sp, K, true);
                auto [pr, r_sh] = shallow_.forward(g, hi, dp, nullptr, true);
                Var xh = g.idwt2(pr);
                // deployment path: 8-bit PNG round trip, straight-through grads
                Var pq = g.dwt2(g.quantize8_ste(g.clamp01(xh)));
                auto [hi2, drec] = shallow_.inverse(g, pq, g.constant(r1s[(size_t)j]), nullptr, true);
                Var r2 = g.constant(r2s[(size_t)j]);
                auto [crec, srec] = deep_.inverse(g, hi2, r2, K, true);
                auto [cw, sw] = deep_.inverse(g, hi2, r2, g.constant(Kw[(size_t)j]), true);

                Var loss = g.scale(g.mse(xh, g.constant(tr.cover)), cfg_.w_hide);
                loss = g.add(loss, g.scale(g.mse(g.idwt2(drec), g.constant(tr.decoy)), cfg_.w_decoy));
                loss = g.add(loss, g.scale(g.mse(g.idwt2(srec), g.constant(tr.secret)), cfg_.w_secret));
                loss = g.add(loss, g.scale(g.mse(g.slice_ch(pr, 0, 3), g.slice_ch(cp, 0, 3)), cfg_.w_lowfreq));
                loss = g.add(loss, g.scale(g.mse(g.idwt2(sw), g.constant(tr.decoy)), cfg_.w_wrongkey));
                loss = g.scale(loss, 1.0 / (real)nb);
                g.backward(loss);
                losses[(size_t)j] = loss->value[0] * (real)nb;
            }, 2);
            std::vector<Graph*> batch;
            for (auto& g : graphs) batch.push_back(g.get());
            adam.step(batch);
            for (size_t j = 0; j < nb; ++j) {
                if (!std::isfinite(losses[j]))
                    throw std::runtime_error("train_crm: diverged (loss not finite) at epoch " +
                                             std::to_string(ep));
                acc += losses[j];
            }
            ++steps;
        }
        stats.epoch_loss.push_back(acc / (real)(steps * B));
    }
    epochs_trained += epochs;
    return stats;
}

void Crm::reg(ParamList& out) {
    deep_.reg("crm.deep", out);
    shallow_.reg("crm.shallow", out);
}

void save_bundle(const std::string& base_path, const ProtectedBundle& b) {
    write_png(base_path + ".png", b.x_hat);
    nlohmann::json j;
    j["format_version"] = b.format_version;
    j["key_salt"] = b.key_salt;
    j["commitment"] = b.commitment;
    j["aux_seed"] = b.aux_seed;
    std::ofstream os(base_path + ".json");
    if (!os) throw std::runtime_error("cannot write " + base_path + ".json");
    os << j.dump(2) << "\n";
}

ProtectedBundle load_bundle(const std::string& base_path) {
    ProtectedBundle b;
    b.x_hat = read_png(base_path + ".png");
    std::ifstream is(base_path + ".json");
    if (!is) throw std::runtime_error("bundle sidecar missing: " + base_path + ".json");
    nlohmann::json j;
    try {
        is >> j;
        b.format_version = j.at("format_version").get<int>();
        b.key_salt = j.at("key_salt").get<std::string>();
        b.commitment = j.at("commitment").get<std::string>();
        b.aux_seed = j.at("aux_seed").get<uint64_t>();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("corrupted bundle header: ") + e.what());
    }
    if (b.format_version != 1) throw std::runtime_error("corrupted bundle header: unsupported version");
    return b;
}

}  // namespace sider
