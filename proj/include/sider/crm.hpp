#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sider/coupling.hpp"
#include "sider/keygate.hpp"
#include "sider/wavelet.hpp"

namespace sider {

struct CrmConfig {
    int blocks_per_stack = 2;
    int hidden = 16;
    int key_channels = 4;
    // hiding, decoy recovery, secret recovery, low-frequency band, wrong-key decoy push
    real w_hide = 1.0, w_decoy = 2.0, w_secret = 4.0, w_lowfreq = 1.0, w_wrongkey = 1.0;
    int epochs = 60;
    real lr = 1e-3;
};

struct ProtectedBundle {
    Tensor x_hat;  // [0,1], already 8-bit quantized (what the PNG holds)
    std::string key_salt;
    std::string commitment;
    uint64_t aux_seed = 0;
    int format_version = 1;
};

enum class RecoveryPath { Unauthorized, Authorized };

struct ImageTriple {
    Tensor cover, decoy, secret;
};

struct CrmTrainStats {
    std::vector<real> epoch_loss;
};

// Nested key-gated invertible hiding in the wavelet domain. "Planes" below
// are band-stacked {12,h,w} tensors (see wavelet.hpp).
class Crm {
public:
    Crm(const CrmConfig& cfg, uint64_t init_seed, bool zero_last = true);

    // forward embeddings; second element is the lost-information branch
    std::pair<Tensor, Tensor> deep_embed(const Tensor& cover_planes, const Tensor& secret_planes,
                                         const ProtectionKey& key) const;
    std::pair<Tensor, Tensor> shallow_embed(const Tensor& h_inter_planes,
                                            const Tensor& decoy_planes) const;

    // inversions; r_sub is the true aux for exactness tests or a Gaussian
    // draw in deployment
    std::pair<Tensor, Tensor> shallow_invert(const Tensor& protected_planes, const Tensor& r_sub) const;
    std::pair<Tensor, Tensor> deep_invert(const Tensor& h_inter_planes, const ProtectionKey& key,
                                          const Tensor& r_sub) const;

    ProtectedBundle protect(const Tensor& x_cover, const Tensor& x_decoy, const Tensor& x_secret,
                            const ProtectionKey& key, uint64_t aux_seed = 1) const;
    std::pair<Tensor, RecoveryPath> recover(const ProtectedBundle& bundle,
                                            const std::optional<ProtectionKey>& key_attempt) const;

    // direct wrong-key deep inversion output (the honeypot path quality check)
    Tensor deep_inversion_image(const ProtectedBundle& bundle, const ProtectionKey& key) const;

    CrmTrainStats train(const std::vector<ImageTriple>& triples, int epochs, uint64_t seed);

    void reg(ParamList& out);
    const CrmConfig& config() const { return cfg_; }
    int epochs_trained = 0;

private:
    Tensor key_tensor(const ProtectionKey& key, int h, int w) const;

    CrmConfig cfg_;
    CouplingStack deep_, shallow_;
};

// bundle file pair: <base>.png + <base>.json sidecar
void save_bundle(const std::string& base_path, const ProtectedBundle& b);
ProtectedBundle load_bundle(const std::string& base_path);

}  // namespace sider
