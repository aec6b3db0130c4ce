#pragma once

#include <memory>
#include <optional>
#include <ostream>

#include "sider/attack.hpp"
#include "sider/config.hpp"
#include "sider/crm.hpp"
#include "sider/metrics.hpp"

namespace sider {
namespace pipeline {

struct MissingCheckpoint : std::runtime_error {
    explicit MissingCheckpoint(const std::string& m) : std::runtime_error(m) {}
};

constexpr const char* kDenoiserCkpt = "denoiser.ckpt";
constexpr const char* kEmbeddersCkpt = "embedders.ckpt";
constexpr const char* kCrmCkpt = "crm.ckpt";

// Everything a protect/recover/evaluate run needs, materialized from
// checkpoints.
struct Stack {
    PipelineConfig cfg;
    NoiseSchedule sched;
    std::unique_ptr<Autoencoder> ae;
    std::unique_ptr<Denoiser> den;
    std::unique_ptr<AttributeConditionProvider> cond;
    std::vector<std::unique_ptr<Embedder>> embedders;
    std::vector<VerificationThreshold> thresholds;
    std::unique_ptr<Crm> crm;

    GuidanceConfig guidance() const { return {cfg.diffusion.s, cfg.diffusion.lambda}; }
    AttackConfig attack_config() const;
    // surrogate ensemble for a rotation, excluding the held-out model
    EnsembleConfig surrogates(int heldout_index) const;
};

DatasetManifest load_data(const PipelineConfig& cfg);

// deterministic per-image seed derivation
uint64_t mix_seed(uint64_t seed, uint64_t stream);

// training commands; write checkpoints + run manifest into ckpt_dir
void train_denoiser_component(const PipelineConfig& cfg, const DatasetManifest& data,
                              const std::string& ckpt_dir, std::ostream& log);
void train_embedders_component(const PipelineConfig& cfg, const DatasetManifest& data,
                               const std::string& ckpt_dir, std::ostream& log);
// needs denoiser + embedders checkpoints; builds its triples with sdagm
void train_crm_component(const PipelineConfig& cfg, const DatasetManifest& data,
                         const std::string& ckpt_dir, std::ostream& log);

// loaders (throw MissingCheckpoint)
void load_diffusion(Stack& st, const std::string& ckpt_dir);
void load_embedders(Stack& st, const std::string& ckpt_dir);
void load_crm(Stack& st, const std::string& ckpt_dir);
Stack load_stack(const PipelineConfig& cfg, const std::string& ckpt_dir, bool need_diffusion,
                 bool need_embedders, bool need_crm);

struct ProtectOutcome {
    ProtectedBundle bundle;
    AdversarialPair pair;
    ProtectionKey key;
};

// full protect flow for one source image (attack pair + nested embedding)
ProtectOutcome protect_image(const Stack& st, const DatasetManifest& data, const ImageSample& sample,
                             const std::optional<ProtectionKey>& fixed_key, uint64_t aux_seed);

struct EvalOutcome {
    std::vector<QualityReport> quality;
    std::vector<ProtectionReport> protection;  // one per rotation
    real asr_overall = 0;                      // covers on held-out models, all rotations
    real asr_ablation = 0;                     // same with mu = 0 (when run)
    real median_final_loss = 0;
    real median_final_loss_ablation = 0;
    bool ablation_ran = false;
    int n_images = 0;
    std::string config_hash;
};

EvalOutcome evaluate(const Stack& st, const DatasetManifest& data, bool ablate_momentum,
                     std::ostream& log);

std::string eval_outcome_json(const EvalOutcome& e);

// run manifest: everything needed to reproduce a command's outputs
std::string run_manifest_json(const PipelineConfig& cfg, const std::vector<std::string>& checkpoint_ids,
                              const std::vector<std::string>& output_paths, real seconds);

std::string file_hash_hex(const std::string& path);

}  // namespace pipeline
}  // namespace sider
