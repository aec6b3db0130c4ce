#pragma once

#include <string>
#include <vector>

#include "sider/tensor.hpp"

namespace sider {

// Single pipeline config file, JSON or TOML by extension. Structural keys
// (the five blocks, data.source) are required; every numeric constant has a
// default and is overridable.
struct PipelineConfig {
    struct Data {
        std::string source = "synthetic";  // "synthetic" or a dataset directory
        int resolution = 64;
        int n_identities = 40;
        int per_identity = 6;
        uint64_t seed = 7;
    } data;

    struct Diffusion {
        int T = 20;
        real beta_min = 1e-4;
        real beta_max = 0.02;
        real strength = 0.75;
        real s = 1.0;        // guidance scale
        real lambda = 3.0;   // modulation factor; effective guidance = lambda*s
        int d_cond = 16;
        int width = 24;
        std::string ae_mode = "conv";  // conv | identity
        int ae_epochs = 240;
        int epochs = 150;
        real p_drop = 0.1;
        real lr = 2e-3;
        real ae_lr = 2e-3;
        uint64_t seed = 11;
    } diffusion;

    struct Attack {
        int N = 30;
        real alpha = 0.01;
        real mu = 0.6;
        std::string mask_mode = "oval";
        std::string mask_path;
        std::vector<uint64_t> seeds = {1, 2};
    } attack;

    struct CrmBlock {
        int blocks_per_stack = 2;
        int hidden = 16;
        int key_channels = 4;
        std::vector<real> loss_weights = {1.0, 2.0, 4.0, 1.0, 1.0};
        int epochs = 60;
        real lr = 1e-3;
        uint64_t seed = 13;
        int train_triples = 24;
    } crm;

    struct Eval {
        real far_target = 0.01;
        int n_test = 50;
        int embed_dim = 128;
        int embedder_epochs = 30;
        real embedder_lr = 2e-3;
        uint64_t seed = 17;
    } eval;

    void validate() const;       // value-range checks
    std::string to_json() const; // canonical form used for hashing
    std::string config_hash() const;

    static PipelineConfig from_json_text(const std::string& text);
    static PipelineConfig from_toml_text(const std::string& text);
    static PipelineConfig from_file(const std::string& path);  // by extension
};

// thrown on schema violations; message names the offending key
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace sider
