#pragma once

#include <string>
#include <vector>

#include "sider/embedder.hpp"
#include "sider/tensor.hpp"

namespace sider {

// all metrics on the [0,1] pixel scale
real mse_metric(const Tensor& a, const Tensor& b);
real psnr(const Tensor& a, const Tensor& b);  // 10*log10(1/mse), capped at 99 dB
real ssim(const Tensor& a, const Tensor& b, int window = 8, real k1 = 0.01, real k2 = 0.03);

struct QualityReport {
    real psnr_db = 0, ssim_val = 0, mse = 0, rmse = 0;
    std::string pair_tag;
};

QualityReport measure_pair(const Tensor& a, const Tensor& b, const std::string& tag);

// one report per pair plus one aggregate (mean) row per tag
std::vector<QualityReport> quality_report(
    const std::vector<std::tuple<Tensor, Tensor, std::string>>& pairs);

std::string quality_report_json(const std::vector<QualityReport>& reports);
std::string quality_report_csv(const std::vector<QualityReport>& reports);

struct RoleResult {
    std::string role;
    real asr = 0;
    int n = 0;
};

struct ProtectionReport {
    std::vector<RoleResult> roles;  // cover, decoy, protected, recovery_unauthorized
    std::string model_id;
    real tau = 0;
    int n_samples = 0;
    std::string config_hash;
};

// role -> image lists, each aligned with sources; ASR counts sims >= tau on
// the held-out model (identity preservation)
ProtectionReport protection_report(const std::vector<std::pair<std::string, std::vector<Tensor>>>& role_sets,
                                   const std::vector<Tensor>& sources, const Embedder& heldout, real tau);

std::string protection_report_json(const ProtectionReport& r);
std::string protection_report_csv(const ProtectionReport& r);

}  // namespace sider
