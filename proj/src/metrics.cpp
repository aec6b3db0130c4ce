#include "sider/metrics.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace sider {

real mse_metric(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    real s = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        real d = a[i] - b[i];
        s += d * d;
    }
    return s / (real)a.size();
}

real psnr(const Tensor& a, const Tensor& b) {
    real m = mse_metric(a, b);
    if (m < 1e-10) return 99.0;
    return std::min(10.0 * std::log10(1.0 / m), 99.0);
}

real ssim(const Tensor& a, const Tensor& b, int window, real k1, real k2) {
    check_same_shape(a, b, "ssim");
    if (a.ndim() != 3) throw std::invalid_argument("ssim: need {C,H,W}");
    int C = a.dim(0), H = a.dim(1), W = a.dim(2);
    if (H < window || W < window) throw std::invalid_argument("ssim: image smaller than window");
    const real c1 = k1 * k1, c2 = k2 * k2;  // dynamic range L = 1
    real total = 0;
    int64_t count = 0;
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y + window <= H; ++y) {
            for (int x = 0; x + window <= W; ++x) {
                real ma = 0, mb = 0;
                for (int dy = 0; dy < window; ++dy)
                    for (int dx = 0; dx < window; ++dx) {
                        ma += a.at3(c, y + dy, x + dx);
                        mb += b.at3(c, y + dy, x + dx);
                    }
                real n = (real)(window * window);
                ma /= n;
                mb /= n;
                real va = 0, vb = 0, cov = 0;
                for (int dy = 0; dy < window; ++dy)
                    for (int dx = 0; dx < window; ++dx) {
                        real da = a.at3(c, y + dy, x + dx) - ma;
                        real db = b.at3(c, y + dy, x + dx) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                va /= n - 1;
                vb /= n - 1;
                cov /= n - 1;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return total / (real)count;
}

QualityReport measure_pair(const Tensor& a, const Tensor& b, const std::string& tag) {
    QualityReport r;
    r.mse = mse_metric(a, b);
    r.rmse = std::sqrt(r.mse);
    r.psnr_db = psnr(a, b);
    r.ssim_val = ssim(a, b);
    r.pair_tag = tag;
    return r;
}

std::vector<QualityReport> quality_report(
    const std::vector<std::tuple<Tensor, Tensor, std::string>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("quality_report: empty pair list");
    std::vector<QualityReport> out;
    std::map<std::string, std::vector<size_t>> by_tag;
    for (auto& [a, b, tag] : pairs) {
        by_tag[tag].push_back(out.size());
        out.push_back(measure_pair(a, b, tag));
    }
    for (auto& [tag, idxs] : by_tag) {
        QualityReport agg;
        agg.pair_tag = tag + "/mean";
        for (size_t i : idxs) {
            agg.psnr_db += out[i].psnr_db;
            agg.ssim_val += out[i].ssim_val;
            agg.mse += out[i].mse;
            agg.rmse += out[i].rmse;
        }
        real n = (real)idxs.size();
        agg.psnr_db /= n;
        agg.ssim_val /= n;
        agg.mse /= n;
        agg.rmse /= n;
        out.push_back(agg);
    }
    return out;
}

std::string quality_report_json(const std::vector<QualityReport>& reports) {
    nlohmann::json j;
    j["schema_version"] = 1;
    auto& rows = j["rows"] = nlohmann::json::array();
    for (auto& r : reports)
        rows.push_back({{"pair_tag", r.pair_tag},
                        {"psnr_db", r.psnr_db},
                        {"ssim", r.ssim_val},
                        {"mse", r.mse},
                        {"rmse", r.rmse}});
    return j.dump(2);
}

std::string quality_report_csv(const std::vector<QualityReport>& reports) {
    std::ostringstream os;
    os << "pair_tag,psnr_db,ssim,mse,rmse\n";
    for (auto& r : reports)
        os << r.pair_tag << "," << r.psnr_db << "," << r.ssim_val << "," << r.mse << "," << r.rmse << "\n";
    return os.str();
}

ProtectionReport protection_report(const std::vector<std::pair<std::string, std::vector<Tensor>>>& role_sets,
                                   const std::vector<Tensor>& sources, const Embedder& heldout, real tau) {
    if (sources.empty()) throw std::invalid_argument("protection_report: no sources");
    std::vector<IdentityEmbedding> src_emb;
    src_emb.reserve(sources.size());
    for (auto& s : sources) src_emb.push_back(heldout.embed_value(s));

    ProtectionReport rep;
    rep.model_id = heldout.model_id;
    rep.tau = tau;
    rep.n_samples = (int)sources.size();
    for (auto& [role, images] : role_sets) {
        if (images.size() != sources.size())
            throw std::invalid_argument("protection_report: misaligned lists for role " + role);
        std::vector<real> sims;
        sims.reserve(images.size());
        for (size_t i = 0; i < images.size(); ++i)
            sims.push_back(cos_sim(heldout.embed_value(images[i]), src_emb[i]));
        rep.roles.push_back({role, attack_success(sims, tau), (int)sims.size()});
    }
    return rep;
}

std::string protection_report_json(const ProtectionReport& r) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["model_id"] = r.model_id;
    j["tau"] = r.tau;
    j["n_samples"] = r.n_samples;
    j["config_hash"] = r.config_hash;
    auto& rows = j["roles"] = nlohmann::json::array();
    for (auto& rr : r.roles) rows.push_back({{"role", rr.role}, {"asr", rr.asr}, {"n", rr.n}});
    return j.dump(2);
}

std::string protection_report_csv(const ProtectionReport& r) {
    std::ostringstream os;
    os << "role,asr,n,model_id,tau\n";
    for (auto& rr : r.roles)
        os << rr.role << "," << rr.asr << "," << rr.n << "," << r.model_id << "," << r.tau << "\n";
    return os.str();
}

}  // namespace sider
