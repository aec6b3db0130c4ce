#include "sider/pipeline.hpp"

#include <sodium.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "sider/checkpoint.hpp"
#include "sider/image_io.hpp"
#include "sider/util.hpp"

namespace fs = std::filesystem;

namespace sider {
namespace pipeline {

AttackConfig Stack::attack_config() const {
    AttackConfig a;
    a.iterations = cfg.attack.N;
    a.alpha = cfg.attack.alpha;
    a.mu = cfg.attack.mu;
    a.guidance = guidance();
    a.strength = cfg.diffusion.strength;
    a.mask_mode = cfg.attack.mask_mode;
    a.mask_path = cfg.attack.mask_path;
    a.seed_cover = cfg.attack.seeds[0];
    a.seed_decoy = cfg.attack.seeds[1];
    return a;
}

EnsembleConfig Stack::surrogates(int heldout_index) const {
    std::vector<const Embedder*> models;
    for (int i = 0; i < (int)embedders.size(); ++i)
        if (i != heldout_index) models.push_back(embedders[(size_t)i].get());
    return EnsembleConfig::uniform(std::move(models));
}

DatasetManifest load_data(const PipelineConfig& cfg) {
    if (cfg.data.source == "synthetic")
        return synth_faces(cfg.data.n_identities, cfg.data.per_identity, cfg.data.seed,
                           cfg.data.resolution);
    return load_dataset(cfg.data.source, cfg.data.resolution, cfg.data.seed);
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    // splitmix64 finalizer over the pair
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot hash missing file: " + path);
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, 16);
    char buf[65536];
    while (is) {
        is.read(buf, sizeof buf);
        crypto_generichash_update(&st, (const unsigned char*)buf, (size_t)is.gcount());
    }
    unsigned char out[16];
    crypto_generichash_final(&st, out, 16);
    char hex[33];
    sodium_bin2hex(hex, sizeof hex, out, 16);
    return hex;
}

std::string run_manifest_json(const PipelineConfig& cfg, const std::vector<std::string>& checkpoint_ids,
                              const std::vector<std::string>& output_paths, real seconds) {
    nlohmann::json j;
    j["config_hash"] = cfg.config_hash();
    j["checkpoint_ids"] = checkpoint_ids;
    j["output_paths"] = output_paths;
    j["seeds"] = {{"data", cfg.data.seed},
                  {"diffusion", cfg.diffusion.seed},
                  {"attack", cfg.attack.seeds},
                  {"crm", cfg.crm.seed},
                  {"eval", cfg.eval.seed}};
    j["seconds"] = seconds;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// training components

namespace {

nlohmann::json parse_meta(const std::string& meta) { return nlohmann::json::parse(meta); }

ParamList diffusion_params(Autoencoder& ae, Denoiser& den, AttributeConditionProvider& cond) {
    ParamList p;
    ae.reg(p);
    den.reg(p);
    cond.reg(p);
    return p;
}

}  // namespace

void train_denoiser_component(const PipelineConfig& cfg, const DatasetManifest& data,
                              const std::string& ckpt_dir, std::ostream& log) {
    fs::create_directories(ckpt_dir);
    auto mode = cfg.diffusion.ae_mode == "identity" ? AutoencoderMode::Identity : AutoencoderMode::Conv;
    Autoencoder ae(mode, cfg.data.resolution, mix_seed(cfg.diffusion.seed, 1));
    if (mode == AutoencoderMode::Conv && cfg.diffusion.ae_epochs > 0) {
        real loss = ae.train(data, cfg.diffusion.ae_epochs, cfg.diffusion.ae_lr,
                             mix_seed(cfg.diffusion.seed, 2));
        log << "autoencoder trained, final loss " << loss << ", latent_scale " << ae.latent_scale << "\n";
    }
    NoiseSchedule sched = make_schedule(cfg.diffusion.T, cfg.diffusion.beta_min, cfg.diffusion.beta_max);
    Denoiser den(ae.latent_shape(), cfg.diffusion.T, cfg.diffusion.d_cond, cfg.diffusion.width,
                 mix_seed(cfg.diffusion.seed, 3));
    AttributeConditionProvider cond(cfg.diffusion.d_cond, mix_seed(cfg.diffusion.seed, 4));
    if (cfg.diffusion.epochs > 0) {
        auto stats = train_denoiser(den, ae, data, sched, cond, cfg.diffusion.epochs, cfg.diffusion.lr,
                                    cfg.diffusion.p_drop, mix_seed(cfg.diffusion.seed, 5));
        log << "denoiser trained, first epoch loss " << stats.epoch_loss.front() << ", last "
            << stats.epoch_loss.back() << ", val eps-mse " << stats.val_eps_mse << "\n";
    }

    ParamList params = diffusion_params(ae, den, cond);
    nlohmann::json meta;
    meta["kind"] = "denoiser";
    meta["resolution"] = cfg.data.resolution;
    meta["ae_mode"] = cfg.diffusion.ae_mode;
    meta["latent_scale"] = ae.latent_scale;
    meta["ae_epochs_trained"] = ae.epochs_trained;
    meta["epochs_trained"] = den.epochs_trained;
    meta["T"] = cfg.diffusion.T;
    meta["d_cond"] = cfg.diffusion.d_cond;
    meta["width"] = cfg.diffusion.width;
    meta["param_count"] = checkpoint::total_params(params);
    std::string path = (fs::path(ckpt_dir) / kDenoiserCkpt).string();
    checkpoint::save(path, params, meta.dump());
    std::ofstream(fs::path(ckpt_dir) / "denoiser.manifest.json")
        << run_manifest_json(cfg, {file_hash_hex(path)}, {path}, 0.0) << "\n";
    log << "wrote " << path << "\n";
}

void train_embedders_component(const PipelineConfig& cfg, const DatasetManifest& data,
                               const std::string& ckpt_dir, std::ostream& log) {
    fs::create_directories(ckpt_dir);
    int n_classes = (int)data.identities_in_split(Split::Train).size();
    ParamList params;
    nlohmann::json meta;
    meta["kind"] = "embedders";
    meta["resolution"] = cfg.data.resolution;
    meta["embed_dim"] = cfg.eval.embed_dim;
    meta["n_classes"] = n_classes;
    auto taus = nlohmann::json::array();
    auto arch_seeds = nlohmann::json::array();

    std::vector<std::unique_ptr<Embedder>> models;
    for (uint32_t a = 0; a < 4; ++a) {
        auto m = std::make_unique<Embedder>(cfg.data.resolution, cfg.eval.embed_dim, n_classes, a,
                                            mix_seed(cfg.eval.seed, 10 + a));
        if (cfg.eval.embedder_epochs > 0) {
            auto stats = train_embedder(*m, data, cfg.eval.embedder_epochs, cfg.eval.embedder_lr,
                                        mix_seed(cfg.eval.seed, 20 + a));
            log << m->model_id << " trained, last epoch loss " << stats.epoch_loss.back() << "\n";
        }
        VerificationThreshold vt = calibrate_threshold(*m, data.subset(Split::Val), cfg.eval.far_target);
        std::ofstream(fs::path(ckpt_dir) / ("calibration_" + m->model_id + ".json")) << vt.to_json() << "\n";
        log << m->model_id << " tau(FAR@" << cfg.eval.far_target << ") = " << vt.tau << "\n";
        taus.push_back(vt.tau);
        arch_seeds.push_back(a);
        models.push_back(std::move(m));
    }
    for (size_t i = 0; i < models.size(); ++i) {
        ParamList sub;
        models[i]->reg(sub);
        for (auto& [name, t] : sub) params.push_back({"m" + std::to_string(i) + "." + name, t});
    }
    meta["arch_seeds"] = arch_seeds;
    meta["taus"] = taus;
    meta["far_target"] = cfg.eval.far_target;
    meta["data_hash"] = data.data_hash();
    meta["epochs_trained"] = cfg.eval.embedder_epochs;
    meta["param_count"] = checkpoint::total_params(params);
    std::string path = (fs::path(ckpt_dir) / kEmbeddersCkpt).string();
    checkpoint::save(path, params, meta.dump());
    log << "wrote " << path << "\n";
}

void load_diffusion(Stack& st, const std::string& ckpt_dir) {
    std::string path = (fs::path(ckpt_dir) / kDenoiserCkpt).string();
    if (!fs::exists(path)) throw MissingCheckpoint("missing checkpoint: " + path);
    auto meta = parse_meta(checkpoint::read_meta(path));
    auto mode = meta.at("ae_mode").get<std::string>() == "identity" ? AutoencoderMode::Identity
                                                                    : AutoencoderMode::Conv;
    st.ae = std::make_unique<Autoencoder>(mode, meta.at("resolution").get<int>(), 0);
    st.den = std::make_unique<Denoiser>(st.ae->latent_shape(), meta.at("T").get<int>(),
                                        meta.at("d_cond").get<int>(), meta.at("width").get<int>(), 0);
    st.cond = std::make_unique<AttributeConditionProvider>(meta.at("d_cond").get<int>(), 0);
    ParamList params = diffusion_params(*st.ae, *st.den, *st.cond);
    checkpoint::load(path, params);
    st.ae->latent_scale = meta.at("latent_scale").get<real>();
    st.ae->epochs_trained = meta.at("ae_epochs_trained").get<int>();
    st.den->epochs_trained = meta.at("epochs_trained").get<int>();
}

void load_embedders(Stack& st, const std::string& ckpt_dir) {
    std::string path = (fs::path(ckpt_dir) / kEmbeddersCkpt).string();
    if (!fs::exists(path)) throw MissingCheckpoint("missing checkpoint: " + path);
    auto meta = parse_meta(checkpoint::read_meta(path));
    int n_classes = meta.at("n_classes").get<int>();
    int embed_dim = meta.at("embed_dim").get<int>();
    int resolution = meta.at("resolution").get<int>();
    st.embedders.clear();
    st.thresholds.clear();
    ParamList params;
    for (size_t i = 0; i < meta.at("arch_seeds").size(); ++i) {
        uint32_t a = meta.at("arch_seeds")[i].get<uint32_t>();
        auto m = std::make_unique<Embedder>(resolution, embed_dim, n_classes, a, 0);
        m->epochs_trained = meta.at("epochs_trained").get<int>();
        ParamList sub;
        m->reg(sub);
        for (auto& [name, t] : sub) params.push_back({"m" + std::to_string(i) + "." + name, t});
        st.embedders.push_back(std::move(m));

        VerificationThreshold vt;
        vt.tau = meta.at("taus")[i].get<real>();
        vt.far_target = meta.at("far_target").get<real>();
        vt.model_id = st.embedders.back()->model_id;
        vt.data_hash = meta.at("data_hash").get<std::string>();
        st.thresholds.push_back(vt);
    }
    checkpoint::load(path, params);
}

namespace {

std::vector<ImageTriple> build_attack_triples(const Stack& st, const DatasetManifest& data,
                                              const std::vector<const ImageSample*>& sources,
                                              std::ostream& log) {
    AttackConfig acfg = st.attack_config();
    FaceMask mask = make_mask(data.resolution, st.ae->latent_shape(), acfg.mask_mode, acfg.mask_path);
    // all four embedders act as surrogates for CRM training data
    std::vector<const Embedder*> all;
    for (auto& e : st.embedders) all.push_back(e.get());
    EnsembleConfig ens = EnsembleConfig::uniform(all);

    std::vector<ImageTriple> triples(sources.size());
    parallel_for((int64_t)sources.size(), [&](int64_t i) {
        const ImageSample& s = *sources[(size_t)i];
        AttackConfig ai = acfg;
        ai.seed_cover = mix_seed(acfg.seed_cover, (uint64_t)i * 2);
        ai.seed_decoy = mix_seed(acfg.seed_decoy, (uint64_t)i * 2 + 1);
        ConditionEmbedding c = st.cond->condition_for(data, s);
        AdversarialPair p = generate_pair(s.pixels, c, ens, st.sched, ai, *st.den, *st.ae, mask);
        triples[(size_t)i] = {p.x_cover, p.x_decoy, s.pixels};
    });
    log << "built " << triples.size() << " attack triples\n";
    return triples;
}

}  // namespace

void train_crm_component(const PipelineConfig& cfg, const DatasetManifest& data,
                         const std::string& ckpt_dir, std::ostream& log) {
    fs::create_directories(ckpt_dir);
    Stack st = load_stack(cfg, ckpt_dir, true, true, false);

    // triples from train-split sources
    auto train_samples = data.in_split(Split::Train);
    std::vector<const ImageSample*> sources;
    for (size_t i = 0; i < train_samples.size() && (int)sources.size() < cfg.crm.train_triples; ++i)
        sources.push_back(train_samples[i]);
    if (sources.empty()) throw std::runtime_error("train_crm: no train samples");
    auto triples = build_attack_triples(st, data, sources, log);

    CrmConfig cc;
    cc.blocks_per_stack = cfg.crm.blocks_per_stack;
    cc.hidden = cfg.crm.hidden;
    cc.key_channels = cfg.crm.key_channels;
    cc.w_hide = cfg.crm.loss_weights[0];
    cc.w_decoy = cfg.crm.loss_weights[1];
    cc.w_secret = cfg.crm.loss_weights[2];
    cc.w_lowfreq = cfg.crm.loss_weights[3];
    cc.w_wrongkey = cfg.crm.loss_weights[4];
    cc.lr = cfg.crm.lr;
    Crm crm(cc, mix_seed(cfg.crm.seed, 1));
    if (cfg.crm.epochs > 0) {
        auto stats = crm.train(triples, cfg.crm.epochs, mix_seed(cfg.crm.seed, 2));
        log << "crm trained, first epoch loss " << stats.epoch_loss.front() << ", last "
            << stats.epoch_loss.back() << "\n";
    }

    ParamList params;
    crm.reg(params);
    nlohmann::json meta;
    meta["kind"] = "crm";
    meta["blocks_per_stack"] = cc.blocks_per_stack;
    meta["hidden"] = cc.hidden;
    meta["key_channels"] = cc.key_channels;
    meta["epochs_trained"] = crm.epochs_trained;
    meta["param_count"] = checkpoint::total_params(params);
    std::string path = (fs::path(ckpt_dir) / kCrmCkpt).string();
    checkpoint::save(path, params, meta.dump());
    log << "wrote " << path << "\n";
}

void load_crm(Stack& st, const std::string& ckpt_dir) {
    std::string path = (fs::path(ckpt_dir) / kCrmCkpt).string();
    if (!fs::exists(path)) throw MissingCheckpoint("missing checkpoint: " + path);
    auto meta = parse_meta(checkpoint::read_meta(path));
    CrmConfig cc;
    cc.blocks_per_stack = meta.at("blocks_per_stack").get<int>();
    cc.hidden = meta.at("hidden").get<int>();
    cc.key_channels = meta.at("key_channels").get<int>();
    st.crm = std::make_unique<Crm>(cc, 0);
    ParamList params;
    st.crm->reg(params);
    checkpoint::load(path, params);
    st.crm->epochs_trained = meta.at("epochs_trained").get<int>();
}

Stack load_stack(const PipelineConfig& cfg, const std::string& ckpt_dir, bool need_diffusion,
                 bool need_embedders, bool need_crm) {
    Stack st;
    st.cfg = cfg;
    st.sched = make_schedule(cfg.diffusion.T, cfg.diffusion.beta_min, cfg.diffusion.beta_max);
    if (need_diffusion) load_diffusion(st, ckpt_dir);
    if (need_embedders) load_embedders(st, ckpt_dir);
    if (need_crm) load_crm(st, ckpt_dir);
    return st;
}

// ---------------------------------------------------------------------------
// protect / evaluate

ProtectOutcome protect_image(const Stack& st, const DatasetManifest& data, const ImageSample& sample,
                             const std::optional<ProtectionKey>& fixed_key, uint64_t aux_seed) {
    AttackConfig acfg = st.attack_config();
    FaceMask mask = make_mask(data.resolution, st.ae->latent_shape(), acfg.mask_mode, acfg.mask_path);
    std::vector<const Embedder*> all;
    for (auto& e : st.embedders) all.push_back(e.get());
    EnsembleConfig ens = EnsembleConfig::uniform(all);
    ConditionEmbedding c = st.cond->condition_for(data, sample);

    ProtectOutcome out;
    out.pair = generate_pair(sample.pixels, c, ens, st.sched, acfg, *st.den, *st.ae, mask);
    out.key = fixed_key ? *fixed_key : ProtectionKey::generate();
    out.bundle = st.crm->protect(out.pair.x_cover, out.pair.x_decoy, sample.pixels, out.key, aux_seed);
    return out;
}

EvalOutcome evaluate(const Stack& st, const DatasetManifest& data, bool ablate_momentum,
                     std::ostream& log) {
    EvalOutcome out;
    out.config_hash = st.cfg.config_hash();

    auto test_set = data.in_split(Split::Test);
    if (test_set.empty()) throw ConfigError("empty test split");
    int n = std::min((int)test_set.size(), st.cfg.eval.n_test);
    out.n_images = n;
    int n_rot = (int)st.embedders.size();

    AttackConfig acfg = st.attack_config();
    FaceMask mask = make_mask(data.resolution, st.ae->latent_shape(), acfg.mask_mode, acfg.mask_path);

    struct PerImage {
        Tensor source, cover, decoy, protected_img, unauth, auth, wrongkey_deep;
        real final_loss = 0, final_loss_mu0 = 0;
        real cover_sim_heldout = 0, cover_sim_heldout_mu0 = 0;
        int rotation = 0;
    };
    std::vector<PerImage> rows((size_t)n);

    log << "evaluating " << n << " test images over " << n_rot << " rotations\n";
    parallel_for(n, [&](int64_t i) {
        const ImageSample& s = *test_set[(size_t)i];
        PerImage& r = rows[(size_t)i];
        r.rotation = (int)(i % n_rot);
        const Embedder& heldout = *st.embedders[(size_t)r.rotation];
        EnsembleConfig ens = st.surrogates(r.rotation);
        ConditionEmbedding c = st.cond->condition_for(data, s);

        AttackConfig ai = acfg;
        ai.seed_cover = mix_seed(acfg.seed_cover, (uint64_t)i * 2);
        ai.seed_decoy = mix_seed(acfg.seed_decoy, (uint64_t)i * 2 + 1);
        std::vector<real> cover_trace;
        AdversarialPair p =
            generate_pair(s.pixels, c, ens, st.sched, ai, *st.den, *st.ae, mask, &cover_trace, nullptr);
        r.source = s.pixels;
        r.cover = p.x_cover;
        r.decoy = p.x_decoy;
        r.final_loss = cover_trace.back();
        r.cover_sim_heldout =
            cos_sim(heldout.embed_value(p.x_cover), heldout.embed_value(s.pixels));

        ProtectionKey key = ProtectionKey::from_seed(mix_seed(st.cfg.eval.seed, 1000 + (uint64_t)i));
        uint64_t aux_seed = mix_seed(st.cfg.eval.seed, 2000 + (uint64_t)i);
        ProtectedBundle b = st.crm->protect(p.x_cover, p.x_decoy, s.pixels, key, aux_seed);
        r.protected_img = b.x_hat;
        r.unauth = st.crm->recover(b, std::nullopt).first;
        r.auth = st.crm->recover(b, key).first;
        ProtectionKey wrong = ProtectionKey::from_seed(mix_seed(st.cfg.eval.seed, 3000 + (uint64_t)i));
        wrong.key_id = key.key_id;  // same salt, wrong bits
        r.wrongkey_deep = st.crm->deep_inversion_image(b, wrong);

        if (ablate_momentum) {
            AttackConfig a0 = ai;
            a0.mu = 0.0;
            AttackResult res0 = attack(s.pixels, c, ens, st.sched, a0, a0.seed_cover, *st.den, *st.ae, mask);
            r.final_loss_mu0 = res0.loss_trace.back();
            r.cover_sim_heldout_mu0 =
                cos_sim(heldout.embed_value(res0.decoded), heldout.embed_value(s.pixels));
        }
    });

    // quality rows (metrics on the 8-bit view a PNG consumer sees)
    std::vector<std::tuple<Tensor, Tensor, std::string>> qpairs;
    for (auto& r : rows) {
        qpairs.push_back({quantize8(r.protected_img), quantize8(r.cover), "Cover/Hidden"});
        qpairs.push_back({quantize8(r.unauth), quantize8(r.decoy), "Decoy/Recovery-Unauthorized"});
        qpairs.push_back({quantize8(r.auth), quantize8(r.source), "Secret/Recovery-Authorized"});
        qpairs.push_back({quantize8(r.wrongkey_deep), quantize8(r.source), "Secret/WrongKey-Deep"});
    }
    out.quality = quality_report(qpairs);

    // protection reports per rotation, the four roles of the protocol
    std::vector<real> cover_sims_all, cover_sims_mu0;
    for (int rot = 0; rot < n_rot; ++rot) {
        std::vector<Tensor> sources;
        std::vector<std::pair<std::string, std::vector<Tensor>>> roles(4);
        roles[0].first = "Cover";
        roles[1].first = "Decoy";
        roles[2].first = "Hidden";
        roles[3].first = "Recovery-Unauthorized";
        for (auto& r : rows) {
            if (r.rotation != rot) continue;
            sources.push_back(r.source);
            roles[0].second.push_back(r.cover);
            roles[1].second.push_back(r.decoy);
            roles[2].second.push_back(r.protected_img);
            roles[3].second.push_back(r.unauth);
        }
        if (sources.empty()) continue;
        ProtectionReport rep =
            protection_report(roles, sources, *st.embedders[(size_t)rot], st.thresholds[(size_t)rot].tau);
        rep.config_hash = out.config_hash;
        out.protection.push_back(rep);
    }
    for (auto& r : rows) {
        cover_sims_all.push_back(r.cover_sim_heldout >= st.thresholds[(size_t)r.rotation].tau ? 1.0 : 0.0);
        if (ablate_momentum)
            cover_sims_mu0.push_back(r.cover_sim_heldout_mu0 >= st.thresholds[(size_t)r.rotation].tau ? 1.0
                                                                                                      : 0.0);
    }
    out.asr_overall = 100.0 * std::accumulate(cover_sims_all.begin(), cover_sims_all.end(), 0.0) /
                      (real)cover_sims_all.size();

    auto median = [](std::vector<real> v) {
        std::sort(v.begin(), v.end());
        size_t m = v.size() / 2;
        return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    };
    std::vector<real> fl;
    for (auto& r : rows) fl.push_back(r.final_loss);
    out.median_final_loss = median(fl);

    if (ablate_momentum) {
        out.ablation_ran = true;
        out.asr_ablation = 100.0 * std::accumulate(cover_sims_mu0.begin(), cover_sims_mu0.end(), 0.0) /
                           (real)cover_sims_mu0.size();
        std::vector<real> fl0;
        for (auto& r : rows) fl0.push_back(r.final_loss_mu0);
        out.median_final_loss_ablation = median(fl0);
    }
    return out;
}

std::string eval_outcome_json(const EvalOutcome& e) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config_hash"] = e.config_hash;
    j["n_images"] = e.n_images;
    j["asr_overall_cover_heldout"] = e.asr_overall;
    j["median_final_loss"] = e.median_final_loss;
    if (e.ablation_ran) {
        j["ablation"] = {{"mu", 0.0},
                         {"asr_overall_cover_heldout", e.asr_ablation},
                         {"median_final_loss", e.median_final_loss_ablation}};
    }
    auto& q = j["quality"] = nlohmann::json::array();
    for (auto& r : e.quality)
        q.push_back({{"pair_tag", r.pair_tag},
                     {"psnr_db", r.psnr_db},
                     {"ssim", r.ssim_val},
                     {"mse", r.mse},
                     {"rmse", r.rmse}});
    auto& p = j["protection"] = nlohmann::json::array();
    for (auto& rep : e.protection) {
        nlohmann::json rj;
        rj["model_id"] = rep.model_id;
        rj["tau"] = rep.tau;
        rj["n_samples"] = rep.n_samples;
        auto& roles = rj["roles"] = nlohmann::json::array();
        for (auto& rr : rep.roles) roles.push_back({{"role", rr.role}, {"asr", rr.asr}, {"n", rr.n}});
        p.push_back(rj);
    }
    return j.dump(2);
}

}  // namespace pipeline
}  // namespace sider
