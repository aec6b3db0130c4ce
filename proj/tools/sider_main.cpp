// sider: train | protect | recover | evaluate
//
// exit codes: 0 ok, 2 config/schema violation, 3 training abort,
// 4 missing checkpoint, 5 corrupt bundle sidecar

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "sider/checkpoint.hpp"
#include "sider/image_io.hpp"
#include "sider/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sider;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitMissingCkpt = 4;
constexpr int kExitCorruptBundle = 5;

PipelineConfig load_config(const std::string& path, std::optional<uint64_t> seed_override) {
    PipelineConfig cfg = PipelineConfig::from_file(path);
    if (seed_override) {
        uint64_t s = *seed_override;
        cfg.data.seed = pipeline::mix_seed(s, 1);
        cfg.diffusion.seed = pipeline::mix_seed(s, 2);
        cfg.attack.seeds = {pipeline::mix_seed(s, 3), pipeline::mix_seed(s, 4)};
        cfg.crm.seed = pipeline::mix_seed(s, 5);
        cfg.eval.seed = pipeline::mix_seed(s, 6);
    }
    return cfg;
}

ProtectionKey read_key_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open key file: " + path);
    std::string bits_hex, salt_hex;
    is >> bits_hex >> salt_hex;
    if (salt_hex.empty()) throw std::runtime_error("key file needs '<bits-hex> <salt-hex>'");
    return ProtectionKey::from_hex(bits_hex, salt_hex);
}

int cmd_train(const std::string& component, const std::string& config_path,
              std::optional<uint64_t> seed_override, const std::string& ckpt_dir) {
    PipelineConfig cfg = load_config(config_path, seed_override);
    DatasetManifest data = pipeline::load_data(cfg);
    auto t0 = std::chrono::steady_clock::now();
    if (component == "denoiser")
        pipeline::train_denoiser_component(cfg, data, ckpt_dir, std::cout);
    else if (component == "embedders")
        pipeline::train_embedders_component(cfg, data, ckpt_dir, std::cout);
    else if (component == "crm")
        pipeline::train_crm_component(cfg, data, ckpt_dir, std::cout);
    else
        throw ConfigError("unknown train component: " + component);
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "done in " << dt << " s\n";
    return 0;
}

int cmd_protect(const std::string& input, const std::string& config_path,
                std::optional<uint64_t> seed_override, const std::string& ckpt_dir,
                const std::string& out_base, const std::string& key_file, bool json_out) {
    PipelineConfig cfg = load_config(config_path, seed_override);
    pipeline::Stack st = pipeline::load_stack(cfg, ckpt_dir, true, true, true);

    DatasetManifest data = pipeline::load_data(cfg);
    ImageSample sample;
    sample.pixels = crop_resize(read_png(input), cfg.data.resolution);
    sample.identity_id = -1;
    sample.source = input;

    std::optional<ProtectionKey> fixed;
    if (!key_file.empty()) fixed = read_key_file(key_file);

    auto t0 = std::chrono::steady_clock::now();
    uint64_t aux_seed = pipeline::mix_seed(cfg.eval.seed, 77);
    pipeline::ProtectOutcome out = pipeline::protect_image(st, data, sample, fixed, aux_seed);
    save_bundle(out_base, out.bundle);
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<std::string> ckpts;
    for (const char* c : {pipeline::kDenoiserCkpt, pipeline::kEmbeddersCkpt, pipeline::kCrmCkpt})
        ckpts.push_back(pipeline::file_hash_hex((fs::path(ckpt_dir) / c).string()));
    std::ofstream(out_base + ".manifest.json")
        << pipeline::run_manifest_json(cfg, ckpts, {out_base + ".png", out_base + ".json"}, dt) << "\n";

    // the key goes to stdout only, never into any written file
    if (json_out) {
        nlohmann::json j;
        j["bundle"] = out_base + ".png";
        j["sidecar"] = out_base + ".json";
        j["key"] = out.key.bits_hex();
        j["key_salt"] = out.key.key_id;
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "bundle: " << out_base << ".png\n";
        std::cout << "key: " << out.key.bits_hex() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SIDeR pipeline: identity-preserving face protection with key-gated recovery"};
    app.require_subcommand(1);

    std::string config_path, ckpt_dir = "checkpoints";
    std::optional<uint64_t> seed_override;
    bool json_out = false;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* c = sub->add_option("--config", config_path, "pipeline config file (.json or .toml)");
        if (need_config) c->required();
        sub->add_option("--ckpt-dir", ckpt_dir, "checkpoint directory");
        sub->add_option("--seed", seed_override, "override all config seeds");
        sub->add_flag("--json", json_out, "machine-readable stdout");
    };

    // train
    auto* train = app.add_subcommand("train", "train a component");
    std::string component;
    train->add_option("component", component, "denoiser | embedders | crm")->required();
    add_common(train, true);

    // protect
    auto* protect = app.add_subcommand("protect", "generate the adversarial pair and embed the secret");
    std::string input_image, out_base = "protected", key_file;
    protect->add_option("input", input_image, "input PNG")->required();
    protect->add_option("--out", out_base, "output bundle base path");
    protect->add_option("--key-file", key_file, "use a fixed key from file (tests)");
    add_common(protect, true);

    // recover
    auto* recover = app.add_subcommand("recover", "recover from a protected bundle");
    std::string bundle_base, key_hex, rec_out;
    recover->add_option("bundle", bundle_base, "bundle base path (without .png)")->required();
    recover->add_option("--key", key_hex, "protection key (hex); env SIDER_KEY also accepted");
    recover->add_option("--key-file", key_file, "key file (tests)");
    recover->add_option("--out", rec_out, "output PNG path");
    add_common(recover, true);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "end-to-end batch evaluation");
    std::string out_dir = "eval_out";
    bool ablate = false;
    evaluate->add_option("--out-dir", out_dir, "report directory");
    evaluate->add_flag("--ablate-momentum", ablate, "add a mu=0 ablation run");
    add_common(evaluate, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(component, config_path, seed_override, ckpt_dir);

        if (*protect)
            return cmd_protect(input_image, config_path, seed_override, ckpt_dir, out_base, key_file,
                               json_out);

        if (*recover) {
            ProtectedBundle b;
            try {
                b = load_bundle(bundle_base);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return kExitCorruptBundle;
            }
            std::optional<ProtectionKey> key;
            if (!key_file.empty()) {
                key = read_key_file(key_file);
            } else {
                std::string hex = key_hex;
                if (hex.empty()) {
                    const char* env = std::getenv("SIDER_KEY");
                    if (env) hex = env;
                }
                if (!hex.empty()) key = ProtectionKey::from_hex(hex, b.key_salt);
            }
            PipelineConfig cfg = load_config(config_path, seed_override);
            pipeline::Stack st = pipeline::load_stack(cfg, ckpt_dir, false, false, true);
            auto [img, path] = st.crm->recover(b, key);
            std::string out_path = rec_out.empty() ? bundle_base + ".recovered.png" : rec_out;
            write_png(out_path, img);
            const char* tag = path == RecoveryPath::Authorized ? "AUTHORIZED" : "UNAUTHORIZED";
            if (json_out) {
                nlohmann::json j;
                j["path"] = tag;
                j["output"] = out_path;
                std::cout << j.dump(2) << "\n";
            } else {
                std::cout << tag << "\n";
            }
            return 0;
        }

        if (*evaluate) {
            PipelineConfig cfg = load_config(config_path, seed_override);
            pipeline::Stack st = pipeline::load_stack(cfg, ckpt_dir, true, true, true);
            DatasetManifest data = pipeline::load_data(cfg);
            auto t0 = std::chrono::steady_clock::now();
            pipeline::EvalOutcome out = pipeline::evaluate(st, data, ablate, std::cerr);
            auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

            fs::create_directories(out_dir);
            std::string qj = (fs::path(out_dir) / "quality_report.json").string();
            std::string qc = (fs::path(out_dir) / "quality_report.csv").string();
            std::ofstream(qj) << quality_report_json(out.quality) << "\n";
            std::ofstream(qc) << quality_report_csv(out.quality);
            std::vector<std::string> outputs = {qj, qc};
            for (size_t i = 0; i < out.protection.size(); ++i) {
                std::string pj = (fs::path(out_dir) / ("protection_report_rot" + std::to_string(i) + ".json"))
                                     .string();
                std::string pc = (fs::path(out_dir) / ("protection_report_rot" + std::to_string(i) + ".csv"))
                                     .string();
                std::ofstream(pj) << protection_report_json(out.protection[i]) << "\n";
                std::ofstream(pc) << protection_report_csv(out.protection[i]);
                outputs.push_back(pj);
                outputs.push_back(pc);
            }
            std::string sj = (fs::path(out_dir) / "evaluate_summary.json").string();
            std::ofstream(sj) << pipeline::eval_outcome_json(out) << "\n";
            outputs.push_back(sj);

            std::vector<std::string> ckpts;
            for (const char* c : {pipeline::kDenoiserCkpt, pipeline::kEmbeddersCkpt, pipeline::kCrmCkpt})
                ckpts.push_back(pipeline::file_hash_hex((fs::path(ckpt_dir) / c).string()));
            std::ofstream((fs::path(out_dir) / "run_manifest.json").string())
                << pipeline::run_manifest_json(cfg, ckpts, outputs, dt) << "\n";

            if (json_out)
                std::cout << pipeline::eval_outcome_json(out) << "\n";
            else {
                std::cout << "images: " << out.n_images << "\n";
                std::cout << "cover ASR on held-out models: " << out.asr_overall << "%\n";
                if (out.ablation_ran)
                    std::cout << "cover ASR with mu=0: " << out.asr_ablation << "%\n";
                std::cout << "reports in " << out_dir << "\n";
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const pipeline::MissingCheckpoint& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingCkpt;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (app.got_subcommand("train")) return kExitTraining;
        return 1;
    }
    return 0;
}
